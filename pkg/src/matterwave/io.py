"""Binary wavefunction snapshots and CSV outputs.

Snapshot layout (little-endian)::

    b"WKSH"  u32 version  u32 nr  u32 nZ
    f64 dr   f64 dZ       f64 r0  f64 Z0
    u8 channel count
    channel-major, r fastest within a channel: interleaved (re, im) f64 pairs

All files are written to a temporary sibling and renamed into place.
"""
from __future__ import annotations

import csv
import io as _io
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import SnapshotError, SnapshotTruncatedError, SnapshotVersionError
from .grid import ComplexField2D, Grid2D, TwoChannelWavefunction

MAGIC = b"WKSH"
VERSION = 1
_HEADER = struct.Struct("<4sIII4dB")
MAX_POINTS = 1 << 31


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def snapshot_bytes(field) -> bytes:
    g = field.grid
    values = field.values.reshape((-1,) + g.shape)
    channels = values.shape[0]
    header = _HEADER.pack(MAGIC, VERSION, g.nr, g.nZ, g.dr, g.dZ, g.r0, g.Z0, channels)
    # r fastest: store each channel transposed to (nZ, nr)
    payload = np.ascontiguousarray(values.transpose(0, 2, 1)).astype("<c16", copy=False)
    return header + payload.tobytes()


def write_snapshot(field, path) -> None:
    atomic_write(path, snapshot_bytes(field))


def read_snapshot_bytes(data: bytes, grid: Grid2D | None = None):
    if len(data) < _HEADER.size:
        raise SnapshotTruncatedError(f"snapshot header needs {_HEADER.size} bytes, got {len(data)}")
    magic, version, nr, nZ, dr, dZ, r0, Z0, channels = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise SnapshotVersionError(version, VERSION)
    if channels not in (1, 2):
        raise SnapshotError(f"unsupported channel count {channels}")
    points = nr * nZ * channels
    if nr < 2 or nZ < 2 or points > MAX_POINTS:
        raise SnapshotError(f"snapshot dimensions {channels}x{nr}x{nZ} out of range")
    need = _HEADER.size + 16 * points
    if len(data) < need:
        raise SnapshotTruncatedError(f"snapshot payload truncated: {len(data)} of {need} bytes")
    if len(data) > need:
        raise SnapshotError(f"{len(data) - need} trailing bytes after snapshot payload")
    if not all(math.isfinite(x) for x in (dr, dZ, r0, Z0)):
        raise SnapshotError("non-finite grid geometry in snapshot header")
    if grid is None:
        grid = Grid2D(nr, nZ, dr, dZ, r0, Z0)
    elif (grid.nr, grid.nZ, grid.dr, grid.dZ, grid.r0, grid.Z0) != (nr, nZ, dr, dZ, r0, Z0):
        raise SnapshotError("snapshot geometry does not match the supplied grid")
    raw = np.frombuffer(data, dtype="<c16", count=points, offset=_HEADER.size)
    values = np.ascontiguousarray(raw.reshape(channels, nZ, nr).transpose(0, 2, 1), dtype=np.complex128)
    if channels == 1:
        return ComplexField2D(values[0], grid)
    return TwoChannelWavefunction(values, grid)


def read_snapshot(path, grid: Grid2D | None = None):
    """Read a snapshot; one channel gives a ComplexField2D, two a TwoChannelWavefunction.

    The file carries no masses; pass ``grid`` to attach a full :class:`Grid2D`
    (its geometry must agree with the header).  Otherwise masses default to 1.
    """
    return read_snapshot_bytes(Path(path).read_bytes(), grid)


def format_float(x: float) -> str:
    return repr(float(x))


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write(path, csv_text(header, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def ledger_header(v_max: int) -> list[str]:
    return (["iteration", "total_flux"] + [f"yield_{v}" for v in range(v_max + 1)]
            + ["unassigned", "trial_energy", "selected_energy"])


def ledger_rows(ledger):
    for rec in ledger.records:
        yield [rec.iteration, float(rec.total_flux), *map(float, rec.yields), float(rec.unassigned),
               float(rec.trial_energy), float(rec.selected_energy)]


DIAGNOSTIC_HEADER = ["iteration", "reactant_absorbed", "residual_norm", "selection_discarded",
                     "backward_reactant_population", "overlap_peak", "peak_time",
                     "box_r_min", "box_r_max", "box_Z_min", "box_Z_max", "conservation_error", "status"]


def diagnostic_rows(ledger):
    for rec in ledger.records:
        box = list(rec.box) if rec.box else [math.nan] * 4
        yield [rec.iteration, float(rec.reactant_absorbed), float(rec.residual_norm),
               float(rec.selection_discarded), float(rec.backward_reactant_population),
               float(rec.overlap_peak), float(rec.peak_time), *map(float, box),
               float(rec.conservation_error), rec.status]


def write_ledger(ledger, path, diagnostics_path=None) -> None:
    write_csv(path, ledger_header(ledger.v_max), ledger_rows(ledger))
    if diagnostics_path is not None:
        write_csv(diagnostics_path, DIAGNOSTIC_HEADER, diagnostic_rows(ledger))


def read_ledger(path) -> dict[str, np.ndarray]:
    header, rows = read_csv(path)
    cols = list(zip(*rows)) if rows else [[] for _ in header]
    return {name: np.array([float(x) for x in col]) for name, col in zip(header, cols)}


def write_spectrum(path, k, amplitude) -> None:
    a = np.asarray(amplitude)
    write_csv(path, ["k_au", "re", "im", "abs2"],
              ([float(kk), float(z.real), float(z.imag), float(abs(z) ** 2)] for kk, z in zip(k, a)))


def write_profile(path, coords, values) -> None:
    write_csv(path, ["coordinate_bohr", "re", "im", "abs2"],
              ([float(x), float(z.real), float(z.imag), float(abs(z) ** 2)] for x, z in zip(coords, values)))
