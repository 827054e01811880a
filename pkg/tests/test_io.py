import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from matterwave import io
from matterwave.analysis import FluxLedger, IterationRecord
from matterwave.errors import SnapshotError, SnapshotTruncatedError, SnapshotVersionError
from matterwave.grid import ComplexField2D, TwoChannelWavefunction, build_grid

from .conftest import random_field


def _bits(a):
    return np.ascontiguousarray(a).view(np.uint64)


def test_snapshot_round_trip_is_bit_exact(tmp_path, rng):
    for i in range(100):
        nr, nZ = (int(n) for n in rng.integers(2, 24, size=2))
        g = build_grid(nr, nZ, float(rng.uniform(0.01, 1)), float(rng.uniform(0.01, 1)),
                       float(rng.normal()), float(rng.normal()))
        if i % 2:
            f = TwoChannelWavefunction(random_field(rng, (2, nr, nZ)) * 10.0 ** rng.integers(-300, 300), g)
        else:
            f = ComplexField2D(random_field(rng, (nr, nZ)), g)
        path = tmp_path / f"f{i}.wksh"
        io.write_snapshot(f, path)
        back = io.read_snapshot(path, g)
        assert type(back) is type(f)
        assert np.array_equal(_bits(back.values), _bits(f.values))


def test_snapshot_special_values_survive(tmp_path):
    g = build_grid(2, 3, 0.1, 0.2)
    v = np.array([[complex(np.nan, -0.0), complex(np.inf, 5e-324), 1], [-np.inf, 0, 1j]])
    io.write_snapshot(ComplexField2D(v, g), tmp_path / "s.wksh")
    back = io.read_snapshot(tmp_path / "s.wksh")
    assert np.array_equal(_bits(back.values), _bits(v))


def test_snapshot_layout(small_grid):
    g = small_grid
    values = np.zeros(g.shape, dtype=complex)
    values[1, 0] = 1 + 2j  # second r point, first Z point
    values[0, 1] = 3 + 4j
    data = io.snapshot_bytes(ComplexField2D(values, g))
    magic, version, nr, nZ, dr, dZ, r0, Z0, ch = struct.unpack_from("<4sIII4dB", data)
    assert (magic, version, nr, nZ, ch) == (b"WKSH", 1, 16, 12, 1)
    assert (dr, dZ, r0, Z0) == (0.3, 0.4, 1.0, -0.5)
    payload = np.frombuffer(data, dtype="<f8", offset=struct.calcsize("<4sIII4dB"))
    # r fastest: element 1 is (r1, Z0), element nr is (r0, Z1)
    assert tuple(payload[2:4]) == (1.0, 2.0)
    assert tuple(payload[2 * 16: 2 * 16 + 2]) == (3.0, 4.0)


def test_truncated_snapshot(tmp_path, small_grid, rng):
    data = io.snapshot_bytes(ComplexField2D(random_field(rng, small_grid.shape), small_grid))
    for cut in (3, 40, len(data) - 1):
        with pytest.raises(SnapshotTruncatedError):
            io.read_snapshot_bytes(data[:cut])
    with pytest.raises(SnapshotError):
        io.read_snapshot_bytes(data + b"\0")


def test_version_and_magic(small_grid, rng):
    data = bytearray(io.snapshot_bytes(ComplexField2D(random_field(rng, small_grid.shape), small_grid)))
    bumped = bytes(data[:4]) + struct.pack("<I", 2) + bytes(data[8:])
    with pytest.raises(SnapshotVersionError) as exc:
        io.read_snapshot_bytes(bumped)
    assert exc.value.found == 2 and exc.value.expected == 1
    assert "2" in str(exc.value) and "1" in str(exc.value)
    with pytest.raises(SnapshotError):
        io.read_snapshot_bytes(b"XXXX" + bytes(data[4:]))


def test_dimension_checks(small_grid, rng):
    data = io.snapshot_bytes(ComplexField2D(random_field(rng, small_grid.shape), small_grid))
    huge = data[:8] + struct.pack("<II", 1 << 20, 1 << 20) + data[16:]
    with pytest.raises(SnapshotError):
        io.read_snapshot_bytes(huge)
    other = build_grid(16, 12, 0.3, 0.5, r0=1.0, Z0=-0.5)
    with pytest.raises(SnapshotError):
        io.read_snapshot_bytes(data, other)


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=200))
def test_reader_is_total(blob):
    try:
        io.read_snapshot_bytes(b"WKSH" + blob)
    except SnapshotError:
        pass


def test_atomic_write_leaves_no_temporaries(tmp_path):
    io.atomic_write(tmp_path / "sub" / "a.txt", "x")
    io.atomic_write(tmp_path / "sub" / "a.txt", "y")
    assert (tmp_path / "sub" / "a.txt").read_text() == "y"
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["a.txt"]


def _ledger(rng, n=6, v_max=10):
    ledger = FluxLedger(v_max)
    for it in range(1, n + 1):
        y = rng.dirichlet(np.ones(v_max + 2))[:-1] * rng.uniform()
        ledger.append(IterationRecord(it, float(rng.uniform()), y, float(rng.uniform()), float(-rng.uniform()),
                                      float(-rng.uniform()) * 1e-17, reactant_absorbed=float(rng.uniform()),
                                      residual_norm=float(rng.uniform()) * 1e-9, box=(1.0, 2.0, 3.0, 4.0),
                                      status="converged"))
    return ledger


def test_ledger_csv_round_trip_is_exact(tmp_path, rng):
    ledger = _ledger(rng)
    io.write_ledger(ledger, tmp_path / "ledger.csv", tmp_path / "diag.csv")
    header, rows = io.read_csv(tmp_path / "ledger.csv")
    assert header == (["iteration", "total_flux"] + [f"yield_{v}" for v in range(11)]
                      + ["unassigned", "trial_energy", "selected_energy"])
    cols = io.read_ledger(tmp_path / "ledger.csv")
    for i, rec in enumerate(ledger.records):
        assert cols["total_flux"][i] == rec.total_flux
        assert cols["selected_energy"][i] == rec.selected_energy
        assert cols["trial_energy"][i] == rec.trial_energy
        assert cols["unassigned"][i] == rec.unassigned
        for v in range(11):
            assert cols[f"yield_{v}"][i] == rec.yields[v]
    dh, drows = io.read_csv(tmp_path / "diag.csv")
    assert dh == io.DIAGNOSTIC_HEADER
    assert [float(r[dh.index("residual_norm")]) for r in drows] == [r.residual_norm for r in ledger.records]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=8))
def test_csv_float_round_trip(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    io.write_csv(path, [f"c{i}" for i in range(len(xs))], [xs])
    _, rows = io.read_csv(path)
    assert [float(s) for s in rows[0]] == xs


def test_csv_is_crlf_with_header(tmp_path):
    io.write_spectrum(tmp_path / "s.csv", [0.5, 1.0], [1 + 1j, 2j])
    raw = (tmp_path / "s.csv").read_bytes()
    assert raw.startswith(b"k_au,re,im,abs2\r\n")
    _, rows = io.read_csv(tmp_path / "s.csv")
    assert [float(x) for x in rows[1]] == [1.0, 0.0, 2.0, 4.0]


def test_read_snapshot_is_c_ordered(tmp_path, small_grid, rng):
    f = TwoChannelWavefunction(random_field(rng, (2,) + small_grid.shape), small_grid)
    io.write_snapshot(f, tmp_path / "f.wksh")
    assert io.read_snapshot(tmp_path / "f.wksh").values.flags.c_contiguous
