"""Command-line interface.

Exit status: 0 on success, 1 on a physics or convergence failure, 2 on a
usage, configuration or input-file error.  Log verbosity is taken from the
``MATTERWAVE_LOG`` environment variable (``debug``, ``info``, ``warning``, ...).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, units
from .analysis import FluxAccumulator, matter_wave_profile, spectral_peaks
from .config import parse_config
from .errors import InputError, MatterWaveError, PhysicsError
from .grid import REACTANT, TwoChannelWavefunction, build_grid
from .propagator import Propagator

log = logging.getLogger("matterwave")

EXIT_OK, EXIT_PHYSICS, EXIT_USAGE = 0, 1, 2
LOG_VARIABLE = "MATTERWAVE_LOG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configure_logging():
    level = os.environ.get(LOG_VARIABLE, "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _outdir(args, cfg) -> Path:
    return Path(args.output if args.output else cfg.output.directory)


def cmd_eigenstates(args, cfg) -> int:
    from .physics import basis_from_config

    basis = basis_from_config(cfg)
    rows = [[v, float(e), float(e / units.EV)] for v, e in enumerate(basis.energies)]
    text = io.csv_text(["v", "E_hartree", "E_eV"], rows)
    sys.stdout.write(text)
    out = _outdir(args, cfg)
    io.atomic_write(out / "eigenstates.csv", text)
    io.write_csv(out / "chi.csv", ["r_bohr"] + [f"chi_{v}" for v in range(basis.v_max + 1)],
                 ([float(r), *map(float, basis.states[:, i])] for i, r in enumerate(basis.grid.r)))
    return EXIT_OK


def cmd_potentials(args, cfg) -> int:
    from .physics import hamiltonian_from_config

    h = hamiltonian_from_config(cfg)
    g = h.grid
    out = _outdir(args, cfg) / "potentials.csv"

    def rows():
        for i, r in enumerate(g.r):
            for j, z in enumerate(g.Z):
                yield [float(r), float(z), float(h.v_r[i, j]), float(h.v_p[i, j]), float(h.w[i, j])]

    io.write_csv(out, ["r_bohr", "Z_bohr", "V_R_hartree", "V_P_hartree", "W_hartree"], rows())
    print(f"spectral bounds [{h.e_min!r}, {h.e_max!r}] hartree; wrote {out}")
    return EXIT_OK


def cmd_propagate(args, cfg) -> int:
    from .control import backward_propagate, stops_from_config
    from .physics import build_physics

    phys = build_physics(cfg)
    out = _outdir(args, cfg)
    back_stop, _ = stops_from_config(cfg.control)
    if args.direction == "backward":
        if args.input:
            raise InputError("backward propagation starts from the configured trial; drop --input")
        res = backward_propagate(phys.trial, phys.hamiltonian, phys.backward_plan, back_stop)
        tau = abs(phys.backward_plan.tau)
        io.write_csv(out / "populations.csv", ["step", "time_au", "reactant_population"],
                     ([i, i * tau, float(p)] for i, p in enumerate(res.populations)))
        io.write_snapshot(res.psi1, out / "backward.wksh")
        print(f"backward: {res.steps} steps, {res.elapsed:.6g} au, reactant population "
              f"{res.reactant_population:.6g}, status {res.status}")
        return EXIT_OK
    if not args.input:
        raise InputError("forward propagation needs --input SNAPSHOT")
    psi = io.read_snapshot(args.input, phys.grid)
    if not isinstance(psi, TwoChannelWavefunction):
        values = np.zeros((2,) + phys.grid.shape, dtype=complex)
        values[REACTANT] = psi.values
        psi = TwoChannelWavefunction(values, phys.grid)
    total = args.time if args.time is not None else cfg.control.forward_max_time
    prop = Propagator(phys.hamiltonian, phys.forward_plan, phys.absorber)
    tau = phys.forward_plan.tau
    values = np.array(psi.values)
    da = phys.grid.area_element
    flux_r = flux_p = 0.0
    rows = [[0, 0.0, 0.0, 0.0, float(np.vdot(values, values).real * da)]]
    acc = FluxAccumulator(phys.basis)
    for step in range(1, max(1, math.ceil(total / tau)) + 1):
        values, removed, (ar, ap) = prop.step_absorbing(values)
        acc.add(removed[1])
        flux_r += ar
        flux_p += ap
        rows.append([step, step * tau, flux_p, flux_r, float(np.vdot(values, values).real * da)])
    io.write_csv(out / "flux.csv", ["step", "time_au", "product_flux", "reactant_flux", "norm2"], rows)
    io.write_csv(out / "yields.csv", ["v", "yield"], ([v, float(y)] for v, y in enumerate(acc.yields())))
    io.write_snapshot(TwoChannelWavefunction(values, phys.grid), out / "forward.wksh")
    print(f"forward: {len(rows) - 1} steps, product flux {flux_p:.6g}, reactant flux {flux_r:.6g}")
    return EXIT_OK


def _write_profile(out: Path, psi, coordinate: float) -> list:
    prof = matter_wave_profile(psi, coordinate)
    io.write_profile(out / "profile.csv", prof.coordinates, prof.profile)
    io.write_spectrum(out / "spectrum.csv", prof.k, prof.spectrum)
    return list(prof.k[spectral_peaks(prof.power)])


def cmd_shape(args, cfg) -> int:
    from .control import COLLAPSED, run_control_loop

    out = _outdir(args, cfg)
    stride = cfg.output.snapshot_stride

    def flush(state, record):
        io.write_ledger(state.ledger, out / "ledger.csv", out / "diagnostics.csv")
        if state.shaped_reactant is not None:
            io.write_snapshot(state.shaped_reactant, out / "shaped.wksh")
            if stride and record.iteration % stride == 0:
                io.write_snapshot(state.shaped_reactant, out / f"shaped_{record.iteration:03d}.wksh")
                io.write_snapshot(state.trial.field, out / f"trial_{record.iteration:03d}.wksh")
        print(f"iteration {record.iteration}: flux {record.total_flux:.6g}, "
              f"yield_{state.trial.v_target} {record.yields[state.trial.v_target]:.6g}, "
              f"status {record.status}", flush=True)

    res = run_control_loop(cfg, on_iteration=flush)
    io.write_ledger(res.ledger, out / "ledger.csv", out / "diagnostics.csv")
    if res.best_shaped is None:
        print(f"no shaped packet produced (status {res.status})")
        return EXIT_PHYSICS
    io.write_snapshot(res.shaped, out / "shaped.wksh")
    io.write_snapshot(res.best_shaped, out / "best.wksh")
    peaks = _write_profile(out, res.best_shaped, cfg.output.profile_coordinate)
    print(f"status {res.status}; best iteration {res.best_iteration}; "
          f"momentum peaks at k = {', '.join(f'{k:.4g}' for k in peaks)} 1/bohr")
    return EXIT_PHYSICS if res.status == COLLAPSED else EXIT_OK


def cmd_analyze(args, cfg) -> int:
    grid = None
    coordinate = args.coordinate
    if cfg is not None:
        g = cfg.grid
        grid = build_grid(g.nr, g.nZ, g.dr, g.dZ, g.r0, g.Z0, g.mu_r, g.M_Z)
        if coordinate is None:
            coordinate = cfg.output.profile_coordinate
    if coordinate is None:
        from .config import OutputConfig

        coordinate = OutputConfig().profile_coordinate
    psi = io.read_snapshot(args.snapshot, grid)
    if not isinstance(psi, TwoChannelWavefunction):
        values = np.zeros((2,) + psi.grid.shape, dtype=complex)
        values[REACTANT] = psi.values
        psi = TwoChannelWavefunction(values, psi.grid)
    out = Path(args.output) if args.output else Path(args.snapshot).parent
    peaks = _write_profile(out, psi, coordinate)
    print(f"{len(peaks)} momentum peak(s) at k = {', '.join(f'{k:.4g}' for k in peaks)} 1/bohr")
    return EXIT_OK


COMMANDS = {
    "eigenstates": (cmd_eigenstates, "vibrational energies and eigenfunctions of the product"),
    "potentials": (cmd_potentials, "dump both surfaces and the coupling on the grid"),
    "propagate": (cmd_propagate, "single backward or forward propagation"),
    "shape": (cmd_shape, "run the iterative shaping loop"),
    "analyze": (cmd_analyze, "matter-wave profile and momentum spectrum of a snapshot"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matterwave", description="Two-channel wavepacket dynamics and matter-wave shaping.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH", required=name != "analyze", help="run configuration file")
        p.add_argument("-o", "--output", metavar="DIR", help="output directory (default: [output] directory)")
        if name == "propagate":
            p.add_argument("--direction", choices=("forward", "backward"), default="backward")
            p.add_argument("--input", metavar="SNAPSHOT", help="initial state for forward runs")
            p.add_argument("--time", type=float, metavar="AU", help="forward propagation time (atomic units)")
        if name == "analyze":
            p.add_argument("snapshot", help="snapshot file (reactant channel is analysed)")
            p.add_argument("--coordinate", type=float, metavar="BOHR", help="fixed adsorbate height")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    _configure_logging()
    try:
        cfg = parse_config(args.config) if args.config else None
        return COMMANDS[args.command][0](args, cfg)
    except PhysicsError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MatterWaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
