"""Assemble grid, Hamiltonian, basis, trial, plans and absorber from a run config."""
from __future__ import annotations

import logging
from dataclasses import dataclass

from .config import RunConfig
from .grid import Grid2D, build_grid, set_fft_backend
from .hamiltonian import TwoChannelHamiltonian
from .propagator import BACKWARD, FORWARD, Absorber, ChebyshevPlan, make_absorber, make_plan
from .vibrational import TrialState, VibrationalBasis, make_trial, solve_bound_states

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Physics:
    config: RunConfig
    grid: Grid2D
    hamiltonian: TwoChannelHamiltonian
    basis: VibrationalBasis
    trial: TrialState
    forward_plan: ChebyshevPlan
    backward_plan: ChebyshevPlan
    absorber: Absorber


def grid_from_config(cfg: RunConfig) -> Grid2D:
    g = cfg.grid
    return build_grid(g.nr, g.nZ, g.dr, g.dZ, g.r0, g.Z0, g.mu_r, g.M_Z)


def hamiltonian_from_config(cfg: RunConfig) -> TwoChannelHamiltonian:
    return TwoChannelHamiltonian.from_model(grid_from_config(cfg), cfg.potential,
                                            refine_bounds=cfg.propagation.refine_bounds)


def basis_from_config(cfg: RunConfig, h: TwoChannelHamiltonian | None = None) -> VibrationalBasis:
    h = hamiltonian_from_config(cfg) if h is None else h
    return solve_bound_states(h, cfg.trial.Z_ref, cfg.trial.v_max)


def build_physics(cfg: RunConfig) -> Physics:
    p = cfg.propagation
    set_fft_backend(p.fft_backend)
    h = hamiltonian_from_config(cfg)
    basis = basis_from_config(cfg, h)
    t = cfg.trial
    trial = make_trial(basis, t.v_target, t.Z_center, t.sigma_Z, t.p_Z)
    fwd = make_plan(h, nu_tau=p.nu_tau, tolerance=p.tolerance, direction=FORWARD)
    bwd = make_plan(h, nu_tau=p.nu_tau, tolerance=p.tolerance, direction=BACKWARD)
    absorber = make_absorber(h.grid, p.absorber_width_Z, p.absorber_strength, p.absorber_width_r)
    log.info("grid %dx%d, spectrum [%.4g, %.4g] Ha, tau %.4g au, order %d, Z_ref %.3g bohr",
             h.grid.nr, h.grid.nZ, h.e_min, h.e_max, fwd.tau, fwd.order, basis.Z_ref)
    return Physics(cfg, h.grid, h, basis, trial, fwd, bwd, absorber)
