import math

import numpy as np
import pytest
from dataclasses import replace

from matterwave.analysis import FluxAccumulator
from matterwave.config import RunConfig
from matterwave.control import (CONVERGED, DECOUPLED, FORWARD_NOT_CONVERGED, NO_REACTION, ForwardStop, SelectionBox, auto_box, backward_propagate,
                                forward_propagate, project, projection_coefficients, run_iterations, select)
from matterwave.errors import (EmptySelectionError, InvalidParameterError, NoSelectablePacketError,
                               ProjectionCollapseError)
from matterwave.grid import PRODUCT, REACTANT, TwoChannelWavefunction, build_grid
from matterwave.hamiltonian import TwoChannelHamiltonian
from matterwave.physics import build_physics
from matterwave.propagator import BACKWARD, FORWARD, make_plan
from matterwave.vibrational import TrialState, factorization_residual, gaussian_packet

from .conftest import random_field


def _toy_trial(grid, rng, v=0):
    """Trial built from an arbitrary normalised real chi and a Gaussian envelope."""
    chi = rng.standard_normal(grid.nr)
    chi /= math.sqrt(float(chi @ chi) * grid.dr)
    env = gaussian_packet(grid.Z, grid.Z[grid.nZ // 2], 3 * grid.dZ, 0.7)
    env /= math.sqrt(float(np.vdot(env, env).real) * grid.dZ)
    field = TwoChannelWavefunction.from_channels(None, np.outer(chi, env), grid)
    return TrialState(v, float(grid.Z[grid.nZ // 2]), 3 * grid.dZ, 0.7, field, chi, env, env)


@pytest.fixture
def grid32():
    return build_grid(32, 32, 0.2, 0.15, r0=0.5, Z0=-1.0, mu_r=3.0, M_Z=7.0)


def test_projection_coefficients_match_direct_sum(grid32, rng):
    trial = _toy_trial(grid32, rng)
    psi3 = TwoChannelWavefunction(random_field(rng, (2, 32, 32)), grid32)
    c = projection_coefficients(psi3, trial)
    direct = np.zeros(32, dtype=complex)
    p = psi3.values[PRODUCT]
    for j in range(32):
        s = 0j
        for i in range(32):
            s += np.conj(trial.chi[i] * trial.gaussian[j]) * p[i, j] * grid32.dr
        direct[j] = s
    assert np.max(np.abs(c - direct)) < 1e-12


def test_projected_trial_is_rank_one_with_empty_reactant(grid32, rng):
    trial = _toy_trial(grid32, rng)
    psi3 = TwoChannelWavefunction(random_field(rng, (2, 32, 32)), grid32)
    new = project(psi3, trial)
    assert factorization_residual(new.field, trial.chi) < 1e-10
    assert np.all(new.field.values[REACTANT] == 0)
    assert new.field.norm() == pytest.approx(1.0, abs=1e-12)
    # the new envelope is c(Z) g(Z) up to normalisation
    expected = projection_coefficients(psi3, trial) * trial.gaussian
    ratio = new.envelope / expected
    assert np.allclose(ratio, ratio[0], rtol=1e-10)


def test_project_previous_envelope_and_validation(grid32, rng):
    trial = _toy_trial(grid32, rng)
    psi3 = TwoChannelWavefunction(random_field(rng, (2, 32, 32)), grid32)
    new = project(psi3, trial, f_envelope="previous", use_envelope="trial")
    assert factorization_residual(new.field, trial.chi) < 1e-10
    with pytest.raises(InvalidParameterError):
        project(psi3, trial, f_envelope="nonsense")
    with pytest.raises(InvalidParameterError):
        project(psi3, trial, use_envelope="nonsense")
    with pytest.raises(InvalidParameterError):
        project(TwoChannelWavefunction.zeros(grid32), trial)


def test_projection_collapse_when_product_is_orthogonal(grid32, rng):
    trial = _toy_trial(grid32, rng)
    other = rng.standard_normal(32)
    other -= (other @ trial.chi) / (trial.chi @ trial.chi) * trial.chi
    values = np.zeros((2, 32, 32), dtype=complex)
    values[PRODUCT] = np.outer(other, trial.gaussian)
    values[REACTANT] = random_field(rng, (32, 32))
    with pytest.raises(ProjectionCollapseError):
        project(TwoChannelWavefunction(values, grid32), trial)


def test_select_keeps_box_and_renormalises(grid32, rng):
    psi = TwoChannelWavefunction(random_field(rng, (2, 32, 32)), grid32).normalized()
    box = SelectionBox(float(grid32.r[4]), float(grid32.r[20]), float(grid32.Z[3]), float(grid32.Z[11]))
    res = select(psi, box)
    out = res.psi2.values
    assert np.all(out[PRODUCT] == 0)
    assert res.psi2.norm() == pytest.approx(1.0, abs=1e-12)
    inside = box.indicator(grid32).astype(bool)
    assert np.all(out[REACTANT][~inside] == 0)
    np.testing.assert_allclose(out[REACTANT][inside] * res.selected_norm, psi.values[REACTANT][inside], rtol=1e-13)
    assert res.selected_norm**2 + res.discarded == pytest.approx(1.0, abs=1e-12)
    assert res.energy is None and res.status == CONVERGED


def test_select_empty_box_raises(grid32, rng):
    values = np.zeros((2, 32, 32), dtype=complex)
    values[PRODUCT] = random_field(rng, (32, 32))
    psi = TwoChannelWavefunction(values, grid32).normalized()
    box = SelectionBox(float(grid32.r[4]), float(grid32.r[20]), float(grid32.Z[3]), float(grid32.Z[11]))
    with pytest.raises(EmptySelectionError):
        select(psi, box)


def _gaussian_reactant(h, rc, zc, s=0.6):
    g = h.grid
    r, Z = g.meshgrid()
    values = np.zeros((2,) + g.shape, dtype=complex)
    values[REACTANT] = np.exp(-((r - rc) ** 2 + (Z - zc) ** 2) / (2 * s * s))
    return TwoChannelWavefunction(values, g).normalized()


def test_auto_box_contains_packet_and_avoids_coupling(coarse_hamiltonian):
    h = coarse_hamiltonian
    psi = _gaussian_reactant(h, 10.0, 1.5)
    box = auto_box(psi, None, h, box_leak=1e-3)
    assert box.is_valid_for(h)
    kept = select(psi, box).selected_norm ** 2
    assert kept > 1 - 1e-3


def test_auto_box_rejects_packet_on_coupling(coarse_hamiltonian):
    h = coarse_hamiltonian
    with pytest.raises(NoSelectablePacketError):
        auto_box(TwoChannelWavefunction.zeros(h.grid), None, h)


def test_auto_box_covers_two_disjoint_packets(coarse_hamiltonian):
    h = coarse_hamiltonian
    a, b = _gaussian_reactant(h, 9.0, 8.0), _gaussian_reactant(h, 13.0, 12.0)
    psi = TwoChannelWavefunction(a.values + b.values, h.grid).normalized()
    box = auto_box(psi, None, h, box_leak=1e-3)
    assert box.r_min < 9.0 - 1.0 and box.r_max > 13.0 + 1.0
    assert box.Z_min < 8.0 - 1.0 and box.Z_max > 12.0 + 1.0
    assert select(psi, box).selected_norm ** 2 > 1 - 1e-3


def test_auto_box_of_single_gaussian_spans_a_few_widths(coarse_hamiltonian):
    h = coarse_hamiltonian
    s = 0.6  # amplitude width; the density has width s / sqrt(2)
    box = auto_box(_gaussian_reactant(h, 10.0, 8.0, s), None, h, box_leak=1e-3)
    for lo, hi, c in ((box.r_min, box.r_max, 10.0), (box.Z_min, box.Z_max, 8.0)):
        assert c - 4 * s <= lo < c - 2 * s / math.sqrt(2)
        assert c + 2 * s / math.sqrt(2) < hi <= c + 4 * s


def test_select_whole_grid_keeps_reactant(grid32, rng):
    psi = TwoChannelWavefunction(random_field(rng, (2, 32, 32)), grid32).normalized()
    g = grid32
    res = select(psi, SelectionBox(float(g.r[0]), float(g.r[-1]), float(g.Z[0]), float(g.Z[-1])))
    p_r, p_p = psi.channel_populations()
    assert res.selected_norm ** 2 == pytest.approx(p_r, rel=1e-12)
    assert res.discarded == pytest.approx(p_p, rel=1e-12)
    np.testing.assert_allclose(res.psi2.values[REACTANT] * res.selected_norm, psi.values[REACTANT], rtol=1e-13)


def test_selection_box_validity(coarse_hamiltonian):
    h = coarse_hamiltonian
    g = h.grid
    model = h.model
    on_coupling = SelectionBox(model.r_c - 0.5, model.r_c + 0.5, model.Z_c - 0.5, model.Z_c + 0.5)
    assert not on_coupling.is_valid_for(h)
    edge = SelectionBox(float(g.r[0]), 10.0, 1.0, 2.0)
    assert not edge.is_valid_for(h)


def _decoupled(h):
    return TwoChannelHamiltonian(h.grid, h.v_r, h.v_p, np.zeros(h.grid.shape))


def test_backward_decoupled_and_no_reaction(coarse_hamiltonian, rng):
    h0 = _decoupled(coarse_hamiltonian)
    trial = _toy_trial(h0.grid, rng)
    plan = make_plan(h0, direction=BACKWARD)
    back = backward_propagate(trial, h0, plan)
    assert back.status == DECOUPLED and back.reactant_population == 0.0
    res = run_iterations(h0, _StubBasis(h0.grid), trial, plan, make_plan(h0), None, max_iterations=3)
    assert res.status == NO_REACTION
    assert len(res.ledger) == 1 and res.ledger.records[0].total_flux == 0.0
    assert res.best_shaped is None


def test_forward_without_coupling_never_overlaps(coarse_hamiltonian, rng):
    h0 = _decoupled(coarse_hamiltonian)
    trial = _toy_trial(h0.grid, rng)
    psi2 = _gaussian_reactant(h0, 10.0, 8.0)
    plan = make_plan(h0)
    stop = ForwardStop(max_time=20 * plan.tau)
    fwd = forward_propagate(psi2, h0, plan, None, _StubBasis(h0.grid), trial, stop)
    assert fwd.status == FORWARD_NOT_CONVERGED
    assert fwd.steps == 20 and max(fwd.overlaps) == 0.0
    assert fwd.product_absorbed == 0.0 and fwd.flux.increments == 0


class _StubBasis:
    def __init__(self, grid, v_max=2):
        self.grid = grid
        self.v_max = v_max


def test_direction_checks(coarse_hamiltonian, rng):
    h = coarse_hamiltonian
    trial = _toy_trial(h.grid, rng)
    with pytest.raises(InvalidParameterError):
        backward_propagate(trial, h, make_plan(h, direction=FORWARD))
    with pytest.raises(InvalidParameterError):
        forward_propagate(trial.field, h, make_plan(h, direction=BACKWARD), None, None, trial)


def small_config(**control) -> RunConfig:
    """Desk model on a 96x96 grid at 0.25 bohr, short runs."""
    cfg = RunConfig()
    cfg = replace(cfg, grid=replace(cfg.grid, nr=96, nZ=96, dr=0.25, dZ=0.25),
                  propagation=replace(cfg.propagation, absorber_width_Z=9.0, absorber_width_r=5.0),
                  control=replace(cfg.control, **{"max_iterations": 2, **control}))
    return cfg


@pytest.fixture(scope="module")
def small_physics():
    return build_physics(small_config())


def test_flux_accounting_on_every_iteration(small_physics):
    p = small_physics
    c = small_config().control
    res = run_iterations(p.hamiltonian, p.basis, p.trial, p.backward_plan, p.forward_plan, p.absorber,
                         max_iterations=c.max_iterations)
    assert len(res.ledger) >= 1
    for rec in res.ledger.records:
        assert rec.conservation_error < 1e-8
        assert rec.yields.sum() <= 1.0 + 1e-12
        assert np.all(rec.yields >= 0)
        assert 0.0 <= rec.total_flux <= 1.0


def test_forward_flux_matches_accumulator(small_physics):
    p = small_physics
    back = backward_propagate(p.trial, p.hamiltonian, p.backward_plan)
    box = auto_box(back.psi1, None, p.hamiltonian)
    sel = select(back.psi1, box, p.hamiltonian)
    fwd = forward_propagate(sel.psi2, p.hamiltonian, p.forward_plan, p.absorber, p.basis, p.trial)
    assert isinstance(fwd.flux, FluxAccumulator)
    # |d|^2 = |pre|^2 (1 - m)^2 never exceeds the absorbed |pre|^2 (1 - m^2)
    assert 0.0 < fwd.flux.removed_weight <= fwd.product_absorbed
    assert fwd.product_absorbed + fwd.reactant_absorbed + fwd.residual_norm == pytest.approx(1.0, abs=1e-8)
    assert fwd.peak_overlap == max(fwd.overlaps[: round(fwd.peak_time / p.forward_plan.tau) + 1])


def test_runs_are_deterministic(small_physics):
    p = small_physics

    def run():
        return run_iterations(p.hamiltonian, p.basis, p.trial, p.backward_plan, p.forward_plan, p.absorber,
                              max_iterations=1)

    a, b = run(), run()
    for ra, rb in zip(a.ledger.records, b.ledger.records):
        assert ra.total_flux == rb.total_flux
        assert np.array_equal(ra.yields, rb.yields)
    assert np.array_equal(a.shaped.values, b.shaped.values)
