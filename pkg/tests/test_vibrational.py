import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from matterwave.errors import GeometryError, InsufficientWellError, InvalidParameterError
from matterwave.grid import PRODUCT, TwoChannelWavefunction, build_grid
from matterwave.hamiltonian import PotentialModel, TwoChannelHamiltonian, energy_expectation, lih_masses
from matterwave.vibrational import (FLAT_TOLERANCE, factorization_residual, flat_region_start, fourier_kinetic_matrix,
                                    gaussian_packet, make_trial, solve_bound_states)

from .oracles import dense_kinetic_1d, morse_levels


def separable_h(grid, v_of_r, v_of_z=None):
    r, z = grid.meshgrid()
    vp = v_of_r(r) + (0.0 if v_of_z is None else v_of_z(z))
    return TwoChannelHamiltonian(grid, np.full(grid.shape, 10.0), vp, np.zeros(grid.shape))


@pytest.fixture(scope="module")
def morse_basis():
    mu, M = lih_masses()
    m = PotentialModel(v_cap=None)
    g = build_grid(256, 64, 0.1, 0.1, r0=1.0, mu_r=mu, M_Z=M)
    h = separable_h(g, m.morse_product)
    return m, solve_bound_states(h, v_max=8)


def test_fourier_kinetic_matrix_matches_dft_sum():
    t = fourier_kinetic_matrix(12, 0.3, 2.5)
    assert np.max(np.abs(t - dense_kinetic_1d(12, 0.3, 2.5).real)) < 1e-12
    assert np.allclose(t, t.T)


def test_harmonic_levels():
    g = build_grid(128, 8, 0.125, 0.5, r0=-8.0, mu_r=1.0, M_Z=1.0)
    b = solve_bound_states(separable_h(g, lambda r: 0.5 * r**2), v_max=5)
    assert np.max(np.abs(b.energies - (np.arange(6) + 0.5))) < 1e-8


def test_morse_levels(morse_basis):
    m, b = morse_basis
    exact = morse_levels(m.De, m.a, lih_masses()[0], 6)
    assert np.max(np.abs(b.energies[:7] / exact - 1.0)) < 1e-6


def test_orthonormal(morse_basis):
    _, b = morse_basis
    gram = b.states @ b.states.T * b.grid.dr
    assert np.max(np.abs(gram - np.eye(len(gram)))) < 1e-10


def test_sign_convention(morse_basis):
    _, b = morse_basis
    for s in b.states:
        assert s[np.argmax(np.abs(s))] > 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bessel_inequality(seed):
    g = build_grid(64, 4, 0.2, 0.5, r0=-6.4, mu_r=1.0, M_Z=1.0)
    b = solve_bound_states(separable_h(g, lambda r: 0.5 * r**2), v_max=6)
    f = np.random.default_rng(seed).standard_normal(g.nr) + 0j
    c = b.overlaps(f)
    assert np.sum(np.abs(c) ** 2) <= np.sum(np.abs(f) ** 2) * g.dr * (1 + 1e-12)


def test_insufficient_well():
    g = build_grid(64, 4, 0.2, 0.5, r0=-6.4)
    with pytest.raises(InsufficientWellError):
        solve_bound_states(separable_h(g, lambda r: 0.5 * np.minimum(r**2, 4.0)), v_max=5)


def test_chi_index_checked(morse_basis):
    _, b = morse_basis
    with pytest.raises(InvalidParameterError):
        b.chi(9)


def test_flat_region_start():
    g = build_grid(32, 100, 0.1, 0.1, r0=1.0)
    h = separable_h(g, lambda r: 20.0 * (r - 2.55) ** 2, lambda z: 0.5 * np.exp(-2.0 * z))
    z_ref = flat_region_start(h)
    # 0.5 exp(-2 Z) < 1e-8 from Z = ln(5e7)/2 onwards
    assert z_ref == pytest.approx(math.log(5e7) / 2, abs=0.1)
    assert solve_bound_states(h, v_max=2).Z_ref == pytest.approx(z_ref)


def test_gaussian_packet_normalised():
    z = np.linspace(-20, 20, 4001)
    g = gaussian_packet(z, 1.0, 0.7, 3.0)
    assert np.sum(np.abs(g) ** 2) * (z[1] - z[0]) == pytest.approx(1.0, rel=1e-10)


def trial_setup():
    mu, M = lih_masses()
    m = PotentialModel()
    g = build_grid(256, 256, 0.1, 0.1, r0=1.0, mu_r=mu, M_Z=M)
    h = TwoChannelHamiltonian.from_model(g, m)
    return h, solve_bound_states(h, v_max=6)


def test_trial_energy_in_flat_region():
    h, b = trial_setup()
    sigma, p = 0.8, 12.0
    t = make_trial(b, 4, 15.0, sigma, p)
    M = h.grid.M_Z
    expected = b.energies[4] + p**2 / (2 * M) + 1.0 / (4 * M * sigma**2)
    # E_v is taken where V_P is flat only to FLAT_TOLERANCE
    assert energy_expectation(t.field, h) == pytest.approx(expected, abs=2 * FLAT_TOLERANCE)
    assert t.field.norm() == pytest.approx(1.0, abs=1e-13)
    assert np.all(t.field.values[0] == 0)
    assert factorization_residual(t.field, b.chi(4)) < 1e-14


def test_plane_wave_is_local_eigenstate():
    h, b = trial_setup()
    g = h.grid
    k = g.kZ[7]
    psi = TwoChannelWavefunction.from_channels(None, np.outer(b.chi(2), np.exp(1j * k * g.Z)), g)
    hpsi = h.apply_array(np.array(psi.values))
    far = g.Z > 14.0
    lhs = hpsi[PRODUCT][:, far]
    rhs = (b.energies[2] + k**2 / (2 * g.M_Z)) * psi.values[PRODUCT][:, far]
    assert np.max(np.abs(lhs - rhs)) < 1e-7


def test_trial_must_fit_grid():
    h, b = trial_setup()
    with pytest.raises(GeometryError):
        make_trial(b, 4, 24.5, 0.8, 10.0)
    with pytest.raises(InvalidParameterError):
        make_trial(b, 4, 10.0, 0.0, 10.0)


def test_with_envelope_renormalises():
    h, b = trial_setup()
    t = make_trial(b, 3, 10.0, 1.0, 5.0)
    t2 = t.with_envelope(3.0 * t.envelope)
    assert np.allclose(t2.envelope, t.envelope)
    assert t2.field.norm() == pytest.approx(1.0)
    assert t2.gaussian is t.gaussian
