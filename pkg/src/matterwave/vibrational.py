"""Bound vibrational states of the asymptotic product potential and trial states."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InsufficientWellError, InvalidParameterError
from .grid import PRODUCT, Grid2D, TwoChannelWavefunction, momentum_axis, snap_index
from .hamiltonian import TwoChannelHamiltonian

FLAT_TOLERANCE = 1e-8
EDGE_TOLERANCE = 1e-12


def fourier_kinetic_matrix(n: int, spacing: float, mass: float) -> np.ndarray:
    """Dense periodic Fourier-grid kinetic matrix (real symmetric for the grid's k set)."""
    k2 = momentum_axis(n, spacing) ** 2 / (2.0 * mass)
    t = np.fft.ifft(np.fft.fft(np.eye(n), axis=0) * k2[:, None], axis=0).real
    return 0.5 * (t + t.T)


def flat_region_start(h: TwoChannelHamiltonian, tolerance: float = FLAT_TOLERANCE) -> float:
    """Smallest Z beyond which V_P along the well bottom is constant to ``tolerance``."""
    g = h.grid
    i_min = int(np.argmin(h.v_p[:, -1]))
    line = h.v_p[i_min, :]
    dev = np.abs(line - line[-1]) >= tolerance
    if not dev.any():
        return float(g.Z[0])
    return float(g.Z[min(int(np.nonzero(dev)[0][-1]) + 1, g.nZ - 1)])


@dataclass(frozen=True, eq=False)
class VibrationalBasis:
    energies: np.ndarray
    states: np.ndarray  # (v_max + 1, nr), real, orthonormal with weight dr
    grid: Grid2D
    Z_ref: float
    asymptote: np.ndarray  # V_P(r, Z_ref)
    threshold: float

    @property
    def v_max(self) -> int:
        return len(self.energies) - 1

    def chi(self, v: int) -> np.ndarray:
        if not 0 <= v <= self.v_max:
            raise InvalidParameterError(f"vibrational index {v} outside 0..{self.v_max}")
        return self.states[v]

    def overlaps(self, f: np.ndarray) -> np.ndarray:
        """<chi_v | f> dr for every v; ``f`` may carry trailing axes (r first)."""
        return np.tensordot(self.states, f, axes=(1, 0)) * self.grid.dr


def solve_bound_states(h: TwoChannelHamiltonian, Z_ref: float | None = None, v_max: int = 10) -> VibrationalBasis:
    """Diagonalise -1/(2 mu_r) d^2/dr^2 + V_P(r, Z_ref) on the Fourier grid."""
    g = h.grid
    if Z_ref is None:
        Z_ref = flat_region_start(h)
    iz = snap_index(Z_ref, g.Z0, g.dZ, g.nZ)
    v = np.array(h.v_p[:, iz])
    hmat = fourier_kinetic_matrix(g.nr, g.dr, g.mu_r)
    hmat[np.diag_indices_from(hmat)] += v
    e, vecs = np.linalg.eigh(hmat)
    threshold = float(min(v[0], v[-1]))
    n_bound = int(np.count_nonzero(e < threshold))
    if n_bound < v_max + 1:
        raise InsufficientWellError(
            f"V_P(r, Z={g.Z[iz]:.4g}) holds {n_bound} bound states, {v_max + 1} requested")
    states = vecs[:, : v_max + 1].T / math.sqrt(g.dr)
    for s in states:
        if s[np.argmax(np.abs(s))] < 0:
            s *= -1.0
    states = np.ascontiguousarray(states)
    states.flags.writeable = False
    energies = e[: v_max + 1].copy()
    energies.flags.writeable = False
    return VibrationalBasis(energies, states, g, float(g.Z[iz]), v, threshold)


def gaussian_packet(Z: np.ndarray, center: float, sigma: float, momentum: float) -> np.ndarray:
    """(pi sigma^2)^(-1/4) exp(-(Z - c)^2 / 2 sigma^2 + i p (Z - c))."""
    x = Z - center
    return (math.pi * sigma**2) ** -0.25 * np.exp(-0.5 * (x / sigma) ** 2 + 1j * momentum * x)


@dataclass(frozen=True, eq=False)
class TrialState:
    """Product-channel target ``chi_v(r) * envelope(Z)`` with zero reactant channel."""

    v_target: int
    Z_center: float
    sigma_Z: float
    p_Z: float
    field: TwoChannelWavefunction
    chi: np.ndarray
    envelope: np.ndarray  # current Z factor; field[PRODUCT] == outer(chi, envelope)
    gaussian: np.ndarray  # the iteration-1 envelope g(Z), normalised on the grid

    def with_envelope(self, envelope: np.ndarray) -> "TrialState":
        """Same target state with a new Z factor, renormalised."""
        g = self.field.grid
        n = math.sqrt(float(np.vdot(envelope, envelope).real) * g.dZ)
        if n == 0.0:
            raise InvalidParameterError("zero envelope")
        env = envelope / n
        field = TwoChannelWavefunction.from_channels(None, np.outer(self.chi, env), g)
        return TrialState(self.v_target, self.Z_center, self.sigma_Z, self.p_Z, field, self.chi, env, self.gaussian)


def make_trial(basis: VibrationalBasis, v: int, Z_center: float, sigma_Z: float, p_Z: float) -> TrialState:
    """Normalised ``(0, chi_v(r) g(Z))`` with a Gaussian of amplitude width ``sigma_Z``.

    ``p_Z > 0`` describes a molecule leaving the surface.
    """
    g = basis.grid
    if sigma_Z <= 0:
        raise InvalidParameterError("sigma_Z must be positive")
    chi = basis.chi(v)
    env = gaussian_packet(g.Z, Z_center, sigma_Z, p_Z)
    env /= math.sqrt(float(np.vdot(env, env).real) * g.dZ)
    if max(abs(env[0]), abs(env[-1])) > EDGE_TOLERANCE:
        raise GeometryError(
            f"Gaussian at Z={Z_center} with width {sigma_Z} is not contained in the Z grid")
    env.flags.writeable = False
    field = TwoChannelWavefunction.from_channels(None, np.outer(chi, env), g)
    return TrialState(v, float(Z_center), float(sigma_Z), float(p_Z), field, chi, env, env)


def factorization_residual(psi: TwoChannelWavefunction, chi: np.ndarray) -> float:
    """Max deviation of the product channel from its best rank-1 fit ``chi(r) c(Z)``."""
    p = psi.values[PRODUCT]
    c = (chi @ p) / float(chi @ chi)
    return float(np.max(np.abs(p - np.outer(chi, c))))
