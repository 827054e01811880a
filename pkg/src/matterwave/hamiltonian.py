"""Two-channel model Hamiltonian for an atom recombining with an adsorbate.

Coordinates follow one convention for both channels: ``r`` is the
projectile coordinate in the reactant channel and the bond length in the
product channel; ``Z`` is the adsorbate height in the reactant channel and
the molecular centre-of-mass height in the product channel.  The coupling
is localised where the two pictures meet (short r, small Z).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from . import units
from .errors import DegenerateSpectrumError, GridMismatchError, InvalidParameterError
from .grid import PRODUCT, REACTANT, Grid2D, TwoChannelWavefunction, apply_kinetic_array

log = logging.getLogger(__name__)

BOUND_MARGIN = 0.05


def lih_masses() -> tuple[float, float]:
    """(reduced mass, total mass) of 7Li-1H in electron masses."""
    m_li = units.LI7_MASS_AMU * units.AMU
    m_h = units.H_MASS_AMU * units.AMU
    return m_li * m_h / (m_li + m_h), m_li + m_h


@dataclass(frozen=True)
class PotentialModel:
    """Analytic reactant/product surfaces and coupling, all in atomic units.

    Product:   De (1 - exp(-a (r - r_e)))^2 - De + A_Z exp(-b_Z Z)
    Reactant:  D_ads (1 - exp(-a_ads (Z - z_ads)))^2 - D_ads + A_r exp(-b_r r)
    Coupling:  beta exp(-(Z - Z_c)^2 / 2 sigma_c^2) [* exp(-(r - r_c)^2 / 2 sigma_rc^2)]

    Both surfaces are clipped from above at ``v_cap`` (when set) to keep the
    spectral range, and hence the Chebyshev order, small.
    """

    De: float = 2.515 * units.EV
    a: float = 0.35
    r_e: float = 1.5957 * units.ANGSTROM
    A_Z: float = 0.1568
    b_Z: float = 1.5
    D_ads: float = 2.07 * units.EV
    a_ads: float = 1.0
    z_ads: float = 2.031
    A_r: float = 9.8
    b_r: float = 2.0
    beta: float = 0.1 * units.EV
    Z_c: float = 2.2
    sigma_c: float = 0.5
    r_c: float = 3.0
    sigma_rc: float | None = 1.0
    v_cap: float | None = 0.05

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and not math.isfinite(value):
                raise InvalidParameterError(f"potential parameter {f.name} must be finite")
        for name in ("De", "a", "D_ads", "a_ads", "b_Z", "b_r", "sigma_c"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"potential parameter {name} must be positive")
        if self.sigma_rc is not None and self.sigma_rc <= 0:
            raise InvalidParameterError("potential parameter sigma_rc must be positive")

    def morse_product(self, r) -> np.ndarray:
        x = 1.0 - np.exp(-self.a * (np.asarray(r, dtype=float) - self.r_e))
        return self.De * x * x - self.De

    def surfaces(self, grid: Grid2D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """V_R, V_P and W sampled on ``grid`` (Hartree)."""
        r, Z = grid.meshgrid()
        xa = 1.0 - np.exp(-self.a_ads * (Z - self.z_ads))
        v_r = self.D_ads * xa * xa - self.D_ads + self.A_r * np.exp(-self.b_r * r)
        v_p = self.morse_product(r) + self.A_Z * np.exp(-self.b_Z * Z)
        w = self.beta * np.exp(-((Z - self.Z_c) ** 2) / (2.0 * self.sigma_c**2))
        if self.sigma_rc is not None:
            w = w * np.exp(-((r - self.r_c) ** 2) / (2.0 * self.sigma_rc**2))
        if self.v_cap is not None:
            v_r = np.minimum(v_r, self.v_cap)
            v_p = np.minimum(v_p, self.v_cap)
        return v_r, v_p, w

    @property
    def harmonic_frequency(self) -> float:
        """Product-bond frequency a*sqrt(2 De / mu) for the LiH reduced mass."""
        return self.a * math.sqrt(2.0 * self.De / lih_masses()[0])


def _readonly(a, shape, name) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.shape != shape:
        raise GridMismatchError(f"{name} has shape {arr.shape}, grid expects {shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


class TwoChannelHamiltonian:
    """H = T + [[V_R, W], [W, V_P]] on a grid, with Chebyshev normalisation.

    ``omega`` and ``nu`` are the centre and half-width of the spectral bounds,
    so ``H_N = (H - omega) / nu`` has its spectrum inside [-1, 1].
    """

    def __init__(self, grid: Grid2D, v_r, v_p, w, bounds=None, model: PotentialModel | None = None):
        self.grid = grid
        self.v_r = _readonly(v_r, grid.shape, "V_R")
        self.v_p = _readonly(v_p, grid.shape, "V_P")
        self.w = _readonly(w, grid.shape, "W")
        self.model = model
        e_min, e_max = estimate_spectral_bounds(self) if bounds is None else map(float, bounds)
        if not e_max > e_min:
            raise DegenerateSpectrumError(f"spectral bounds are degenerate: [{e_min}, {e_max}]")
        self.e_min = e_min
        self.e_max = e_max
        self.omega = 0.5 * (e_max + e_min)
        self.nu = 0.5 * (e_max - e_min)
        self._normalized = None

    @classmethod
    def from_model(cls, grid: Grid2D, model: PotentialModel, refine_bounds: bool = False):
        h = cls(grid, *model.surfaces(grid), model=model)
        if refine_bounds:
            h = h.with_bounds(refined_spectral_bounds(h))
        return h

    def with_bounds(self, bounds) -> "TwoChannelHamiltonian":
        return TwoChannelHamiltonian(self.grid, self.v_r, self.v_p, self.w, bounds=bounds, model=self.model)

    @property
    def coupling_strength(self) -> float:
        return float(np.max(np.abs(self.w)))

    @property
    def potential_minimum(self) -> float:
        return float(min(self.v_r.min(), self.v_p.min()))

    def normalized_arrays(self):
        """Flattened (T/nu, (V_R - omega)/nu, (V_P - omega)/nu, W/nu), cached."""
        if self._normalized is None:
            inv = 1.0 / self.nu
            t = np.ascontiguousarray(self.grid.kinetic_multiplier * inv)
            vr = np.ascontiguousarray(((self.v_r - self.omega) * inv).ravel())
            vp = np.ascontiguousarray(((self.v_p - self.omega) * inv).ravel())
            w = np.ascontiguousarray((self.w * inv).ravel())
            self._normalized = (t, vr, vp, w)
        return self._normalized

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        out = apply_kinetic_array(values, self.grid)
        out[REACTANT] += self.v_r * values[REACTANT] + self.w * values[PRODUCT]
        out[PRODUCT] += self.v_p * values[PRODUCT] + self.w * values[REACTANT]
        return out

    def _check(self, psi):
        if psi.grid != self.grid:
            raise GridMismatchError("wavefunction grid does not match the Hamiltonian grid")


def hamiltonian_apply(psi: TwoChannelWavefunction, h: TwoChannelHamiltonian) -> TwoChannelWavefunction:
    h._check(psi)
    return TwoChannelWavefunction(h.apply_array(psi.values), h.grid)


def estimate_spectral_bounds(h: TwoChannelHamiltonian) -> tuple[float, float]:
    """Guaranteed bounds from potential extrema, coupling size and Nyquist energy.

    The interval [min V - |W|, max V + |W| + T_max] contains the numerical
    range; it is then widened by 5% of its span on each side.
    """
    w = h.coupling_strength
    lo = float(min(h.v_r.min(), h.v_p.min())) - w
    hi = float(max(h.v_r.max(), h.v_p.max())) + w + h.grid.kinetic_max
    pad = BOUND_MARGIN * (hi - lo)
    return lo - pad, hi + pad


def refined_spectral_bounds(h: TwoChannelHamiltonian, iterations: int = 60, seed: int = 0) -> tuple[float, float]:
    """Tighter bounds from power iteration on the shifted operators.

    Power iteration approaches the extreme eigenvalues from the inside, so the
    result keeps the 5% safety pad and is never allowed outside the analytic
    bounds.
    """
    lo0, hi0 = estimate_spectral_bounds(h)
    rng = np.random.default_rng(seed)
    shape = (2,) + h.grid.shape

    def extreme(shift, sign):
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iterations):
            hv = sign * (h.apply_array(v) - shift * v)
            lam = float(np.vdot(v, hv).real)
            v = hv / np.linalg.norm(hv)
        return shift + sign * lam

    top = extreme(lo0, 1.0)
    bottom = extreme(hi0, -1.0)
    pad = BOUND_MARGIN * (top - bottom)
    return max(lo0, bottom - pad), min(hi0, top + pad)


def normalized_apply(psi: TwoChannelWavefunction, h: TwoChannelHamiltonian) -> TwoChannelWavefunction:
    h._check(psi)
    if h.nu == 0.0:
        raise DegenerateSpectrumError("nu = 0: spectrum is degenerate")
    hv = h.apply_array(psi.values)
    hv -= h.omega * psi.values
    hv /= h.nu
    return TwoChannelWavefunction(hv, h.grid)


def energy_expectation(psi: TwoChannelWavefunction, h: TwoChannelHamiltonian) -> float:
    """<psi|H|psi> / <psi|psi> in Hartree."""
    h._check(psi)
    nsq = float(np.vdot(psi.values, psi.values).real)
    if nsq == 0.0:
        raise InvalidParameterError("energy expectation of a zero-norm wavefunction")
    e = complex(np.vdot(psi.values, h.apply_array(psi.values))) / nsq
    if abs(e.imag) > 1e-10 * max(1.0, abs(e.real)):
        log.warning("energy expectation has imaginary part %.3e", e.imag)
    return e.real
