"""Chebyshev propagation in either time direction, with an edge absorber.

exp(-i H tau) = exp(-i omega tau) * sum_k a_k T_k(H_N) with
a_k = (2 - delta_k0) (-i)^k J_k(nu tau).  For tau < 0 the odd Bessel terms
flip sign, which is all that distinguishes backward from forward steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from . import kernels
from .errors import GridMismatchError, InvalidParameterError
from .grid import Grid2D, KineticOperator, TwoChannelWavefunction
from .hamiltonian import TwoChannelHamiltonian

FORWARD = "forward"
BACKWARD = "backward"


def bessel_coefficients(x: float, tolerance: float = 1e-15, direction: str = FORWARD) -> np.ndarray:
    """Expansion coefficients a_0..a_K for argument ``x = nu*|tau|``.

    K is the first order past ``ceil(x) + 10`` with ``|J_K(x)| < tolerance``.
    """
    if not 0.0 < tolerance < 1.0:
        raise InvalidParameterError("tolerance must lie in (0, 1)")
    if x < 0 or not math.isfinite(x):
        raise InvalidParameterError("Bessel argument must be finite and non-negative")
    if direction not in (FORWARD, BACKWARD):
        raise InvalidParameterError(f"direction must be {FORWARD!r} or {BACKWARD!r}")
    k_min = int(math.ceil(x)) + 10
    n = k_min + 1
    while True:
        j = jv(np.arange(n), x)
        small = np.nonzero(np.abs(j[k_min:]) < tolerance)[0]
        if small.size:
            order = k_min + int(small[0])
            break
        n *= 2
    j = j[: order + 1]
    k = np.arange(order + 1)
    phase = (-1j) ** (k % 4)
    if direction == BACKWARD:
        phase = np.where(k % 2 == 1, -phase, phase)
    a = phase * j * 2.0
    a[0] = j[0]
    return a


@dataclass(frozen=True)
class ChebyshevPlan:
    tau: float
    order: int
    coefficients: np.ndarray
    omega: float
    nu: float
    tolerance: float

    @property
    def direction(self) -> str:
        return FORWARD if self.tau >= 0 else BACKWARD

    @property
    def phase(self) -> complex:
        return complex(np.exp(-1j * self.omega * self.tau))

    def reversed(self) -> "ChebyshevPlan":
        return make_plan_for(self.omega, self.nu, -self.tau, self.tolerance)

    def matches(self, h: TwoChannelHamiltonian) -> bool:
        return self.omega == h.omega and self.nu == h.nu


def make_plan_for(omega: float, nu: float, tau: float, tolerance: float = 1e-15) -> ChebyshevPlan:
    direction = FORWARD if tau >= 0 else BACKWARD
    coeffs = bessel_coefficients(nu * abs(tau), tolerance, direction)
    coeffs.flags.writeable = False
    return ChebyshevPlan(float(tau), len(coeffs) - 1, coeffs, float(omega), float(nu), float(tolerance))


def make_plan(h: TwoChannelHamiltonian, tau: float | None = None, nu_tau: float = 20.0,
              tolerance: float = 1e-15, direction: str = FORWARD) -> ChebyshevPlan:
    """Plan a step of length ``tau``, or of ``nu*|tau| = nu_tau`` when tau is omitted.

    An explicit ``tau`` carries its own sign; ``direction`` applies otherwise.
    """
    if tau is None:
        if nu_tau <= 0:
            raise InvalidParameterError("nu_tau must be positive")
        tau = nu_tau / h.nu
        if direction == BACKWARD:
            tau = -tau
        elif direction != FORWARD:
            raise InvalidParameterError(f"unknown direction {direction!r}")
    return make_plan_for(h.omega, h.nu, tau, tolerance)


@dataclass(frozen=True)
class Absorber:
    """Multiplicative mask with cos^2 ramps at the large-Z (and optionally large-r) edge."""

    mask: np.ndarray
    width_Z: float
    width_r: float | None = None
    strength: float = 1.0

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.mask == 1.0))


def edge_ramp(coords: np.ndarray, width: float, strength: float = 1.0) -> np.ndarray:
    """1 - strength*sin^2(pi x / 2) over the last ``width`` of ``coords``, 1 elsewhere."""
    m = np.ones_like(coords, dtype=float)
    if width <= 0:
        return m
    start = coords[-1] - width
    x = np.clip((coords - start) / width, 0.0, 1.0)
    inside = coords > start
    m[inside] = 1.0 - strength * np.sin(0.5 * np.pi * x[inside]) ** 2
    return m


def make_absorber(grid: Grid2D, width_Z: float, strength: float = 1.0, width_r: float | None = None) -> Absorber:
    if not 0.0 <= strength <= 1.0:
        raise InvalidParameterError("absorber strength must lie in [0, 1]")
    if width_Z < 0 or width_Z > grid.Z_extent or (width_r is not None and not 0 <= width_r <= grid.r_extent):
        raise InvalidParameterError("absorber width must lie within the grid extent")
    mask = np.outer(
        edge_ramp(grid.r, width_r, strength) if width_r else np.ones(grid.nr),
        edge_ramp(grid.Z, width_Z, strength),
    )
    mask = np.ascontiguousarray(mask)
    mask.flags.writeable = False
    return Absorber(mask, float(width_Z), None if width_r is None else float(width_r), float(strength))


class Propagator:
    """Repeated Chebyshev steps on raw ``(2, nr, nZ)`` arrays.

    Keeps work buffers between steps; the public functions below wrap it for
    one-off use on :class:`TwoChannelWavefunction` values.
    """

    def __init__(self, h: TwoChannelHamiltonian, plan: ChebyshevPlan, absorber: Absorber | None = None):
        if not plan.matches(h):
            raise InvalidParameterError("plan was built for a different Hamiltonian normalisation")
        self.h = h
        self.plan = plan
        self.absorber = None if absorber is None or absorber.is_identity else absorber
        if self.absorber is not None and self.absorber.mask.shape != h.grid.shape:
            raise GridMismatchError("absorber mask does not match the grid")
        tk, self._vr, self._vp, self._w = h.normalized_arrays()
        self._kinetic = KineticOperator(h.grid, tk)
        shape = (2,) + h.grid.shape
        self._bufs = [np.empty(shape, dtype=np.complex128) for _ in range(3)]
        self._mask = None if self.absorber is None else self.absorber.mask.ravel()

    def _apply_hn(self, phi, prev, factor, coef, out, acc, use_prev):
        t = self._kinetic.apply(phi)
        n = phi.shape[-1] * phi.shape[-2]
        kernels.cheb_term(t.reshape(2, n), phi.reshape(2, n), prev.reshape(2, n),
                          self._vr, self._vp, self._w, factor, coef,
                          out.reshape(2, n), acc.reshape(2, n), use_prev)

    def step(self, values: np.ndarray) -> np.ndarray:
        """One unmasked step; returns a new array."""
        # the kernels work on flat views, so the input must be C-ordered
        values = np.ascontiguousarray(values, dtype=np.complex128)
        a = self.plan.coefficients
        acc = values * a[0]
        if self.plan.order == 0:
            acc *= self.plan.phase
            return acc
        p0, p1, p2 = self._bufs
        p0[...] = values
        self._apply_hn(p0, p0, 1.0, complex(a[1]), p1, acc, False)
        for k in range(2, self.plan.order + 1):
            self._apply_hn(p1, p0, 2.0, complex(a[k]), p2, acc, True)
            p0, p1, p2 = p1, p2, p0
        acc *= self.plan.phase
        return acc

    def step_absorbing(self, values: np.ndarray):
        """Step, then mask.  Returns (masked, removed, absorbed_probability[2])."""
        mid = self.step(values)
        removed = np.zeros_like(mid)
        if self._mask is None:
            return mid, removed, (0.0, 0.0)
        n = mid.shape[-1] * mid.shape[-2]
        ar, ap = kernels.apply_mask(mid.reshape(2, n), self._mask, removed.reshape(2, n))
        da = self.h.grid.area_element
        return mid, removed, (ar * da, ap * da)


def _check(psi, h):
    if psi.grid != h.grid:
        raise GridMismatchError("wavefunction grid does not match the Hamiltonian grid")


def propagate(psi: TwoChannelWavefunction, h: TwoChannelHamiltonian, plan: ChebyshevPlan) -> TwoChannelWavefunction:
    _check(psi, h)
    return TwoChannelWavefunction(Propagator(h, plan).step(np.array(psi.values)), h.grid)


def propagate_absorbing(psi: TwoChannelWavefunction, h: TwoChannelHamiltonian, plan: ChebyshevPlan,
                        absorber: Absorber | None):
    """Step then mask.  Returns ``(masked, removed)`` with ``removed = pre - post``."""
    _check(psi, h)
    out, removed, _ = Propagator(h, plan, absorber).step_absorbing(np.array(psi.values))
    return TwoChannelWavefunction(out, h.grid), TwoChannelWavefunction(removed, h.grid)
