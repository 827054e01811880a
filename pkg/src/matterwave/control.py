"""Iterative shaping of the incoming reactant packet.

One iteration: propagate the product-channel trial backward in time, cut the
reactant packet out with a box, propagate it forward while collecting the
desorbing flux, and project the result onto the target vibrational state to
obtain the next trial.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import FluxAccumulator, FluxLedger, IterationRecord
from .errors import (EmptySelectionError, InvalidParameterError, NoSelectablePacketError,
                     ProjectionCollapseError)
from .grid import PRODUCT, REACTANT, Grid2D, TwoChannelWavefunction
from .hamiltonian import TwoChannelHamiltonian, energy_expectation
from .propagator import BACKWARD, FORWARD, Absorber, ChebyshevPlan, Propagator
from .vibrational import TrialState, VibrationalBasis

log = logging.getLogger(__name__)

COUPLING_CUTOFF = 1e-6

# status strings carried in ledgers and results
DECOUPLED = "decoupled"
CONVERGED = "converged"
NO_TRANSFER = "no_transfer"
BACKWARD_NOT_CONVERGED = "backward_not_converged"
FORWARD_NOT_CONVERGED = "forward_not_converged"
ENERGY_MISMATCH = "energy_mismatch"
NO_REACTION = "no_reaction"
TARGET_REACHED = "target_reached"
MAX_ITERATIONS = "max_iterations"
COLLAPSED = "collapsed"


def _population(values: np.ndarray, channel: int, da: float) -> float:
    c = values[channel]
    return float(np.vdot(c, c).real) * da


@dataclass(frozen=True)
class SelectionBox:
    r_min: float
    r_max: float
    Z_min: float
    Z_max: float

    def slices(self, grid: Grid2D) -> tuple[slice, slice]:
        ir = np.nonzero((grid.r >= self.r_min - 1e-12) & (grid.r <= self.r_max + 1e-12))[0]
        iz = np.nonzero((grid.Z >= self.Z_min - 1e-12) & (grid.Z <= self.Z_max + 1e-12))[0]
        if ir.size == 0 or iz.size == 0:
            return slice(0, 0), slice(0, 0)
        return slice(ir[0], ir[-1] + 1), slice(iz[0], iz[-1] + 1)

    def indicator(self, grid: Grid2D) -> np.ndarray:
        m = np.zeros(grid.shape)
        m[self.slices(grid)] = 1.0
        return m

    def is_valid_for(self, h: TwoChannelHamiltonian, cutoff: float = COUPLING_CUTOFF) -> bool:
        """Strictly inside the grid and clear of the coupling region."""
        g = h.grid
        inside = g.r[0] < self.r_min <= self.r_max < g.r[-1] and g.Z[0] < self.Z_min <= self.Z_max < g.Z[-1]
        if not inside:
            return False
        beta = h.coupling_strength
        return beta == 0.0 or bool(np.all(np.abs(h.w[self.slices(g)]) < cutoff * beta))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.r_min, self.r_max, self.Z_min, self.Z_max)


@dataclass(frozen=True)
class BackwardStop:
    population_rate_threshold: float = 1e-6
    max_time: float = 60000.0


@dataclass(frozen=True)
class ForwardStop:
    patience: int = 10
    max_time: float = 80000.0
    overlap_floor: float = 1e-8
    drain_tolerance: float = 1e-5
    drain: bool = True


@dataclass
class BackwardResult:
    psi1: TwoChannelWavefunction
    elapsed: float
    steps: int
    status: str
    reactant_population: float
    populations: list = field(default_factory=list)


def backward_propagate(trial: TrialState, h: TwoChannelHamiltonian, plan: ChebyshevPlan,
                       stop: BackwardStop = BackwardStop()) -> BackwardResult:
    """Step the trial backward until reactant population stops changing.

    The rate test arms once the rate has exceeded the threshold, so a trial
    that starts outside the coupling region is not stopped before it arrives.
    """
    if plan.direction != BACKWARD:
        raise InvalidParameterError("backward propagation needs a plan with tau < 0")
    grid = h.grid
    da = grid.area_element
    values = np.array(trial.field.values)
    pops = [_population(values, REACTANT, da)]
    if h.coupling_strength == 0.0:
        return BackwardResult(TwoChannelWavefunction(values, grid), 0.0, 0, DECOUPLED, pops[0], pops)
    prop = Propagator(h, plan)
    dt = abs(plan.tau)
    armed = False
    status = NO_TRANSFER
    steps = 0
    while steps * dt < stop.max_time:
        values = prop.step(values)
        steps += 1
        pops.append(_population(values, REACTANT, da))
        rate = abs(pops[-1] - pops[-2]) / dt
        if rate >= stop.population_rate_threshold:
            armed = True
        elif armed:
            status = CONVERGED
            break
    else:
        if armed:
            status = BACKWARD_NOT_CONVERGED
            log.warning("backward propagation still transferring population at max_time=%g", stop.max_time)
    return BackwardResult(TwoChannelWavefunction(values, grid), steps * dt, steps, status, pops[-1], pops)


def auto_box(psi1: TwoChannelWavefunction, previous_box: SelectionBox | None, h: TwoChannelHamiltonian,
             box_leak: float = 1e-3, margin: int = 2, cutoff: float = COUPLING_CUTOFF) -> SelectionBox:
    """Bounding rectangle of the reactant packet outside the coupling region.

    Each side is trimmed at the ``box_leak/4`` quantile of the corresponding
    marginal, so the rectangle holds at least ``1 - box_leak`` of the free
    reactant probability; it is then padded by ``margin`` points, clipped to
    the grid interior, and shrunk side by side until it clears the coupling.
    """
    g = h.grid
    rho = np.abs(psi1.values[REACTANT]) ** 2
    beta = h.coupling_strength
    free = np.ones(g.shape, dtype=bool) if beta == 0.0 else np.abs(h.w) < cutoff * beta
    rho = np.where(free, rho, 0.0)
    total = rho.sum()
    if total <= 0.0:
        raise NoSelectablePacketError("no reactant probability outside the coupling region")
    q = box_leak / 4.0

    def bounds(marginal):
        c = np.cumsum(marginal) / total
        lo = int(np.searchsorted(c, q, side="left"))
        hi = int(np.searchsorted(c, 1.0 - q, side="left"))
        return lo, min(hi, marginal.size - 1)

    r_lo, r_hi = bounds(rho.sum(axis=1))
    z_lo, z_hi = bounds(rho.sum(axis=0))
    r_lo, z_lo = max(r_lo - margin, 1), max(z_lo - margin, 1)
    r_hi, z_hi = min(r_hi + margin, g.nr - 2), min(z_hi + margin, g.nZ - 2)

    if beta > 0.0:
        blocked = ~free
        while r_lo <= r_hi and z_lo <= z_hi and blocked[r_lo:r_hi + 1, z_lo:z_hi + 1].any():
            # drop the edge line that holds the least free probability among those touching the coupling
            edges = []
            for side, sl in (("r_lo", (r_lo, slice(z_lo, z_hi + 1))), ("r_hi", (r_hi, slice(z_lo, z_hi + 1))),
                             ("z_lo", (slice(r_lo, r_hi + 1), z_lo)), ("z_hi", (slice(r_lo, r_hi + 1), z_hi))):
                if blocked[sl].any():
                    edges.append((float(rho[sl].sum()), side))
            if not edges:
                # coupling strictly interior to the box: cut from the side nearest to it
                ir, iz = np.nonzero(blocked[r_lo:r_hi + 1, z_lo:z_hi + 1])
                if ir.mean() < (r_hi - r_lo) / 2:
                    r_lo += int(ir.max()) + 1
                else:
                    r_hi = r_lo + int(ir.min()) - 1
                continue
            side = min(edges)[1]
            if side == "r_lo":
                r_lo += 1
            elif side == "r_hi":
                r_hi -= 1
            elif side == "z_lo":
                z_lo += 1
            else:
                z_hi -= 1
    if r_lo > r_hi or z_lo > z_hi:
        raise NoSelectablePacketError("reactant packet cannot be separated from the coupling region")
    box = SelectionBox(float(g.r[r_lo]), float(g.r[r_hi]), float(g.Z[z_lo]), float(g.Z[z_hi]))
    if previous_box is not None:
        log.debug("selection box moved from %s to %s", previous_box.as_tuple(), box.as_tuple())
    return box


@dataclass
class SelectionResult:
    psi2: TwoChannelWavefunction
    selected_norm: float
    discarded: float
    energy: float | None
    mismatch: float | None
    status: str


def select(psi1: TwoChannelWavefunction, box: SelectionBox, h: TwoChannelHamiltonian | None = None,
           trial_energy: float | None = None, selection_floor: float = 1e-4,
           energy_tolerance: float = 0.05) -> SelectionResult:
    """Keep the reactant amplitude inside ``box``, zero the product channel, renormalise.

    ``discarded`` is the part of psi1's probability that is thrown away.  The
    energy mismatch is measured relative to ``trial_energy - min V``.
    """
    g = psi1.grid
    out = np.zeros_like(psi1.values)
    sl = box.slices(g)
    out[REACTANT][sl] = psi1.values[REACTANT][sl]
    n_sel = math.sqrt(_population(out, REACTANT, g.area_element))
    if n_sel <= selection_floor:
        raise EmptySelectionError(f"selected norm {n_sel:.3e} below floor {selection_floor:g}")
    total = sum(psi1.channel_populations())
    out /= n_sel
    psi2 = TwoChannelWavefunction(out, g)
    energy = mismatch = None
    status = CONVERGED
    if h is not None:
        energy = energy_expectation(psi2, h)
        if trial_energy is not None:
            scale = trial_energy - h.potential_minimum
            mismatch = abs(energy - trial_energy) / scale if scale > 0 else math.inf
            if mismatch > energy_tolerance:
                status = ENERGY_MISMATCH
                log.warning("selected packet energy %.6g differs from trial %.6g by %.1f%%",
                            energy, trial_energy, 100 * mismatch)
    return SelectionResult(psi2, n_sel, total - n_sel**2, energy, mismatch, status)


@dataclass
class ForwardResult:
    psi3: TwoChannelWavefunction
    peak_overlap: float
    peak_time: float
    elapsed: float
    steps: int
    status: str
    flux: FluxAccumulator
    product_absorbed: float
    reactant_absorbed: float
    residual_norm: float
    overlaps: list = field(default_factory=list)


def forward_propagate(psi2: TwoChannelWavefunction, h: TwoChannelHamiltonian, plan: ChebyshevPlan,
                      absorber: Absorber | None, basis: VibrationalBasis, trial: TrialState,
                      stop: ForwardStop = ForwardStop()) -> ForwardResult:
    """Step forward, tracking |<trial|psi(t)>| and the absorbed flux.

    psi3 is the state at the first overlap maximum that is followed by
    ``patience`` decreasing steps.  With ``stop.drain`` the run continues past
    that point until the product channel has left the grid (population below
    ``drain_tolerance``) so the flux record is complete.
    """
    if plan.direction != FORWARD:
        raise InvalidParameterError("forward propagation needs a plan with tau > 0")
    grid = h.grid
    da = grid.area_element
    prop = Propagator(h, plan, absorber)
    flux = FluxAccumulator(basis)
    target = trial.field.values
    values = np.array(psi2.values)
    dt = plan.tau

    def overlap(v):
        return abs(complex(np.vdot(target, v))) * da

    overlaps = [overlap(values)]
    best_values, best_overlap, best_step = np.array(values), overlaps[0], 0
    peak_found = False
    decreasing = 0
    absorbed_r = absorbed_p = 0.0
    steps = 0
    status = FORWARD_NOT_CONVERGED
    while steps * dt < stop.max_time:
        values, removed, (ar, ap) = prop.step_absorbing(values)
        steps += 1
        absorbed_r += ar
        absorbed_p += ap
        if ap > 0.0:
            flux.add(removed[PRODUCT])
        ov = overlap(values)
        overlaps.append(ov)
        if not peak_found:
            if ov > best_overlap:
                best_values, best_overlap, best_step = np.array(values), ov, steps
                decreasing = 0
            elif ov < overlaps[-2] and best_overlap > stop.overlap_floor:
                decreasing += 1
                if decreasing >= stop.patience:
                    peak_found = True
                    status = CONVERGED
            else:
                decreasing = 0
            if peak_found and not stop.drain:
                break
        if peak_found and _population(values, PRODUCT, da) < stop.drain_tolerance:
            break
    if not peak_found:
        log.warning("forward propagation found no overlap maximum before max_time=%g", stop.max_time)
    residual = _population(values, REACTANT, da) + _population(values, PRODUCT, da)
    return ForwardResult(TwoChannelWavefunction(best_values, grid), best_overlap, best_step * dt,
                         steps * dt, steps, status, flux, absorbed_p, absorbed_r, residual, overlaps)


def projection_coefficients(psi3: TwoChannelWavefunction, trial: TrialState, use_envelope: str = "gaussian") -> np.ndarray:
    """c_n(Z) = sum_r conj(chi_n(r) e(Z)) psi3_P(r, Z) dr.

    ``e`` is the original Gaussian g (``"gaussian"``) or the current trial
    envelope (``"trial"``).
    """
    env = trial.gaussian if use_envelope == "gaussian" else trial.envelope
    if use_envelope not in ("gaussian", "trial"):
        raise InvalidParameterError(f"unknown overlap envelope {use_envelope!r}")
    g = psi3.grid
    return np.conj(env) * (trial.chi @ psi3.values[PRODUCT]) * g.dr


def project(psi3: TwoChannelWavefunction, trial: TrialState, basis: VibrationalBasis | None = None,
            f_envelope: str = "gaussian", use_envelope: str = "gaussian",
            collapse_floor: float = 1e-8) -> TrialState:
    """Next trial ``(0, c_n(Z) f(Z) chi_n(r))``, renormalised.

    ``f_envelope="gaussian"`` keeps f = g every iteration; ``"previous"``
    uses the modulus of the current trial envelope instead.
    """
    if psi3.norm() == 0.0:
        raise InvalidParameterError("projection of a zero wavefunction")
    if basis is not None and not np.array_equal(basis.chi(trial.v_target), trial.chi):
        raise InvalidParameterError("trial state does not belong to this basis")
    c = projection_coefficients(psi3, trial, use_envelope)
    if f_envelope == "gaussian":
        f = trial.gaussian
    elif f_envelope == "previous":
        f = np.abs(trial.envelope)
    else:
        raise InvalidParameterError(f"unknown f_envelope {f_envelope!r}")
    new = c * f
    pnorm = math.sqrt(float(np.vdot(new, new).real) * psi3.grid.dZ)
    if pnorm < collapse_floor:
        raise ProjectionCollapseError(f"projected norm {pnorm:.3e} below {collapse_floor:g}")
    return trial.with_envelope(new)


@dataclass
class ShapingState:
    iteration: int
    trial: TrialState
    shaped_reactant: TwoChannelWavefunction | None
    box: SelectionBox | None
    ledger: FluxLedger


@dataclass
class ShapingResult:
    ledger: FluxLedger
    shaped: TwoChannelWavefunction | None
    best_shaped: TwoChannelWavefunction | None
    best_iteration: int
    status: str
    trial: TrialState


def run_iterations(h, basis, trial, backward_plan, forward_plan, absorber, *, max_iterations=15,
                   yield_target=1.0, box_leak=1e-3, box_margin=2, selection_floor=1e-4, energy_tolerance=0.05,
                   backward_stop=BackwardStop(), forward_stop=ForwardStop(), f_envelope="gaussian",
                   overlap_envelope="gaussian", on_iteration=None) -> ShapingResult:
    """The shaping loop on prepared physics objects.

    ``on_iteration(state, record)`` is called after every iteration (and
    before any error propagates) so that callers can flush outputs.
    """
    v = trial.v_target
    ledger = FluxLedger(basis.v_max)
    box = None
    shaped = best = None
    best_it, best_yield = 0, -1.0
    status = MAX_ITERATIONS
    for it in range(1, max_iterations + 1):
        e_trial = energy_expectation(trial.field, h)
        back = backward_propagate(trial, h, backward_plan, backward_stop)
        pop_r = back.reactant_population
        if back.status == DECOUPLED or pop_r == 0.0:
            rec = IterationRecord(it, 0.0, np.zeros(basis.v_max + 1), 0.0, e_trial, math.nan,
                                  residual_norm=1.0, status=NO_REACTION)
            ledger.append(rec)
            status = NO_REACTION
            if on_iteration:
                on_iteration(ShapingState(it, trial, shaped, box, ledger), rec)
            break
        try:
            box = auto_box(back.psi1, box, h, box_leak, box_margin)
            sel = select(back.psi1, box, h, e_trial, selection_floor, energy_tolerance)
        except (NoSelectablePacketError, EmptySelectionError) as exc:
            log.error("iteration %d: %s", it, exc)
            status = COLLAPSED
            break
        fwd = forward_propagate(sel.psi2, h, forward_plan, absorber, basis, trial, forward_stop)
        yields = fwd.flux.yields()
        flags = [s for s in (back.status, sel.status, fwd.status) if s != CONVERGED]
        rec = IterationRecord(
            it, fwd.product_absorbed, yields, fwd.flux.unassigned, e_trial, sel.energy,
            reactant_absorbed=fwd.reactant_absorbed, residual_norm=fwd.residual_norm,
            selection_discarded=sel.discarded, backward_reactant_population=pop_r,
            overlap_peak=fwd.peak_overlap, peak_time=fwd.peak_time, box=box.as_tuple(),
            status=";".join(flags) if flags else CONVERGED)
        ledger.append(rec)
        shaped = sel.psi2
        if yields[v] > best_yield:
            best_yield, best_it, best = yields[v], it, sel.psi2
        log.info("iteration %d: flux %.4g, yield[v=%d] %.4f, overlap %.4f", it, rec.total_flux, v,
                 yields[v], fwd.peak_overlap)
        if on_iteration:
            on_iteration(ShapingState(it, trial, shaped, box, ledger), rec)
        if yields[v] >= yield_target:
            status = TARGET_REACHED
            break
        if it == max_iterations:
            break
        try:
            trial = project(fwd.psi3, trial, basis, f_envelope, overlap_envelope)
        except ProjectionCollapseError as exc:
            log.error("iteration %d: %s", it, exc)
            status = COLLAPSED
            break
    return ShapingResult(ledger, shaped, best, best_it, status, trial)


def stops_from_config(control) -> tuple[BackwardStop, ForwardStop]:
    return (BackwardStop(control.backward_rate_threshold, control.backward_max_time),
            ForwardStop(control.patience, control.forward_max_time, control.overlap_floor,
                        control.drain_tolerance))


def run_control_loop(config, on_iteration=None) -> ShapingResult:
    """Build the model described by ``config`` and run the shaping loop on it."""
    from .physics import build_physics

    phys = build_physics(config)
    c = config.control
    back_stop, fwd_stop = stops_from_config(c)
    return run_iterations(
        phys.hamiltonian, phys.basis, phys.trial, phys.backward_plan, phys.forward_plan, phys.absorber,
        max_iterations=c.max_iterations, yield_target=c.yield_target, box_leak=c.box_leak,
        box_margin=c.box_margin, selection_floor=c.selection_floor, energy_tolerance=c.energy_tolerance,
        backward_stop=back_stop, forward_stop=fwd_stop, f_envelope=c.f_envelope,
        overlap_envelope=c.overlap_envelope, on_iteration=on_iteration)
