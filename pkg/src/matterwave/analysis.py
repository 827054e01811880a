"""Flux bookkeeping, state resolution and momentum analysis of shaped packets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import InvalidParameterError
from .grid import PRODUCT, TwoChannelWavefunction, momentum_spectrum_1d, slice_at_fixed_coordinate
from .vibrational import VibrationalBasis

PEAK_MIN_HEIGHT = 0.05
PEAK_MIN_PROMINENCE = 0.1


class FluxAccumulator:
    """Running state resolution of removed product-channel amplitude.

    Each increment ``d(r, Z)`` contributes ``sum_Z |<chi_v | d(., Z)>|^2 dZ``
    to state ``v`` (coherent within an increment, incoherent across them) and
    ``||d||^2`` to the total it is normalised by.
    """

    def __init__(self, basis: VibrationalBasis):
        self.basis = basis
        self.state_weights = np.zeros(basis.v_max + 1)
        self.removed_weight = 0.0
        self.increments = 0

    def add(self, increment) -> None:
        d = increment.values[PRODUCT] if isinstance(increment, TwoChannelWavefunction) else np.asarray(increment)
        g = self.basis.grid
        c = self.basis.overlaps(d)  # (v, nZ)
        self.state_weights += np.sum(c.real**2 + c.imag**2, axis=1) * g.dZ
        self.removed_weight += float(np.vdot(d, d).real) * g.area_element
        self.increments += 1

    def yields(self) -> np.ndarray:
        if self.removed_weight == 0.0:
            return np.zeros_like(self.state_weights)
        return self.state_weights / self.removed_weight

    @property
    def unassigned(self) -> float:
        if self.removed_weight == 0.0:
            return 0.0
        return max(0.0, 1.0 - float(self.yields().sum()))


def state_resolved_flux(absorbed_record, basis: VibrationalBasis) -> np.ndarray:
    """Per-v yield fractions from an iterable of product-channel increments."""
    acc = FluxAccumulator(basis)
    for increment in absorbed_record:
        acc.add(increment)
    return acc.yields()


def plane_flux(product: np.ndarray, grid, Z_plane: float) -> float:
    """Probability current through the plane Z = Z_plane, integrated over r."""
    iz = int(np.argmin(np.abs(grid.Z - Z_plane)))
    deriv = np.fft.ifft(1j * grid.kZ[None, :] * np.fft.fft(product, axis=1), axis=1)
    j = np.imag(np.conj(product[:, iz]) * deriv[:, iz]) / grid.M_Z
    return float(j.sum() * grid.dr)


@dataclass
class IterationRecord:
    iteration: int
    total_flux: float
    yields: np.ndarray
    unassigned: float
    trial_energy: float
    selected_energy: float
    reactant_absorbed: float = 0.0
    residual_norm: float = 0.0
    selection_discarded: float = 0.0
    backward_reactant_population: float = 0.0
    overlap_peak: float = 0.0
    peak_time: float = 0.0
    box: tuple = ()
    status: str = ""

    @property
    def conservation_error(self) -> float:
        """|flux + in-grid norm^2 + discarded - 1| for the forward run."""
        return abs(self.total_flux + self.residual_norm + self.reactant_absorbed - 1.0)


@dataclass
class FluxLedger:
    v_max: int
    records: list = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        if len(record.yields) != self.v_max + 1:
            raise InvalidParameterError("record yields do not match the ledger basis size")
        self.records.append(record)

    def target_fractions(self, v: int) -> np.ndarray:
        return np.array([rec.yields[v] for rec in self.records])

    def best(self, v: int) -> IterationRecord:
        return max(self.records, key=lambda rec: rec.yields[v])

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class MatterWaveProfile:
    coordinates: np.ndarray
    profile: np.ndarray
    fixed_coordinate: float
    k: np.ndarray
    spectrum: np.ndarray

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.spectrum) ** 2


def matter_wave_profile(psi2: TwoChannelWavefunction, fixed_coordinate: float, axis: str = "Z") -> MatterWaveProfile:
    """Reactant-channel line at a fixed adsorbate height and its momentum spectrum."""
    line = slice_at_fixed_coordinate(psi2.reactant, axis, fixed_coordinate)
    k, amp = momentum_spectrum_1d(line.values, line.spacing, float(line.line_coordinates[0]))
    return MatterWaveProfile(line.line_coordinates, line.values, line.coordinate, k, amp)


def spectral_peaks(power, min_height: float = PEAK_MIN_HEIGHT, min_prominence: float = PEAK_MIN_PROMINENCE) -> np.ndarray:
    """Indices of resolvable maxima of a power spectrum.

    A peak counts when it reaches ``min_height`` of the global maximum and is
    separated from higher neighbours by a dip of at least ``min_prominence``
    of the maximum.
    """
    p = np.asarray(power, dtype=float)
    top = p.max() if p.size else 0.0
    if top <= 0.0:
        return np.array([], dtype=int)
    padded = np.concatenate(([0.0], p / top, [0.0]))
    idx, _ = find_peaks(padded, height=min_height, prominence=min_prominence)
    return idx - 1
