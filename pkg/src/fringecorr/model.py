"""Core domain types.

Internal units: seconds, millimetres, angular frequency in rad/s. Conversion to
Hz happens only at the file/CLI boundary (see ``fringecorr.io``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError

TWO_PI = 2.0 * math.pi


def wrap_phase(x):
    """Map angles into (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    if np.ndim(w) == 0:
        return float(w)
    return w


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FringeModel:
    """Unperturbed fringe f0 * (1 + K cos(k y))."""

    contrast: float
    period: float
    normalization: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.contrast <= 1.0):
            raise InvalidInputError(f"contrast must lie in [0, 1], got {self.contrast}")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise InvalidInputError(f"period must be positive, got {self.period}")
        if not self.normalization > 0:
            raise InvalidInputError("normalization must be positive")

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.period


@dataclass(frozen=True)
class ToneComponent:
    frequency: float  # rad/s
    peak_phase_deviation: float  # rad
    phase: float = 0.0  # rad, stored wrapped into (-pi, pi]

    def __post_init__(self):
        if not (self.frequency > 0 and math.isfinite(self.frequency)):
            raise InvalidInputError(f"tone frequency must be positive, got {self.frequency}")
        if not (self.peak_phase_deviation >= 0 and math.isfinite(self.peak_phase_deviation)):
            raise InvalidInputError(
                f"peak phase deviation must be >= 0, got {self.peak_phase_deviation}")
        if not math.isfinite(self.phase):
            raise InvalidInputError("tone phase must be finite")
        object.__setattr__(self, "phase", wrap_phase(self.phase))


@dataclass(frozen=True)
class PerturbationSpec:
    """Sum of harmonic phase tones, ascending in frequency."""

    components: tuple[ToneComponent, ...] = ()

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        f = [c.frequency for c in comps]
        if any(b <= a for a, b in zip(f, f[1:])):
            raise InvalidInputError(
                "tone frequencies must be strictly ascending without duplicates")

    @classmethod
    def from_arrays(cls, frequencies: Sequence[float], amplitudes: Sequence[float],
                    phases: Sequence[float] | None = None) -> "PerturbationSpec":
        if phases is None:
            phases = [0.0] * len(frequencies)
        if not (len(frequencies) == len(amplitudes) == len(phases)):
            raise InvalidInputError("frequency, amplitude and phase lists differ in length")
        return cls(tuple(ToneComponent(float(w), float(a), float(p))
                         for w, a, p in zip(frequencies, amplitudes, phases)))

    @classmethod
    def from_hz(cls, frequencies_hz, amplitudes, phases=None) -> "PerturbationSpec":
        return cls.from_arrays([TWO_PI * f for f in frequencies_hz], amplitudes, phases)

    def __len__(self):
        return len(self.components)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.frequency for c in self.components], dtype=float)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([c.peak_phase_deviation for c in self.components], dtype=float)

    @property
    def phases(self) -> np.ndarray:
        return np.array([c.phase for c in self.components], dtype=float)

    def with_phases(self, phases: Iterable[float]) -> "PerturbationSpec":
        return PerturbationSpec.from_arrays(self.frequencies, self.amplitudes, list(phases))

    def with_amplitudes(self, amplitudes: Iterable[float]) -> "PerturbationSpec":
        return PerturbationSpec.from_arrays(self.frequencies, list(amplitudes), self.phases)


def evaluate_perturbation(spec: PerturbationSpec, t):
    """phi(t) = sum_j phi_j cos(w_j t + phase_j); scalar in, scalar out."""
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr)
    for c in spec.components:
        if c.peak_phase_deviation != 0.0:
            out += c.peak_phase_deviation * np.cos(c.frequency * t_arr + c.phase)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class EventSet:
    """Time-tagged impacts (t, y) inside the window [0, T] x [-Y/2, Y/2].

    Events are sorted by time on construction (stable for ties) and the arrays
    are read-only.
    """

    t: np.ndarray
    y: np.ndarray
    T: float
    Y: float
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if t.shape != y.shape:
            raise InvalidInputError("t and y must have equal length")
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise InvalidInputError(f"acquisition time must be finite and >= 0, got {self.T}")
        if not (self.Y > 0 and math.isfinite(self.Y)):
            raise InvalidInputError(f"acquisition length must be positive, got {self.Y}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise InvalidInputError("event coordinates must be finite")
        if t.size:
            if t.min() < 0 or t.max() > self.T:
                raise InvalidInputError("event times must lie in [0, T]")
            if y.min() < -self.Y / 2 or y.max() > self.Y / 2:
                raise InvalidInputError("event positions must lie in [-Y/2, Y/2]")
        if t.size > 1 and np.any(np.diff(t) < 0):
            order = np.argsort(t, kind="stable")
            t, y = t[order], y[order]
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "Y", float(self.Y))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    def __len__(self):
        return int(self.t.size)

    @property
    def n(self) -> int:
        return int(self.t.size)

    def with_positions(self, y, **meta) -> "EventSet":
        md = dict(self.metadata)
        md.update(meta)
        return EventSet(self.t, y, self.T, self.Y, md)


@dataclass(frozen=True)
class CorrelationGrid:
    """Binned pair counts and (optionally) normalized g2 values.

    Arrays are indexed [i_u, i_tau]. Bin centres are
    u_i = (i_u + 1/2) du - u_max and tau_i = (i_tau + 1/2) dtau. The optional
    zero-lag row holds counts for the centred bin |tau| < dtau/2.
    """

    counts: np.ndarray
    du: float
    dtau: float
    tau_max: float
    u_max: float
    n_events: int
    T: float
    Y: float
    values: np.ndarray | None = None
    valid: np.ndarray | None = None
    zero_lag_counts: np.ndarray | None = None
    zero_lag_values: np.ndarray | None = None
    zero_lag_valid: np.ndarray | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise InvalidInputError("counts must be a 2-D array")
        if counts.size and counts.min() < 0:
            raise InvalidInputError("counts must be nonnegative")
        object.__setattr__(self, "counts", _frozen(counts, np.int64))
        n_u, n_tau = counts.shape
        if not math.isclose(n_u * self.du, 2 * self.u_max, rel_tol=1e-9):
            raise InvalidInputError("u bins must tile [-u_max, u_max]")
        if not math.isclose(n_tau * self.dtau, self.tau_max, rel_tol=1e-9):
            raise InvalidInputError("tau bins must tile (0, tau_max]")
        if self.values is not None:
            v = np.asarray(self.values, dtype=float)
            if v.shape != counts.shape:
                raise InvalidInputError("values shape differs from counts")
            if np.any(v < 0):
                raise InvalidInputError("g2 values must be >= 0")
            object.__setattr__(self, "values", _frozen(v))
            valid = np.ones_like(v, bool) if self.valid is None else self.valid
            object.__setattr__(self, "valid", _frozen(valid, bool))
        if self.zero_lag_counts is not None:
            object.__setattr__(self, "zero_lag_counts", _frozen(self.zero_lag_counts, np.int64))
            if self.zero_lag_counts.shape != (n_u,):
                raise InvalidInputError("zero-lag row must have one entry per u bin")
        if self.zero_lag_values is not None:
            object.__setattr__(self, "zero_lag_values", _frozen(self.zero_lag_values))
            zv = (np.ones(n_u, bool) if self.zero_lag_valid is None else self.zero_lag_valid)
            object.__setattr__(self, "zero_lag_valid", _frozen(zv, bool))
        object.__setattr__(self, "n_events", int(self.n_events))

    @property
    def n_u(self) -> int:
        return self.counts.shape[0]

    @property
    def n_tau(self) -> int:
        return self.counts.shape[1]

    @property
    def u_centers(self) -> np.ndarray:
        return (np.arange(self.n_u) + 0.5) * self.du - self.u_max

    @property
    def tau_centers(self) -> np.ndarray:
        return (np.arange(self.n_tau) + 0.5) * self.dtau

    @property
    def is_normalized(self) -> bool:
        return self.values is not None

    def replace(self, **changes) -> "CorrelationGrid":
        return replace(self, **changes)

    def u_index(self, u0: float) -> int:
        """Index of the u bin containing u0 (half-open bins, last bin closed)."""
        if not (-self.u_max <= u0 <= self.u_max):
            raise InvalidInputError(f"u0={u0} outside [-{self.u_max}, {self.u_max}]")
        i = int(math.floor((u0 + self.u_max) / self.du))
        return min(i, self.n_u - 1)


@dataclass(frozen=True)
class Multiplet:
    """Integer vector {n_j, m_j} of the kernel with its cached weight and phases."""

    n: tuple[int, ...]
    m: tuple[int, ...]
    weight: float
    spatial_phase: float
    temporal_phase: float
    frequency_component: float

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.n, self.m))

    def negated(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return tuple(-x for x in self.n), tuple(-x for x in self.m)


@dataclass(frozen=True)
class AmplitudeSpectrum:
    frequencies: np.ndarray  # rad/s
    magnitudes: np.ndarray
    u0: float
    frequency_resolution: float  # rad/s

    def __post_init__(self):
        f = _frozen(self.frequencies)
        mag = _frozen(self.magnitudes)
        if f.shape != mag.shape:
            raise InvalidInputError("frequencies and magnitudes differ in length")
        if np.any(mag < 0):
            raise InvalidInputError("magnitudes must be >= 0")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "magnitudes", mag)

    def magnitude_at(self, omega: float) -> float:
        """Magnitude of the bin nearest to omega."""
        return float(self.magnitudes[int(np.argmin(np.abs(self.frequencies - omega)))])
