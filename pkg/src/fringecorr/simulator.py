"""Seeded event-stream generation.

Arrival times form a Poisson process; positions follow the instantaneous
fringe 1 + K cos(k y + phi(t)) and are drawn by acceptance-rejection. All
randomness comes from numpy's PCG64 seeded through ``SeedSequence`` so that
every stream is reproducible from (seed, stream id, chunk index).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .model import TWO_PI, EventSet, FringeModel, PerturbationSpec, evaluate_perturbation

log = logging.getLogger(__name__)

GENERATOR_ID = "numpy.random.PCG64/SeedSequence"
POSITION_CHUNK = 65536

_STREAM_TIMES = 0
_STREAM_POSITIONS = 1
_STREAM_NOISE_PHASES = 2


def _rng(seed: int, *key: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise InvalidInputError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def sample_arrival_times(count_rate: float, n: int, seed: int) -> np.ndarray:
    """Poisson arrival times starting at t = 0, exponential gaps by inverse CDF."""
    if not count_rate > 0:
        raise InvalidInputError("count rate must be positive")
    if n < 1:
        raise InvalidInputError("need at least one event")
    u = _rng(seed, _STREAM_TIMES).random(n - 1)
    gaps = -np.log1p(-u) / count_rate
    return np.concatenate(([0.0], np.cumsum(gaps)))


def sample_positions(times, model: FringeModel, phase_of_t: Callable | None, Y: float,
                     seed: int, phases=None) -> np.ndarray:
    """Positions on [-Y/2, Y/2] with density proportional to 1 + K cos(k y + phi(t)).

    The envelope is the constant 1 + K. Events are processed in fixed chunks
    of ``POSITION_CHUNK`` with an independent substream per chunk, so every
    complete chunk is unchanged when more events are appended. ``phases`` may be passed
    precomputed instead of ``phase_of_t``.
    """
    if not Y > 0:
        raise InvalidInputError("Y must be positive")
    t = np.asarray(times, dtype=float)
    if phases is None:
        phases = np.zeros_like(t) if phase_of_t is None else np.asarray(phase_of_t(t), float)
    K, k = model.contrast, model.wavenumber
    out = np.empty_like(t)
    for c, start in enumerate(range(0, t.size, POSITION_CHUNK)):
        stop = min(start + POSITION_CHUNK, t.size)
        rng = _rng(seed, _STREAM_POSITIONS, c)
        ph = phases[start:stop]
        res = np.empty(stop - start)
        todo = np.arange(stop - start)
        while todo.size:
            y = (rng.random(todo.size) - 0.5) * Y
            acc = rng.random(todo.size) * (1.0 + K) < 1.0 + K * np.cos(k * y + ph[todo])
            res[todo[acc]] = y[acc]
            todo = todo[~acc]
        out[start:stop] = res
    return out


@dataclass(frozen=True)
class NoiseSpectrumSpec:
    """Gaussian phase-noise band on a uniform frequency grid (rad/s).

    ``normalization`` selects the prefactor of the line sum: "dft" divides by
    sqrt(2 pi) * N_w, "tone" treats every line as a tone of amplitude
    phi_hat(w_j).
    """

    phi0: float
    omega0: float
    sigma_omega: float
    omega_min: float
    omega_max: float
    resolution: float
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))
    normalization: str = "dft"

    def __post_init__(self):
        if not (self.omega_min < self.omega0 < self.omega_max):
            raise InvalidInputError("need omega_min < omega0 < omega_max")
        if not self.resolution > 0:
            raise InvalidInputError("resolution must be positive")
        if not self.sigma_omega > 0:
            raise InvalidInputError("sigma_omega must be positive")
        if self.phi0 < 0:
            raise InvalidInputError("phi0 must be >= 0")
        if self.normalization not in ("dft", "tone"):
            raise InvalidInputError(f"unknown normalization {self.normalization!r}")
        steps = (self.omega_max - self.omega_min) / self.resolution
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise InvalidInputError("band width is not a whole number of resolution steps")
        ph = np.array(self.phases, dtype=float)
        if ph.size not in (0, self.n_lines):
            raise InvalidInputError(f"expected {self.n_lines} phases, got {ph.size}")
        if ph.size == 0:
            ph = np.zeros(self.n_lines)
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)

    @property
    def n_lines(self) -> int:
        return int(round((self.omega_max - self.omega_min) / self.resolution)) + 1

    @property
    def frequencies(self) -> np.ndarray:
        return self.omega_min + self.resolution * np.arange(self.n_lines)

    @property
    def amplitudes(self) -> np.ndarray:
        return gaussian_amplitudes(self.frequencies, self.phi0, self.omega0, self.sigma_omega)

    @property
    def scale(self) -> float:
        if self.normalization == "tone":
            return 1.0
        return 1.0 / (math.sqrt(TWO_PI) * self.n_lines)

    @property
    def line_amplitudes(self) -> np.ndarray:
        """Amplitude of each line as it enters phi(t)."""
        return self.scale * self.amplitudes

    def as_perturbation(self) -> PerturbationSpec:
        return PerturbationSpec.from_arrays(self.frequencies, self.line_amplitudes, self.phases)


def gaussian_amplitudes(omega, phi0, omega0, sigma_omega):
    return phi0 * np.exp(-0.5 * ((np.asarray(omega, float) - omega0) / sigma_omega) ** 2)


def gaussian_noise_spectrum(phi0: float, omega0: float, sigma_omega: float, omega_min: float,
                            omega_max: float, resolution: float, seed: int,
                            normalization: str = "dft") -> NoiseSpectrumSpec:
    """Gaussian band with i.i.d. uniform random line phases in (-pi, pi]."""
    spec = NoiseSpectrumSpec(phi0, omega0, sigma_omega, omega_min, omega_max, resolution,
                             normalization=normalization)
    u = _rng(seed, _STREAM_NOISE_PHASES).random(spec.n_lines)
    return NoiseSpectrumSpec(phi0, omega0, sigma_omega, omega_min, omega_max, resolution,
                             np.pi - TWO_PI * u, normalization)


def _direct_sum(freq, amp, phase, t, chunk=2048):
    out = np.empty(t.size)
    for s in range(0, t.size, chunk):
        tt = t[s:s + chunk]
        out[s:s + chunk] = np.cos(np.multiply.outer(tt, freq) + phase) @ amp
    return out


def _taylor_table_sum(spec: NoiseSpectrumSpec, t: np.ndarray, tol: float = 1e-12):
    """Evaluate the uniform-grid line sum at arbitrary times.

    The band is shifted to baseband around its centre line; the resulting
    trigonometric polynomial is periodic in 2 pi / resolution and is sampled
    on a grid by FFT together with its derivatives, then expanded locally in
    a Taylor series.
    """
    n = spec.n_lines
    jc = n // 2
    dw = spec.resolution
    wc = spec.omega_min + jc * dw
    coef = spec.line_amplitudes * np.exp(1j * spec.phases)
    offs = np.arange(n) - jc
    size = 1 << max(16, int(math.ceil(math.log2(4 * n))))
    period = TWO_PI / dw
    h = period / size
    bh = max(abs(offs[0]), abs(offs[-1])) * dw * h / 2
    total = np.abs(coef).sum()
    order, term = 0, total
    while term > tol and order < 40:
        order += 1
        term = total * bh ** (order + 1) / math.factorial(order + 1)

    tm = np.mod(t, period)
    idx = np.rint(tm / h).astype(np.int64)
    delta = tm - idx * h
    idx %= size
    acc = np.zeros(t.size, dtype=complex)
    buf = np.zeros(size, dtype=complex)
    pos = offs % size
    for d in range(order + 1):
        buf[:] = 0
        buf[pos] = coef * (1j * offs * dw) ** d
        table = np.fft.ifft(buf) * size
        acc += table[idx] * delta**d / math.factorial(d)
    return np.real(np.exp(1j * wc * t) * acc)


def broadband_phase(spec: NoiseSpectrumSpec, t, method: str = "auto"):
    """phi(t) = scale * sum_j phi_hat(w_j) cos(w_j t + Phi_j).

    ``method`` is "direct", "table" or "auto" (table for large inputs).
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    amp = spec.line_amplitudes
    if not np.any(amp):
        out = np.zeros_like(t_arr)
    elif method == "direct" or (method == "auto" and t_arr.size * spec.n_lines < 5e6):
        out = _direct_sum(spec.frequencies, amp, spec.phases, t_arr)
    elif method in ("table", "auto"):
        out = _taylor_table_sum(spec, t_arr)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    return float(out[0]) if np.ndim(t) == 0 else out


def applicability_warnings(perturbation, count_rate: float | None = None,
                           dtau: float | None = None) -> list[str]:
    """Soft limits of the correlation analysis for a given perturbation."""
    if isinstance(perturbation, NoiseSpectrumSpec):
        w, a = perturbation.frequencies, perturbation.line_amplitudes
        random = True
    else:
        w, a = perturbation.frequencies, perturbation.amplitudes
        random = False
    msgs = []
    if w.size == 0:
        return msgs
    slew = float(np.max(a * w)) if not random else float(np.sqrt(np.sum(a**2 * w**2)))
    if count_rate is not None and random and count_rate < slew / TWO_PI:
        msgs.append(f"count rate {count_rate:.4g}/s is below the phase slew rate "
                    f"{slew / TWO_PI:.4g}/s of the random perturbation")
    if dtau is not None and dtau * float(w.max()) > math.pi:
        msgs.append("dtau does not resolve the highest perturbation frequency")
    return msgs


def simulate(model: FringeModel, perturbation: PerturbationSpec | NoiseSpectrumSpec | None,
             n: int, count_rate: float, Y: float, seed: int) -> EventSet:
    """Event set of n impacts; T is the last arrival time."""
    t = sample_arrival_times(count_rate, n, seed)
    if perturbation is None:
        phases = np.zeros_like(t)
        kind = "none"
    elif isinstance(perturbation, NoiseSpectrumSpec):
        phases = broadband_phase(perturbation, t)
        kind = "gaussian"
    else:
        phases = evaluate_perturbation(perturbation, t)
        kind = "tones"
    for msg in applicability_warnings(perturbation or PerturbationSpec(), count_rate):
        log.warning(msg)
    y = sample_positions(t, model, None, Y, seed, phases=np.atleast_1d(phases))
    meta = {
        "generator": GENERATOR_ID,
        "seed": int(seed),
        "n_events": int(n),
        "count_rate_hz": float(count_rate),
        "contrast": model.contrast,
        "period_mm": model.period,
        "perturbation": kind,
    }
    if kind == "tones":
        meta["tone_frequencies_hz"] = [float(w / TWO_PI) for w in perturbation.frequencies]
        meta["tone_amplitudes_rad"] = [float(a) for a in perturbation.amplitudes]
        meta["tone_phases_rad"] = [float(p) for p in perturbation.phases]
    elif kind == "gaussian":
        p = perturbation
        meta.update(noise_phi0_rad=p.phi0, noise_center_hz=p.omega0 / TWO_PI,
                    noise_sigma_hz=p.sigma_omega / TWO_PI, noise_min_hz=p.omega_min / TWO_PI,
                    noise_max_hz=p.omega_max / TWO_PI, noise_resolution_hz=p.resolution / TWO_PI,
                    noise_normalization=p.normalization)
    return EventSet(t, y, float(t[-1]), Y, meta)
