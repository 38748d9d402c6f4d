"""Closed-form correlation theory for harmonically dephased fringes.

Everything here is a pure function of a ``FringeModel`` and a
``PerturbationSpec``. Bessel functions come from ``scipy.special.jv`` which
accepts real orders; the test-suite checks it against a high-precision series.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from scipy.special import jv

from .errors import InvalidInputError, NumericalError
from .model import TWO_PI, FringeModel, Multiplet, PerturbationSpec

# SNR constants; see ``snr_constants`` for their derivation.
SNR_ALPHA = 0.6089
SNR_OPT = 0.5183
DU_OPT_FRACTION = 0.371
PHI_MIN_COEFF = 0.8842 * math.pi

DEFAULT_BUDGET = 10**7


def sinc(x):
    """Unnormalized sinc, sin(x)/x."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def default_m_max(spec: PerturbationSpec | Iterable[float]) -> int:
    amps = spec.amplitudes if isinstance(spec, PerturbationSpec) else np.asarray(list(spec))
    top = float(np.max(amps)) if len(amps) else 0.0
    return int(math.ceil(top)) + 8


def reduced_contrast(model: FringeModel, spec: PerturbationSpec) -> float:
    """Signed time-averaged contrast K * prod_j J0(phi_j).

    The product form is exact for a single tone and for incommensurate tones;
    for commensurate tones with large deviations it is the leading term only.
    A negative value means the averaged fringe is shifted by pi.
    """
    return float(model.contrast * np.prod(jv(0, spec.amplitudes)))


# --------------------------------------------------------------------------
# kernel of the frequency constraint


def _as_fraction(x) -> Fraction | None:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    fr = Fraction(float(x)).limit_denominator(10**6)
    return fr if float(fr) == float(x) else None


def superperiod_exact(frequencies_hz: Sequence) -> Fraction | None:
    fracs = [_as_fraction(f) for f in frequencies_hz]
    if not fracs or any(f is None for f in fracs):
        return None
    if any(f <= 0 for f in fracs):
        raise InvalidInputError("frequencies must be positive")
    den = reduce(math.lcm, (f.denominator for f in fracs))
    g = reduce(math.gcd, (int(f * den) for f in fracs))
    return 1 / Fraction(g, den)


def superperiod(frequencies_hz: Sequence) -> float | None:
    """Common period 1/gcd(f_1..f_N) in seconds, or None if incommensurate.

    Floats are accepted when they are exactly representable by a fraction with
    denominator <= 1e6; strings are parsed as exact decimals.
    """
    ts = superperiod_exact(frequencies_hz)
    return None if ts is None else float(ts)


@dataclass(frozen=True)
class KernelEnumeration:
    """All integer vectors (n, m) with sum_j (n_j + m_j) w_j ~ 0.

    ``n`` and ``m`` are int arrays of shape (count, N).
    """

    n: np.ndarray
    m: np.ndarray
    frequencies: np.ndarray
    m_max: int
    tolerance: float

    def __len__(self):
        return self.n.shape[0]

    def multiplets(self, spec: PerturbationSpec) -> list[Multiplet]:
        t = kernel_terms(self, spec)
        return [Multiplet(tuple(int(v) for v in self.n[i]), tuple(int(v) for v in self.m[i]),
                          float(t.weight[i]), float(t.spatial_phase[i]),
                          float(t.temporal_phase[i]), float(t.frequency[i]))
                for i in range(len(self))]

    def contains(self, n: Sequence[int], m: Sequence[int]) -> bool:
        hit = np.all(self.n == np.asarray(n), axis=1) & np.all(self.m == np.asarray(m), axis=1)
        return bool(hit.any())


def enumerate_kernel(frequencies: Sequence[float], m_max: int, tolerance: float | None = None,
                     *, T: float | None = None, frequencies_hz: Sequence | None = None,
                     budget: int = DEFAULT_BUDGET) -> KernelEnumeration:
    """Enumerate kernel multiplets with |n_j|, |m_j| <= m_max.

    ``tolerance`` in rad/s; None means 2*pi/T when T is given, otherwise an
    exact integer-relation test on rational Hz values (``frequencies_hz`` or
    the rationalized ``frequencies / 2pi``). Tolerance 0 is the exact test too.
    """
    w = np.asarray(frequencies, dtype=float)
    if w.size == 0:
        raise InvalidInputError("kernel enumeration needs at least one frequency")
    if m_max < 0:
        raise InvalidInputError("m_max must be >= 0")
    if tolerance is None and T is not None:
        tolerance = TWO_PI / T
    nf = w.size
    span = 4 * m_max + 1
    if span**nf > budget:
        raise InvalidInputError(
            f"kernel enumeration over {span}^{nf} sum vectors exceeds budget {budget}")

    axes = [np.arange(-2 * m_max, 2 * m_max + 1)] * nf
    s = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, nf)
    if tolerance is None or tolerance == 0:
        hz = frequencies_hz if frequencies_hz is not None else [x / TWO_PI for x in w]
        fr = [_as_fraction(f) for f in hz]
        if any(f is None for f in fr):
            raise InvalidInputError(
                "exact kernel test needs rational frequencies; pass a tolerance instead")
        den = reduce(math.lcm, (f.denominator for f in fr))
        ints = np.array([int(f * den) for f in fr], dtype=np.int64)
        keep = (s @ ints) == 0
        tolerance = 0.0
    else:
        if tolerance < 0:
            raise InvalidInputError("tolerance must be >= 0")
        keep = np.abs(s @ w) < tolerance
    s = s[keep]

    sizes = np.prod(2 * m_max + 1 - np.abs(s), axis=1)
    total = int(sizes.sum())
    if total > budget:
        raise InvalidInputError(f"kernel holds {total} multiplets, above budget {budget}")

    n_rows, m_rows = [], []
    for sv in s:
        ranges = [range(max(-m_max, sj - m_max), min(m_max, sj + m_max) + 1) for sj in sv]
        ns = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, nf)
        n_rows.append(ns)
        m_rows.append(sv[None, :] - ns)
    n_arr = np.concatenate(n_rows) if n_rows else np.zeros((0, nf), np.int64)
    m_arr = np.concatenate(m_rows) if m_rows else np.zeros((0, nf), np.int64)
    return KernelEnumeration(n_arr, m_arr, w.copy(), int(m_max), float(tolerance))


@dataclass(frozen=True)
class KernelTerms:
    weight: np.ndarray
    spatial_phase: np.ndarray
    temporal_phase: np.ndarray
    frequency: np.ndarray


def _bessel_table(amps: np.ndarray, m_max: int) -> np.ndarray:
    orders = np.arange(-m_max, m_max + 1)
    return jv(orders[None, :], amps[:, None])


def kernel_terms(kernel: KernelEnumeration, spec: PerturbationSpec) -> KernelTerms:
    if len(spec) != kernel.n.shape[1]:
        raise InvalidInputError("kernel and perturbation have different tone counts")
    if not np.allclose(kernel.frequencies, spec.frequencies, rtol=1e-12, atol=0):
        raise InvalidInputError("kernel was built for different frequencies")
    M = kernel.m_max
    tab = _bessel_table(spec.amplitudes, M)
    idx = np.arange(len(spec))
    weight = np.prod(tab[idx, kernel.n + M] * tab[idx, kernel.m + M], axis=1)
    sp = 0.5 * np.pi * np.sum(kernel.m - kernel.n, axis=1)
    tp = (kernel.m + kernel.n) @ spec.phases
    freq = kernel.m @ spec.frequencies
    return KernelTerms(weight, sp, tp, freq)


def multiplet_weight(n: Sequence[int] | Multiplet, m: Sequence[int] | PerturbationSpec | None = None,
                     spec: PerturbationSpec | None = None):
    """(weight, spatial phase, temporal phase, frequency component) of one multiplet.

    Call as ``multiplet_weight(n, m, spec)`` or ``multiplet_weight(multiplet, spec)``.
    """
    if isinstance(n, Multiplet):
        spec = m
        n, m = n.n, n.m
    n = np.asarray(n, dtype=int)
    m = np.asarray(m, dtype=int)
    if n.shape != (len(spec),) or m.shape != (len(spec),):
        raise InvalidInputError("multiplet needs one (n, m) pair per tone")
    a = spec.amplitudes
    weight = float(np.prod(jv(n, a) * jv(m, a)))
    return (weight, float(0.5 * np.pi * np.sum(m - n)), float(np.dot(m + n, spec.phases)),
            float(np.dot(m, spec.frequencies)))


def default_kernel(spec: PerturbationSpec, m_max: int | None = None,
                   tolerance: float | None = None, T: float | None = None):
    """Kernel with the default truncation; exact rational test unless told otherwise."""
    if not len(spec):
        return None
    if m_max is None:
        m_max = default_m_max(spec)
    try:
        return enumerate_kernel(spec.frequencies, m_max, tolerance, T=T)
    except InvalidInputError:
        if tolerance is None and T is None:
            # irrational frequencies: relative tolerance well below any real relation
            return enumerate_kernel(spec.frequencies, m_max,
                                    1e-9 * float(spec.frequencies.max()))
        raise


def _explicit_sums(tau, model, spec, kernel):
    tau = np.asarray(tau, dtype=float)
    if kernel is None:
        one = np.ones_like(tau)
        return one, np.zeros_like(tau), np.zeros_like(tau), np.zeros_like(tau)
    t = kernel_terms(kernel, spec)
    arg = np.multiply.outer(tau, t.frequency) + t.temporal_phase
    bc = t.weight * np.cos(t.spatial_phase)
    bs = t.weight * np.sin(t.spatial_phase)
    ca, sa = np.cos(arg), np.sin(arg)
    return ca @ bc, ca @ bs, sa @ bc, sa @ bs


def explicit_imaginary_residue(u, tau, model: FringeModel, spec: PerturbationSpec,
                               kernel: KernelEnumeration | None = None):
    """Imaginary part of the explicit multiplet sum (zero for a symmetric kernel)."""
    if kernel is None and len(spec):
        kernel = default_kernel(spec)
    u, tau = np.broadcast_arrays(np.asarray(u, float), np.asarray(tau, float))
    ku = model.wavenumber * u
    _, _, ic, is_ = _explicit_sums(tau.ravel(), model, spec, kernel)
    res = 0.5 * model.contrast**2 * (np.cos(ku).ravel() * ic - np.sin(ku).ravel() * is_)
    return res.reshape(u.shape)


def g2_explicit(u, tau, model: FringeModel, spec: PerturbationSpec,
                kernel: KernelEnumeration | None = None):
    """Explicit correlation function, summed over every kernel multiplet.

    u in mm, tau in s; broadcasting applies. ``kernel`` defaults to the exact
    kernel with the default truncation.
    """
    if kernel is None and len(spec):
        kernel = default_kernel(spec)
    u_b, tau_b = np.broadcast_arrays(np.asarray(u, float), np.asarray(tau, float))
    ku = model.wavenumber * u_b.ravel()
    c, s, ic, is_ = _explicit_sums(tau_b.ravel(), model, spec, kernel)
    half_k2 = 0.5 * model.contrast**2
    imag = half_k2 * (np.cos(ku) * ic - np.sin(ku) * is_)
    if imag.size and np.max(np.abs(imag)) > 1e-9:
        raise NumericalError("explicit sum has a non-negligible imaginary part; "
                             "kernel is not closed under negation")
    out = 1.0 + half_k2 * (np.cos(ku) * c - np.sin(ku) * s)
    out = out.reshape(u_b.shape)
    return float(out) if out.ndim == 0 else out


def correlation_amplitude(spec: PerturbationSpec, tau, m_max: int | None = None):
    """A(tau) = prod_j (J0^2 + 2 sum_m J_m^2 cos(m w_j tau))."""
    tau = np.asarray(tau, dtype=float)
    if m_max is None:
        m_max = default_m_max(spec)
    out = np.ones_like(tau)
    orders = np.arange(1, m_max + 1)
    for c in spec.components:
        jm = jv(orders, c.peak_phase_deviation) ** 2
        f = jv(0, c.peak_phase_deviation) ** 2 + 2.0 * (
            np.cos(np.multiply.outer(tau, orders * c.frequency)) @ jm)
        out = out * f
    return float(out) if out.ndim == 0 else out


def g2_approx(u, tau, model: FringeModel, spec: PerturbationSpec, m_max: int | None = None):
    """Approximate correlation 1 + (K^2/2) A(tau) cos(k u)."""
    u_b, tau_b = np.broadcast_arrays(np.asarray(u, float), np.asarray(tau, float))
    a = correlation_amplitude(spec, tau_b, m_max)
    out = 1.0 + 0.5 * model.contrast**2 * a * np.cos(model.wavenumber * u_b)
    return float(out) if np.ndim(out) == 0 else out


def _harmonic_orders(spec: PerturbationSpec, rtol: float = 1e-9) -> np.ndarray:
    w = spec.frequencies
    ratios = w / w[0]
    orders = np.rint(ratios)
    if len(spec) < 2 or np.any(np.abs(ratios - orders) > rtol * ratios) or orders[1] < 2:
        raise InvalidInputError(
            "transition ratio needs at least two tones with w_j = M_j * w_1, M_j >= 2")
    return orders.astype(int)


def transition_ratio(spec: PerturbationSpec) -> float:
    """Magnitude of the leading non-trivial over the leading trivial multiplet weight.

    Tones must be integer multiples of the first, w_j = M_j w_1. The leading
    Bessel order of tone j is phi_j - 1 for phi_j >= 1 and 0 otherwise; orders
    are used as real numbers (including M_2/2 for odd M_2). Only the first two
    tones enter, the remaining factors cancel.
    """
    M = _harmonic_orders(spec)
    p1, p2 = spec.amplitudes[:2]
    o1 = p1 - 1.0 if p1 >= 1.0 else 0.0
    o2 = p2 - 1.0 if p2 >= 1.0 else 0.0
    num = jv(M[1] / 2.0, p1) ** 2 * jv(-(o2 + 1.0), p2)
    den = jv(o1, p1) ** 2 * jv(o2, p2)
    if den == 0.0:
        raise NumericalError("leading trivial multiplet weight vanishes")
    return float(abs(num / den))


def approximation_valid(spec: PerturbationSpec, threshold: float = 0.05) -> bool:
    return transition_ratio(spec) < threshold


# --------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class LineSpectrum:
    """One-sided discrete spectrum; ``dc`` is the magnitude of the zero line."""

    dc: float
    frequencies: np.ndarray  # rad/s, > 0
    magnitudes: np.ndarray

    def magnitude_at(self, omega: float, rtol: float = 1e-9) -> float:
        hit = np.isclose(self.frequencies, omega, rtol=rtol, atol=0)
        return float(self.magnitudes[hit].sum())


def _group(freq: np.ndarray, coeff: np.ndarray, scale: float):
    key = np.rint(freq / scale).astype(np.int64)
    uniq, inv = np.unique(key, return_inverse=True)
    sums = np.zeros(uniq.size, dtype=coeff.dtype)
    np.add.at(sums, inv, coeff)
    return uniq, sums


def amplitude_spectrum_analytic(model: FringeModel, spec: PerturbationSpec,
                                kernel: KernelEnumeration | None = None, u: float = 0.0,
                                approximate: bool = False,
                                m_max: int | None = None) -> LineSpectrum:
    """Line spectrum of g2 at fixed u, folded onto w >= 0.

    Each Dirac coefficient is normalized so that a cosine of amplitude a in
    g2(tau) gives a/2 at +w and at -w; the folded line is the sum of both
    magnitudes. The explicit form weights the +w and -w coefficients of a
    multiplet by cos(Phi + pi/4) and cos(Phi - pi/4).
    """
    half_k2 = 0.5 * model.contrast**2
    ku = model.wavenumber * u
    if not len(spec):
        return LineSpectrum(abs(1.0 + half_k2 * math.cos(ku)), np.zeros(0), np.zeros(0))
    scale = 1e-9 * float(spec.frequencies.min())

    if approximate:
        if m_max is None:
            m_max = default_m_max(spec)
        nf = len(spec)
        if (2 * m_max + 1) ** nf > DEFAULT_BUDGET:
            raise InvalidInputError("too many tones for the approximate line expansion")
        tab = _bessel_table(spec.amplitudes, m_max) ** 2
        mv = np.stack(np.meshgrid(*[np.arange(-m_max, m_max + 1)] * nf, indexing="ij"),
                      axis=-1).reshape(-1, nf)
        w = np.prod(tab[np.arange(nf), mv + m_max], axis=1)
        freq = mv @ spec.frequencies
        keys, amp = _group(freq, half_k2 * math.cos(ku) * w, scale)
        dc = 1.0 + amp[keys == 0].sum()
        pos = keys > 0
        # the tau-series is even, so -w carries the same coefficient
        mags = 2.0 * np.abs(amp[pos])
        return LineSpectrum(abs(float(dc)), keys[pos] * scale, mags)

    if kernel is None:
        kernel = default_kernel(spec, m_max)
    t = kernel_terms(kernel, spec)
    base = half_k2 * t.weight * np.cos(ku + t.spatial_phase) / math.sqrt(2.0)
    plus = base * np.cos(t.temporal_phase + np.pi / 4)    # coefficient at +w_M
    minus = base * np.cos(t.temporal_phase - np.pi / 4)   # coefficient at -w_M
    freq = np.concatenate([t.frequency, -t.frequency])
    keys, amp = _group(freq, np.concatenate([plus, minus]), scale)
    dc = 1.0 + amp[keys == 0].sum()
    lookup = dict(zip(keys.tolist(), amp.tolist()))
    pos = np.sort(keys[keys > 0])
    mags = np.array([abs(lookup[k]) + abs(lookup.get(-k, 0.0)) for k in pos])
    return LineSpectrum(abs(float(dc)), pos * scale, mags)


# --------------------------------------------------------------------------
# discretization, noise and SNR


def _single_tone(spec: PerturbationSpec):
    if len(spec) != 1:
        raise InvalidInputError("this relation is derived for exactly one tone")
    return spec.components[0]


def discretized_amplitude(spec: PerturbationSpec, dtau: float, m_max: int | None = None) -> float:
    """Bin-averaged A(0) over |tau| < dtau/2 for one tone."""
    c = _single_tone(spec)
    if m_max is None:
        m_max = default_m_max(spec)
    m = np.arange(-m_max, m_max + 1)
    return float(np.sum(jv(m, c.peak_phase_deviation) ** 2 * sinc(m * c.frequency * dtau / 2)))


def discretized_contrast(model: FringeModel, spec: PerturbationSpec, du: float, dtau: float,
                         m_max: int | None = None) -> float:
    """Contrast seen in a (du, dtau) binned grid at the origin, single tone."""
    a0 = discretized_amplitude(spec, dtau, m_max)
    return float(model.contrast * math.sqrt(abs(a0 * sinc(model.wavenumber * du / 2))))


def noise_theory(N: float, T: float, Y: float, du: float, dtau: float, tau_max: float):
    """(sigma_g2, sigma_spectrum): standard deviations of a g2 bin and of |F|."""
    for name, v in dict(N=N, T=T, Y=Y, du=du, dtau=dtau, tau_max=tau_max).items():
        if not v > 0:
            raise InvalidInputError(f"{name} must be positive")
    var_g2 = T * Y / (N**2 * dtau * du)
    var_f = (1.0 - math.pi / 4) * var_g2 / (tau_max / dtau)
    return math.sqrt(var_g2), math.sqrt(var_f)


@dataclass(frozen=True)
class SnrTheory:
    alpha: float
    du_opt: float
    snr_opt: float
    phi_min: float


def snr_constants() -> dict[str, float]:
    """Recompute the rounded SNR constants from first principles."""
    from scipy.optimize import brentq
    alpha = 0.5 / math.sqrt(math.pi * (1 - math.pi / 4))
    x = brentq(lambda x: math.tan(x) - 2 * x, 0.5, 1.5)
    fmax = math.sin(x) / math.sqrt(x)
    return {"alpha": alpha, "x_opt": x, "du_opt_fraction": x / math.pi,
            "snr_opt": alpha * fmax, "phi_min_coeff": 2.0 / math.sqrt(alpha * fmax)}


def snr_theory(model: FringeModel, spec: PerturbationSpec, N: float, T: float, Y: float,
               tau_max: float, du: float, dtau: float):
    """Expected SNR of the first spectral line and the derived optimum quantities."""
    c = _single_tone(spec)
    for name, v in dict(N=N, T=T, Y=Y, tau_max=tau_max, du=du).items():
        if not v > 0:
            raise InvalidInputError(f"{name} must be positive")
    if dtau < 0:
        raise InvalidInputError("dtau must be >= 0")
    if tau_max > T:
        raise InvalidInputError("tau_max must not exceed T")
    lam = model.period
    K = model.contrast
    scale = N * math.sqrt(tau_max / T) / math.sqrt(Y / lam)
    alpha = SNR_ALPHA * K**2 * jv(1, c.peak_phase_deviation) ** 2 * scale
    x = model.wavenumber * du / 2
    snr = alpha * math.sin(x) / math.sqrt(x) * float(sinc(c.frequency * dtau / 2))
    snr_opt = SNR_OPT * K**2 * jv(1, c.peak_phase_deviation) ** 2 * scale
    if K > 0:
        phi_min = PHI_MIN_COEFF * (Y / lam) ** 0.25 / (K * math.sqrt(N) * (tau_max / T) ** 0.25)
    else:
        phi_min = math.inf
    return float(snr), SnrTheory(float(alpha), DU_OPT_FRACTION * lam, float(snr_opt), phi_min)


def expected_line_height(model: FringeModel, phi1: float, omega1: float, du: float,
                         dtau: float) -> float:
    """Height of the first tone line in a binned spectrum at u = 0."""
    return float(0.5 * model.contrast**2 * jv(1, phi1) ** 2
                 * sinc(model.wavenumber * du / 2) * sinc(omega1 * dtau / 2))
