"""Parameter extraction from correlation grids and event sets."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit
from scipy.optimize import brentq, curve_fit, least_squares, minimize_scalar
from scipy.special import jv

from .analytic import sinc
from .correlator import correction_factors
from .errors import FitError, InvalidInputError, NoSolutionError
from .model import (TWO_PI, AmplitudeSpectrum, CorrelationGrid, EventSet, PerturbationSpec,
                    evaluate_perturbation, wrap_phase)
from .simulator import NoiseSpectrumSpec, gaussian_amplitudes

log = logging.getLogger(__name__)

J1_ARGMAX = 1.8411837813406593
J1_MAX = float(jv(1, J1_ARGMAX))


# --------------------------------------------------------------------------
# fringe fit at zero lag


@dataclass(frozen=True)
class FringeFit:
    contrast_g2: float
    contrast_g2_err: float
    period_g2: float
    period_g2_err: float
    phase_offset: float
    residual_rms: float
    amplitude: float
    amplitude_err: float
    below_noise_floor: bool
    tau_window: tuple[float, float]

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.period_g2


def _zero_slice(grid: CorrelationGrid, use_zero_lag: bool):
    if not grid.is_normalized:
        raise InvalidInputError("grid must be normalized first")
    u = grid.u_centers
    if use_zero_lag and grid.zero_lag_values is not None:
        ok = grid.zero_lag_valid
        w = 1.0 - np.abs(u) / grid.Y
        return u[ok], grid.zero_lag_values[ok], w[ok], (-grid.dtau / 2, grid.dtau / 2)
    ok = grid.valid[:, 0]
    w = correction_factors(grid)[:, 0]
    return u[ok], grid.values[ok, 0], w[ok], (0.0, grid.dtau)


def _periodogram_k(u, g, w, kmin, kmax, n=4000):
    ks = np.linspace(kmin, kmax, n)
    d = (g - 1.0) * w
    best, kbest = -1.0, ks[0]
    for k in ks:
        c, s = np.cos(k * u), np.sin(k * u)
        a = np.array([[np.dot(w * c, c), np.dot(w * c, s)], [np.dot(w * c, s), np.dot(w * s, s)]])
        b = np.array([np.dot(d, c), np.dot(d, s)])
        try:
            x = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            continue
        p = float(x @ b)
        if p > best:
            best, kbest = p, k
    return kbest


def fit_fringe_at_tau0(grid: CorrelationGrid, use_zero_lag: bool = True,
                       period_guess: float | None = None) -> FringeFit:
    """Fit 1 + (K^2/2) cos(k u + psi) to the zero-lag slice of a normalized grid.

    The centred zero-lag row is used when present, otherwise the first tau bin.
    Weights follow the edge correction (Poisson variance ~ 1/correction).
    ``below_noise_floor`` is set when the amplitude is under two standard errors.
    """
    u, g, w, window = _zero_slice(grid, use_zero_lag)
    if u.size < 4:
        raise InvalidInputError("need at least four valid u bins for the fringe fit")
    span = u.max() - u.min() + grid.du
    if period_guess is not None:
        k0 = TWO_PI / period_guess
    else:
        k0 = _periodogram_k(u, g, w, TWO_PI / span, math.pi / grid.du)
    c, s = np.cos(k0 * u), np.sin(k0 * u)
    design = np.column_stack([c, s]) * np.sqrt(w)[:, None]
    x, *_ = np.linalg.lstsq(design, (g - 1.0) * np.sqrt(w), rcond=None)
    a0 = float(np.hypot(*x)) or 1e-6
    psi0 = float(math.atan2(-x[1], x[0]))

    def model(uu, a, k, psi):
        return 1.0 + a * np.cos(k * uu + psi)

    def jac(uu, a, k, psi):
        c, s = np.cos(k * uu + psi), np.sin(k * uu + psi)
        return np.column_stack([c, -a * uu * s, -a * s])

    try:
        p, cov = curve_fit(model, u, g, p0=[a0, k0, psi0], sigma=1.0 / np.sqrt(w),
                           absolute_sigma=False, jac=jac, maxfev=5000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"fringe fit did not converge: {exc}",
                       best=np.array([a0, k0, psi0])) from exc
    a, k, psi = p
    if not np.all(np.isfinite(cov)):
        cov = np.full((3, 3), np.inf)
    err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    if a < 0:
        a, psi = -a, psi + math.pi
    k = abs(k)
    K = math.sqrt(2 * a)
    resid = g - model(u, *p)
    return FringeFit(
        contrast_g2=K,
        contrast_g2_err=float(err[0] / K) if K > 0 else float("inf"),
        period_g2=TWO_PI / k,
        period_g2_err=float(TWO_PI * err[1] / k**2),
        phase_offset=wrap_phase(psi),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        amplitude=float(a),
        amplitude_err=float(err[0]),
        below_noise_floor=bool(not a > 2 * err[0]),
        tau_window=window,
    )


# --------------------------------------------------------------------------
# temporal spectrum and tone inversion


def temporal_spectrum(grid: CorrelationGrid, u0: float = 0.0) -> AmplitudeSpectrum:
    """|DFT| of the g2 tau-series at the u bin holding u0, scaled by dtau/tau_max."""
    if not grid.is_normalized:
        raise InvalidInputError("grid must be normalized first")
    iu = grid.u_index(u0)
    if not np.all(grid.valid[iu]):
        raise InvalidInputError(f"tau series at u={u0} contains invalid bins")
    series = grid.values[iu]
    mags = np.abs(np.fft.rfft(series)) / series.size
    freqs = TWO_PI * np.arange(mags.size) / grid.tau_max
    return AmplitudeSpectrum(freqs, mags, float(grid.u_centers[iu]), TWO_PI / grid.tau_max)


def _decorrected_target(line_height, K, omega1, du, dtau, lam):
    if line_height < 0:
        raise InvalidInputError("line height must be >= 0")
    if not K > 0:
        raise InvalidInputError("contrast must be positive")
    corr = 0.5 * K**2 * float(sinc(math.pi * du / lam)) * float(sinc(omega1 * dtau / 2))
    if corr <= 0:
        raise NoSolutionError("discretization suppresses the line completely")
    return math.sqrt(line_height / corr)


def invert_tone_amplitude(line_height: float, K: float, omega1: float, du: float, dtau: float,
                          lam: float) -> float:
    """Peak phase deviation on the principal branch (0, 1.8412) from a line height."""
    j1 = _decorrected_target(line_height, K, omega1, du, dtau, lam)
    if j1 == 0:
        return 0.0
    if j1 > J1_MAX:
        raise NoSolutionError(
            f"line height implies J1 = {j1:.4g}, above the maximum {J1_MAX:.4g}")
    if j1 == J1_MAX:
        return J1_ARGMAX
    return float(brentq(lambda p: jv(1, p) - j1, 0.0, J1_ARGMAX, xtol=1e-15, rtol=1e-15))


def tone_amplitude_branches(line_height: float, K: float, omega1: float, du: float, dtau: float,
                            lam: float, phi_max: float = 3 * math.pi) -> list[float]:
    """Every phi in (0, phi_max] that reproduces the line height; first entry is principal."""
    target = _decorrected_target(line_height, K, omega1, du, dtau, lam) ** 2
    if target == 0:
        return [0.0]
    grid = np.linspace(1e-9, phi_max, 20000)
    f = jv(1, grid) ** 2 - target
    roots = []
    for i in np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]:
        roots.append(float(brentq(lambda p: jv(1, p) ** 2 - target, grid[i], grid[i + 1],
                                  xtol=1e-14)))
    if not roots:
        raise NoSolutionError("no peak phase deviation reproduces the line height")
    return roots


def noise_floor(spectrum: AmplitudeSpectrum, exclusion: Sequence[tuple[float, float]]) -> float:
    """Standard deviation of spectral magnitudes outside the excluded bands (rad/s)."""
    keep = np.ones(spectrum.frequencies.size, bool)
    for lo, hi in exclusion:
        keep &= ~((spectrum.frequencies >= lo) & (spectrum.frequencies <= hi))
    if keep.sum() < 2:
        raise InvalidInputError("no spectral bins left after exclusions")
    return float(np.std(spectrum.magnitudes[keep], ddof=1))


def harmonic_exclusions(omega1: float, top: float, half_width: float, dc: bool = True):
    """Bands around DC and every harmonic of omega1 up to ``top``."""
    bands = [(-1.0, half_width)] if dc else []
    m = 1
    while m * omega1 - half_width <= top:
        bands.append((m * omega1 - half_width, m * omega1 + half_width))
        m += 1
    return bands


# --------------------------------------------------------------------------
# Gaussian broad-band model


@njit(cache=True)
def _line_product(tau, freq, amps, j0sq, jm_sq, orders):
    # A(tau) = prod_j (J0^2 + 2 sum_m J_m^2 cos(m w_j tau)); jm_sq[j, m-1]
    out = np.ones(tau.size)
    for i in range(tau.size):
        acc = 1.0
        for j in range(freq.size):
            x = freq[j] * tau[i]
            c1 = math.cos(x)
            f = j0sq[j] + 2.0 * jm_sq[j, 0] * c1
            if orders[j] > 1:
                cprev, ccur = 1.0, c1
                for m in range(2, orders[j] + 1):
                    cnext = 2.0 * c1 * ccur - cprev
                    f += 2.0 * jm_sq[j, m - 1] * cnext
                    cprev, ccur = ccur, cnext
            acc *= f
        out[i] = acc
    return out


def line_product_amplitude(freq, amps, tau, threshold: float = 0.05):
    """A(tau) for a dense line spectrum; lines below ``threshold`` keep only m = 1."""
    freq = np.ascontiguousarray(freq, dtype=float)
    amps = np.ascontiguousarray(amps, dtype=float)
    tau = np.ascontiguousarray(np.atleast_1d(tau), dtype=float)
    top = int(math.ceil(float(amps.max()))) + 8 if amps.size else 1
    orders = np.where(amps < threshold, 1, top).astype(np.int64)
    ms = np.arange(1, top + 1)
    jm_sq = jv(ms[None, :], amps[:, None]) ** 2
    j0sq = jv(0, amps) ** 2
    return _line_product(tau, freq, amps, j0sq, np.ascontiguousarray(jm_sq), orders)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _bin_average_amplitude(freq, amps, centers, width, threshold):
    pts = (centers[:, None] + 0.5 * width * _GL_NODES[None, :]).ravel()
    a = line_product_amplitude(freq, amps, pts, threshold).reshape(centers.size, -1)
    return a @ (0.5 * _GL_WEIGHTS)


@dataclass(frozen=True)
class GaussianNoiseFit:
    phi0: float
    phi0_err: float
    omega0: float
    omega0_err: float
    sigma_omega: float
    sigma_omega_err: float
    goodness: float
    n_evaluations: int
    band: tuple[float, float, float]
    normalization: str = "dft"

    def spectrum(self, phases=None) -> NoiseSpectrumSpec:
        lo, hi, res = self.band
        return NoiseSpectrumSpec(self.phi0, self.omega0, self.sigma_omega, lo, hi, res,
                                 phases if phases is not None else np.zeros(0),
                                 self.normalization)


def _band_grid(band):
    lo, hi, res = band
    if not (hi > lo and res > 0):
        raise InvalidInputError("band needs omega_min < omega_max and resolution > 0")
    n = (hi - lo) / res
    if abs(n - round(n)) > 1e-6 * max(1.0, n):
        raise InvalidInputError("band width is not a whole number of resolution steps")
    return lo + res * np.arange(int(round(n)) + 1)


def _line_scale(n_lines: int, normalization: str) -> float:
    if normalization == "tone":
        return 1.0
    if normalization == "dft":
        return 1.0 / (math.sqrt(TWO_PI) * n_lines)
    raise InvalidInputError(f"unknown normalization {normalization!r}")


def fit_gaussian_noise(grid: CorrelationGrid, fringe: FringeFit,
                       init: tuple[float, float, float],
                       band: tuple[float, float, float], normalization: str = "dft",
                       tau_limit: float | None = None, threshold: float = 0.05,
                       max_nfev: int = 500) -> GaussianNoiseFit:
    """Least-squares fit of phi0, omega0, sigma_omega to a normalized grid.

    The model is 1 + (K^2/2) cos(k u + psi) A(tau) with A the product over
    the band lines, each with Bessel argument scale * phi_hat(w_j). Contrast,
    period and psi come from ``fringe`` and stay fixed. A is averaged over
    every tau bin and divided by its average over ``fringe.tau_window`` so the
    fixed contrast refers to the same window it was measured in.
    """
    if not grid.is_normalized:
        raise InvalidInputError("grid must be normalized first")
    freq = _band_grid(band)
    scale = _line_scale(freq.size, normalization)
    taus = grid.tau_centers
    cols = np.ones(taus.size, bool) if tau_limit is None else taus <= tau_limit
    vals = grid.values[:, cols]
    valid = grid.valid[:, cols]
    w = np.sqrt(correction_factors(grid)[:, cols])
    tc = taus[cols]
    if not valid.any():
        raise InvalidInputError("no valid bins to fit")
    lo, hi = fringe.tau_window
    ref_c, ref_w = np.array([(lo + hi) / 2]), hi - lo
    spatial = 0.5 * fringe.contrast_g2**2 * np.cos(fringe.wavenumber * grid.u_centers
                                                   + fringe.phase_offset)
    y = (vals - 1.0)[valid] * w[valid]
    nfev = 0

    def amplitude(params):
        phi0, w0, sw = params
        amps = scale * gaussian_amplitudes(freq, abs(phi0), w0, abs(sw))
        a = _bin_average_amplitude(freq, amps, tc, grid.dtau, threshold)
        ref = _bin_average_amplitude(freq, amps, ref_c, ref_w, threshold)[0]
        return a / ref

    def residuals(params):
        nonlocal nfev
        nfev += 1
        model = np.outer(spatial, amplitude(params))
        return model[valid] * w[valid] - y

    x0 = np.asarray(init, dtype=float)
    try:
        res = least_squares(residuals, x0, x_scale=np.abs(x0) + 1e-12, ftol=1e-10, xtol=1e-10,
                            gtol=1e-10, max_nfev=max_nfev, method="trf")
    except (ValueError, FloatingPointError) as exc:
        raise FitError(f"noise fit failed: {exc}", best=x0) from exc
    rss = float(np.sum(res.fun**2))
    if res.status <= 0:
        raise FitError(f"noise fit did not converge: {res.message}", best=res.x, residual=rss)
    dof = max(1, res.fun.size - 3)
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * rss / dof
        err = np.sqrt(np.maximum(np.diag(cov), 0))
    except np.linalg.LinAlgError:
        err = np.full(3, np.inf)
    phi0, w0, sw = res.x
    return GaussianNoiseFit(abs(float(phi0)), float(err[0]), float(w0), float(err[1]),
                            abs(float(sw)), float(err[2]), rss, nfev, tuple(band), normalization)


def initial_noise_guess(spectrum: AmplitudeSpectrum, band: tuple[float, float]) -> tuple[float, float]:
    """Centre and width (rad/s) of the dominant spectral band inside ``band``."""
    f, m = spectrum.frequencies, spectrum.magnitudes
    sel = (f >= band[0]) & (f <= band[1])
    if sel.sum() < 3:
        raise InvalidInputError("band holds fewer than three spectral bins")
    fs, ms = f[sel], m[sel]
    w0 = float(np.sum(fs * ms) / np.sum(ms))
    sw = float(np.sqrt(np.sum(ms * (fs - w0) ** 2) / np.sum(ms)))
    return w0, max(sw, spectrum.frequency_resolution)


def noise_model_g2(u, tau, K_g2: float, lambda_g2: float, frequencies, amplitudes,
                   phase_offset: float = 0.0, threshold: float = 0.05):
    """1 + (K^2/2) cos(2 pi u / lambda + psi) prod_j(...) at points (u, tau)."""
    u_b, tau_b = np.broadcast_arrays(np.asarray(u, float), np.asarray(tau, float))
    a = line_product_amplitude(frequencies, amplitudes, tau_b.ravel(), threshold)
    out = 1.0 + 0.5 * K_g2**2 * np.cos(TWO_PI * u_b.ravel() / lambda_g2 + phase_offset) * a
    return out.reshape(u_b.shape)


def theoretical_g2_from_spectrum(K_g2: float, lambda_g2: float,
                                 noise: NoiseSpectrumSpec | tuple, like: CorrelationGrid,
                                 phase_offset: float = 0.0) -> CorrelationGrid:
    """Model grid on the bin centres of ``like``; ``noise`` is a spec or (freqs, amps)."""
    if isinstance(noise, NoiseSpectrumSpec):
        freq, amps = noise.frequencies, noise.line_amplitudes
    else:
        freq, amps = (np.asarray(x, float) for x in noise)
    a = line_product_amplitude(freq, amps, like.tau_centers)
    vals = 1.0 + 0.5 * K_g2**2 * np.outer(
        np.cos(TWO_PI * like.u_centers / lambda_g2 + phase_offset), a)
    zl = 1.0 + 0.5 * K_g2**2 * np.cos(TWO_PI * like.u_centers / lambda_g2 + phase_offset)
    return like.replace(counts=np.zeros_like(like.counts), values=np.maximum(vals, 0.0),
                        valid=np.ones(vals.shape, bool),
                        zero_lag_counts=None, zero_lag_values=np.maximum(zl, 0.0),
                        zero_lag_valid=np.ones(like.n_u, bool))


# --------------------------------------------------------------------------
# reconstruction


def fold(y, Y: float):
    """Periodic fold into [-Y/2, Y/2)."""
    out = np.mod(np.asarray(y, float) + Y / 2, Y) - Y / 2
    return np.minimum(out, Y / 2)


def reconstruct(events: EventSet, lam: float, spec: PerturbationSpec) -> EventSet:
    """Undo a known phase perturbation, folding positions back into the window.

    With the density 1 + K cos(k y + phi(t)) the fringe is displaced by
    -phi(t) / k, so the correction is y + (lambda / 2 pi) phi(t).
    """
    if not lam > 0:
        raise InvalidInputError("lambda must be positive")
    if not len(spec):
        return events
    shift = lam / TWO_PI * evaluate_perturbation(spec, events.t)
    return events.with_positions(fold(events.y + shift, events.Y), reconstructed=True)


def _hist_fit(y, Y, lam, bin_width=None):
    bw = lam / 20 if bin_width is None else bin_width
    nb = max(3, int(round(Y / bw)))
    idx = np.minimum(((y + Y / 2) * (nb / Y)).astype(np.int64), nb - 1)
    counts = np.bincount(idx, minlength=nb).astype(float)
    centers = (np.arange(nb) + 0.5) * (Y / nb) - Y / 2
    k = TWO_PI / lam
    design = np.column_stack([np.ones(nb), np.cos(k * centers), np.sin(k * centers)])
    c, *_ = np.linalg.lstsq(design, counts, rcond=None)
    if c[0] <= 0:
        return 0.0, 0.0
    return float(np.hypot(c[1], c[2]) / c[0]), float(math.atan2(-c[2], c[1]))


def histogram_contrast(events: EventSet, lam: float, bin_width: float | None = None) -> float:
    """Fringe contrast of the position histogram (bins of lambda/20 by default)."""
    if events.n == 0:
        raise InvalidInputError("event set is empty")
    return _hist_fit(events.y, events.Y, lam, bin_width)[0]


@dataclass(frozen=True)
class PhaseSearchResult:
    phases: tuple[float, ...]
    contrast: float
    evaluations: int
    family: str = "free"


def phase_search(events: EventSet, lam: float, frequencies: Sequence[float],
                 amplitudes: Sequence[float], relative_phase: float | None = None,
                 grid_points: int = 48, sweeps: int = 3,
                 bin_width: float | None = None) -> PhaseSearchResult:
    """Maximize the reconstructed histogram contrast over the tone phases.

    Coarse grid with ``grid_points`` per free phase, then bounded scalar
    refinement per coordinate for ``sweeps`` rounds. For two tones a known
    ``relative_phase`` c = phi_2 - (w_2/w_1) phi_1 restricts the search to the
    line phi_2 = r phi_1 + c and its time-reversed partner
    phi_2 = r phi_1 - c + pi (1 - r).
    """
    w = np.asarray(frequencies, float)
    a = np.asarray(amplitudes, float)
    if w.size != a.size or w.size == 0:
        raise InvalidInputError("need matching, nonempty frequency and amplitude lists")
    t, y, Y = events.t, events.y, events.Y
    scale = lam / TWO_PI
    cos_t = np.cos(np.multiply.outer(w, t)) * a[:, None] * scale
    sin_t = np.sin(np.multiply.outer(w, t)) * a[:, None] * scale
    evals = 0

    def contrast(ph):
        nonlocal evals
        evals += 1
        shift = np.cos(ph) @ cos_t - np.sin(ph) @ sin_t
        return _hist_fit(fold(y + shift, Y), Y, lam, bin_width)[0]

    if not np.any(a):
        c0 = contrast(np.zeros(w.size))
        return PhaseSearchResult(tuple(0.0 for _ in w), c0, evals, "none")

    step = TWO_PI / grid_points
    coarse = -math.pi + step * np.arange(1, grid_points + 1)  # (-pi, pi]

    def refine(fn, x0):
        x = np.array(x0, float)
        best = fn(x)
        for _ in range(sweeps):
            for d in range(x.size):
                def f1(v, d=d):
                    z = x.copy()
                    z[d] = v
                    return -fn(z)
                r = minimize_scalar(f1, bounds=(x[d] - step, x[d] + step), method="bounded",
                                    options={"xatol": 1e-5})
                if -r.fun > best:
                    best, x[d] = -r.fun, r.x
        return x, best

    if relative_phase is not None:
        if w.size != 2:
            raise InvalidInputError("the phase constraint applies to exactly two tones")
        r = w[1] / w[0]
        offsets = {"direct": relative_phase, "mirror": -relative_phase + math.pi * (1 - r)}
        best = None
        for name, off in offsets.items():
            fn = lambda p, off=off: contrast(np.array([p[0], r * p[0] + off]))
            vals = [fn([p]) for p in coarse]
            x, c = refine(fn, [coarse[int(np.argmax(vals))]])
            if best is None or c > best[1]:
                best = (np.array([x[0], r * x[0] + off]), c, name)
        ph, c, fam = best
        return PhaseSearchResult(tuple(wrap_phase(ph)), c, evals, fam)

    if grid_points ** w.size <= 5000:
        mesh = np.stack(np.meshgrid(*[coarse] * w.size, indexing="ij"), -1).reshape(-1, w.size)
        vals = [contrast(p) for p in mesh]
        start = mesh[int(np.argmax(vals))]
    else:
        start = np.zeros(w.size)
        for d in range(w.size):
            trial = []
            for p in coarse:
                z = start.copy()
                z[d] = p
                trial.append(contrast(z))
            start[d] = coarse[int(np.argmax(trial))]
    x, c = refine(contrast, start)
    return PhaseSearchResult(tuple(wrap_phase(x)), c, evals, "free")
