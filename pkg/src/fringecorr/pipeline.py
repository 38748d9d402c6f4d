"""Config-driven workflows shared by the CLI, the scripts and the acceptance tests."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import analytic as an
from .correlator import correlate, normalize, zero_bin_sweep
from .errors import InvalidInputError, NumericalError
from .inference import (FringeFit, GaussianNoiseFit, fit_fringe_at_tau0, fit_gaussian_noise,
                        harmonic_exclusions, initial_noise_guess, invert_tone_amplitude,
                        noise_floor, temporal_spectrum, theoretical_g2_from_spectrum)
from .io import Config, band_from_config, model_from_config, parse_phase, tones_from_config
from .model import TWO_PI, CorrelationGrid, EventSet, FringeModel, PerturbationSpec
from .simulator import NoiseSpectrumSpec, broadband_phase, gaussian_noise_spectrum, simulate

log = logging.getLogger(__name__)


def axis(cfg: Config, key: str) -> np.ndarray:
    """[start, stop, count] list into a linspace; start/stop may be multiples of pi."""
    v = cfg.get(key, required=True)
    if not (isinstance(v, list) and len(v) == 3):
        raise InvalidInputError(f"{cfg._key(key)}: expected [start, stop, count]")
    lo, hi = parse_phase(v[0], cfg._key(key)), parse_phase(v[1], cfg._key(key))
    n = v[2]
    if not (isinstance(n, int) and n >= 2):
        raise InvalidInputError(f"{cfg._key(key)}: count must be an integer >= 2")
    return np.linspace(lo, hi, n)


# --------------------------------------------------------------------------
# simulation


def perturbation_from_config(cfg: Config, seed: int):
    p = cfg.section("perturbation", required=False)
    if p is None:
        return None
    if "gaussian" in p:
        b = band_from_config(p.section("gaussian"))
        try:
            return gaussian_noise_spectrum(b["phi0"], b["omega0"], b["sigma_omega"],
                                           b["omega_min"], b["omega_max"], b["resolution"],
                                           seed, b["normalization"])
        except InvalidInputError as exc:
            raise InvalidInputError(f"perturbation.gaussian: {exc}") from None
    if "tones" in p:
        return tones_from_config(p)
    raise InvalidInputError("perturbation: expected 'tones' or 'gaussian'")


def simulate_from_config(cfg: Config, seed: int | None = None):
    """(EventSet, perturbation) for a simulation preset or config."""
    if cfg.get("kind", "simulation") != "simulation":
        raise InvalidInputError(f"kind: {cfg.get('kind')!r} is not a simulation config")
    seed = int(cfg.number("seed", 0, integer=True)) if seed is None else int(seed)
    model = model_from_config(cfg)
    acq = cfg.section("acquisition")
    n = acq.number("n_events", positive=True, integer=True)
    if "count_rate_hz" in acq:
        rate = acq.number("count_rate_hz", positive=True)
    else:
        rate = n / acq.number("duration_s", positive=True)
    Y = acq.number("length_mm", positive=True)
    pert = perturbation_from_config(cfg, seed)
    return simulate(model, pert, n, rate, Y, seed), pert


def correlate_from_config(events: EventSet, cfg: Config, workers: int | None = None,
                          section: str = "correlate", **override) -> CorrelationGrid:
    c = cfg.section(section)
    du = override.get("du", c.number("du_mm", positive=True))
    dtau = override.get("dtau", c.number("dtau_s", positive=True))
    tau_max = override.get("tau_max", c.number("tau_max_s", positive=True))
    u_max = override.get("u_max", c.number("u_max_mm", events.Y / 4, positive=True))
    return correlate(events, du, dtau, tau_max, u_max, workers)


def phase_spectrum(spec: NoiseSpectrumSpec, T: float, dt: float):
    """Amplitude spectrum of the broad-band phase sampled every ``dt`` over [0, T).

    Scaled so that a lone tone of amplitude a on a bin centre shows height a.
    """
    n = int(T / dt)
    if n < 2:
        raise InvalidInputError("sampling grid needs at least two points")
    phi = broadband_phase(spec, dt * np.arange(n))
    mags = 2.0 * np.abs(np.fft.rfft(phi)) / n
    return TWO_PI * np.fft.rfftfreq(n, dt), mags


# --------------------------------------------------------------------------
# grid analysis


@dataclass(frozen=True)
class ToneAnalysis:
    line_height: float
    noise: float
    snr: float
    contrast_used: float
    phi: float | None


def analyze_tone(grid: CorrelationGrid, omega1: float, fringe: FringeFit | None = None,
                 contrast: float | None = None, u0: float = 0.0,
                 exclusion: float = TWO_PI * 3.0) -> ToneAnalysis:
    """Line height, noise floor, SNR and inverted amplitude of one tone line.

    Without a known ``contrast`` the fitted K_g2 is divided by the square root
    of the spatial sinc suppression to estimate the fringe contrast.
    """
    spec = temporal_spectrum(grid, u0)
    h = spec.magnitude_at(omega1)
    nf = noise_floor(spec, harmonic_exclusions(omega1, float(spec.frequencies.max()), exclusion))
    if fringe is None:
        fringe = fit_fringe_at_tau0(grid)
    lam = fringe.period_g2
    if contrast is None:
        s = float(an.sinc(math.pi * grid.du / lam))
        contrast = fringe.contrast_g2 / math.sqrt(s) if s > 0 else float("nan")
    try:
        phi = invert_tone_amplitude(h, contrast, omega1, grid.du, grid.dtau, lam)
    except (InvalidInputError, NumericalError) as exc:
        log.warning("tone inversion failed: %s", exc)
        phi = None
    return ToneAnalysis(h, nf, h / nf if nf > 0 else float("inf"), float(contrast), phi)


def du_sweep(events: EventSet, model: FringeModel, omega1: float, phi1: float, du_values,
             dtau: float, tau_max: float, exclusion: float = TWO_PI * 3.0,
             workers: int | None = None) -> dict[str, np.ndarray]:
    """Signal, noise and SNR of the tone line at u = 0 across spatial bin sizes.

    Every grid holds the single u bin |u| <= du/2; theory columns use the
    known model parameters.
    """
    du_values = np.asarray(du_values, float)
    grids = zero_bin_sweep(events, du_values, dtau, tau_max, workers)
    sig, noise = np.empty(du_values.size), np.empty(du_values.size)
    for i, g in enumerate(grids):
        spec = temporal_spectrum(normalize(g), 0.0)
        sig[i] = spec.magnitude_at(omega1)
        noise[i] = noise_floor(spec, harmonic_exclusions(omega1, float(spec.frequencies.max()),
                                                         exclusion))
    tone = PerturbationSpec.from_arrays([omega1], [phi1])
    # measured heights are magnitudes, so compare with |theory|
    th_sig = np.abs([an.expected_line_height(model, phi1, omega1, du, dtau) for du in du_values])
    th_noise = np.array([an.noise_theory(events.n, events.T, events.Y, du, dtau, tau_max)[1]
                         for du in du_values])
    th_snr = np.abs([an.snr_theory(model, tone, events.n, events.T, events.Y, tau_max, du,
                                     dtau)[0] for du in du_values])
    return {"du_over_lambda": du_values / model.period, "du_mm": du_values,
            "signal": sig, "signal_theory": th_sig, "noise": noise, "noise_theory": th_noise,
            "snr": sig / noise, "snr_theory": th_snr}


def sweep_from_config(cfg: Config, events: EventSet | None = None,
                      workers: int | None = None) -> dict[str, np.ndarray]:
    if events is None:
        events, _ = simulate_from_config(cfg)
    model = model_from_config(cfg)
    tones = tones_from_config(cfg.section("perturbation"))
    if len(tones) != 1:
        raise InvalidInputError("perturbation.tones: the sweep needs exactly one tone")
    s = cfg.section("sweep")
    du = model.period * np.geomspace(s.number("du_over_lambda_min", positive=True),
                                     s.number("du_over_lambda_max", positive=True),
                                     s.number("count", positive=True, integer=True))
    c = cfg.section("correlate")
    a = cfg.section("analyze", required=False)
    excl = TWO_PI * (a.number("exclusion_hz", 3.0, positive=True) if a else 3.0)
    return du_sweep(events, model, float(tones.frequencies[0]), float(tones.amplitudes[0]), du,
                    c.number("dtau_s", positive=True), c.number("tau_max_s", positive=True),
                    excl, workers)


# --------------------------------------------------------------------------
# broad-band fit


@dataclass(frozen=True)
class NoiseFitResult:
    fringe: FringeFit
    fit: GaussianNoiseFit
    init: tuple[float, float, float]


def fit_noise_grid(grid: CorrelationGrid, band: tuple[float, float, float],
                   phi0_init: float, normalization: str = "tone",
                   center_init: float | None = None, sigma_init: float | None = None,
                   tau_limit: float | None = None) -> NoiseFitResult:
    """Fringe fit, spectrum-based start values, then the broad-band model fit."""
    fringe = fit_fringe_at_tau0(grid)
    if center_init is None or sigma_init is None:
        w0, sw = initial_noise_guess(temporal_spectrum(grid, 0.0), band[:2])
        center_init = w0 if center_init is None else center_init
        sigma_init = sw if sigma_init is None else sigma_init
    init = (float(phi0_init), float(center_init), float(sigma_init))
    fit = fit_gaussian_noise(grid, fringe, init, band, normalization, tau_limit)
    return NoiseFitResult(fringe, fit, init)


def fit_noise_from_config(cfg: Config, grid: CorrelationGrid) -> NoiseFitResult:
    f = cfg.section("fit_noise")
    band = f.get("band_hz", required=True)
    if not (isinstance(band, list) and len(band) == 3):
        raise InvalidInputError("fit_noise.band_hz: expected [min, max, resolution]")
    band = tuple(TWO_PI * float(x) for x in band)
    return fit_noise_grid(grid, band, f.phase("phi0_init"), str(f.get("normalization", "dft")))


def theory_grid(result: NoiseFitResult, like: CorrelationGrid) -> CorrelationGrid:
    ff = result.fringe
    return theoretical_g2_from_spectrum(ff.contrast_g2, ff.period_g2, result.fit.spectrum(), like,
                                        ff.phase_offset)


# --------------------------------------------------------------------------
# analytic scenarios


def washout_zero(model: FringeModel | None = None) -> float:
    """First zero of |K_red(phi)| for one tone, located on the implemented J0."""
    model = model or FringeModel(1.0, 1.0)
    f = lambda p: an.reduced_contrast(model, PerturbationSpec.from_arrays([1.0], [p]))
    return float(brentq(f, 2.0, 3.0, xtol=1e-14))


def _grid_table(u, tau, field):
    uu, tt = np.meshgrid(u, tau, indexing="ij")
    return {"u_mm": uu.ravel(), "tau_s": tt.ravel(), **{k: v.ravel() for k, v in field.items()}}


def analytic_from_config(cfg: Config) -> dict[str, dict[str, np.ndarray]]:
    """Tables keyed by output name for an analytic scenario."""
    if cfg.get("kind") != "analytic":
        raise InvalidInputError(f"kind: {cfg.get('kind')!r} is not an analytic config")
    scen = cfg.get("scenario", required=True)
    model = model_from_config(cfg)
    pert = cfg.section("perturbation", required=False)
    spec = tones_from_config(pert) if pert is not None else PerturbationSpec()

    if scen == "washout":
        w = cfg.section("washout")
        phi = np.linspace(0.0, w.phase("phi_max"), w.number("points", integer=True, positive=True))
        kred = np.array([an.reduced_contrast(model, PerturbationSpec.from_arrays([1.0], [p]))
                         for p in phi]) / model.contrast
        y = axis(w, "pattern_y_mm")
        pattern = 1.0 + model.contrast * np.outer(kred, np.cos(model.wavenumber * y))
        pp, yy = np.meshgrid(phi, y, indexing="ij")
        return {"contrast": {"phi_over_pi": phi / math.pi, "k_red_over_k": kred,
                             "abs_k_red_over_k": np.abs(kred)},
                "pattern": {"phi_over_pi": pp.ravel() / math.pi, "y_mm": yy.ravel(),
                            "density": pattern.ravel()},
                "summary": {"first_zero_over_pi": np.array([washout_zero() / math.pi])}}

    if scen in ("surface", "explicit_vs_approximate"):
        g = cfg.section("grid")
        u, tau = axis(g, "u_mm"), axis(g, "tau_s")
        uu, tt = np.meshgrid(u, tau, indexing="ij")
        approx = an.g2_approx(uu, tt, model, spec)
        out = {"amplitude": {"tau_s": tau, "amplitude": an.correlation_amplitude(spec, tau)}}
        if scen == "surface":
            out["g2"] = _grid_table(u, tau, {"g2_approx": approx})
            return out
        explicit = an.g2_explicit(uu, tt, model, spec)
        out["g2"] = _grid_table(u, tau, {"g2_explicit": explicit, "g2_approx": approx,
                                         "difference": explicit - approx})
        return out

    if scen == "transition":
        g = cfg.section("grid")
        u, tau = axis(g, "u_mm"), axis(g, "tau_s")
        uu, tt = np.meshgrid(u, tau, indexing="ij")
        mults = cfg.section("transition").get("multiples", required=True)
        rows = {"m2": [], "max_abs_difference": [], "transition_ratio": []}
        fields = {}
        for M in mults:
            s2 = PerturbationSpec.from_arrays([spec.frequencies[0], M * spec.frequencies[0]],
                                              spec.amplitudes, spec.phases)
            ex = an.g2_explicit(uu, tt, model, s2)
            ap = an.g2_approx(uu, tt, model, s2)
            rows["m2"].append(M)
            rows["max_abs_difference"].append(float(np.max(np.abs(ex - ap))))
            rows["transition_ratio"].append(an.transition_ratio(s2))
            fields[f"m2_{M}"] = _grid_table(u, tau, {"g2_explicit": ex, "g2_approx": ap,
                                                     "difference": ex - ap})
        return {"summary": {k: np.array(v) for k, v in rows.items()}, **fields}

    if scen == "spectra":
        u = axis(cfg.section("grid"), "u_mm")
        kernel = an.default_kernel(spec)
        cols = {"u_mm": [], "frequency_hz": [], "explicit": [], "approximate": []}
        for ui in u:
            ex = an.amplitude_spectrum_analytic(model, spec, kernel, ui)
            ap = an.amplitude_spectrum_analytic(model, spec, None, ui, approximate=True)
            freqs = np.union1d(ex.frequencies, ap.frequencies)
            for w in freqs:
                cols["u_mm"].append(ui)
                cols["frequency_hz"].append(w / TWO_PI)
                cols["explicit"].append(ex.magnitude_at(w))
                cols["approximate"].append(ap.magnitude_at(w))
        out = {k: np.array(v) for k, v in cols.items()}
        out["difference"] = out["explicit"] - out["approximate"]
        return {"spectra": out}

    if scen == "discretization":
        d = cfg.section("discretization")
        dul, dtf = axis(d, "du_over_lambda"), axis(d, "dtau_times_f")
        w1 = float(spec.frequencies[0])
        f1 = w1 / TWO_PI
        a = np.array([[an.discretized_contrast(model, spec, x * model.period, y / f1)
                       for y in dtf] for x in dul]) / model.contrast
        fixed = d.number("fixed_du_over_lambda", positive=True) * model.period
        phis = axis(d, "phi")
        b = np.array([[an.discretized_contrast(model, PerturbationSpec.from_arrays([w1], [p]),
                                               fixed, y / f1) for y in dtf] for p in phis])
        aa, bb = np.meshgrid(dul, dtf, indexing="ij")
        pp, qq = np.meshgrid(phis, dtf, indexing="ij")
        return {"vs_bins": {"du_over_lambda": aa.ravel(), "dtau_times_f": bb.ravel(),
                            "k_g2_over_k": a.ravel()},
                "vs_phi": {"phi_over_pi": pp.ravel() / math.pi, "dtau_times_f": qq.ravel(),
                           "k_g2_over_k": b.ravel() / model.contrast}}

    if scen == "snr":
        s = cfg.section("snr")
        dul, dtf = axis(s, "du_over_lambda"), axis(s, "dtau_times_f")
        x = math.pi * dul
        c = an.snr_constants()
        fx = np.sin(x) / np.sqrt(x) / (math.sin(c["x_opt"]) / math.sqrt(c["x_opt"]))
        surf = np.outer(fx, an.sinc(math.pi * dtf))
        aa, bb = np.meshgrid(dul, dtf, indexing="ij")
        i = int(np.argmax(fx))
        return {"snr": {"du_over_lambda": aa.ravel(), "dtau_times_f": bb.ravel(),
                        "snr_normalized": surf.ravel()},
                "summary": {"du_opt_over_lambda": np.array([dul[i]]),
                            "f_at_opt": np.array([math.sin(c["x_opt"]) / math.sqrt(c["x_opt"])])}}

    raise InvalidInputError(f"scenario: unknown scenario {scen!r}")
