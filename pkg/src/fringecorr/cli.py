"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .correlator import correlate, g2_variance_estimate
from .errors import InvalidInputError, NumericalError
from .inference import (fit_fringe_at_tau0, histogram_contrast, phase_search, reconstruct,
                        temporal_spectrum)
from .io import (load_config, parse_override, parse_phase, read_events, read_grid, write_events,
                 write_grid, write_report, write_spectrum, write_table)
from .model import TWO_PI, PerturbationSpec

log = logging.getLogger("fringecorr")


def _overrides(items):
    return dict(parse_override(s) for s in items or [])


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{text!r} must be positive")
    return v


def _tone(text: str):
    """FREQ_HZ:AMPLITUDE[:PHASE], amplitude and phase in rad or multiples of pi."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise InvalidInputError(f"--tone {text!r}: expected FREQ_HZ:AMPLITUDE[:PHASE]")
    try:
        f = float(parts[0])
    except ValueError:
        raise InvalidInputError(f"--tone {text!r}: bad frequency") from None
    amp = parse_phase(parts[1], "--tone amplitude")
    ph = parse_phase(parts[2], "--tone phase") if len(parts) == 3 else None
    return TWO_PI * f, amp, ph


# --------------------------------------------------------------------------
# commands


def cmd_simulate(a) -> int:
    cfg = load_config(a.config, _overrides(a.set))
    events, pert = pl.simulate_from_config(cfg, a.seed)
    write_events(a.output, events, a.digits)
    lam = cfg.section("model").number("period_mm", positive=True)
    print(f"events      {events.n}")
    print(f"T_s         {events.T:.6g}")
    print(f"Y_mm        {events.Y:.6g}")
    print(f"contrast    {histogram_contrast(events, lam):.4f}  (time-integrated histogram)")
    ps = cfg.section("phase_spectrum", required=False)
    if ps is not None:
        if not hasattr(pert, "n_lines"):
            raise InvalidInputError("phase_spectrum: needs a gaussian perturbation")
        f, m = pl.phase_spectrum(pert, events.T, ps.number("sample_interval_s", positive=True))
        out = Path(str(a.output) + ".phase_spectrum.csv")
        write_table(out, {"frequency_hz": f / TWO_PI, "amplitude_rad": m,
                          "injected_rad": np.interp(f, pert.frequencies, pert.line_amplitudes,
                                                    left=0.0, right=0.0)})
        print(f"phase spectrum written to {out}")
    return 0


def cmd_correlate(a) -> int:
    events = read_events(a.events)
    grid = correlate(events, a.du, a.dtau, a.tau_max, a.u_max, a.workers,
                     period=a.period)
    write_grid(a.output, grid, binary=a.binary)
    n_bad = int((~grid.valid).sum())
    print(f"grid        {grid.n_u} x {grid.n_tau} (u x tau)")
    print(f"pairs       {int(grid.counts.sum())}")
    print(f"invalid     {n_bad} bins (edge correction below guard)")
    return 0


def cmd_analyze(a) -> int:
    grid = read_grid(a.grid)
    if not grid.is_normalized:
        raise InvalidInputError(f"{a.grid}: grid holds no normalized values")
    ff = fit_fringe_at_tau0(grid)
    rep = {
        "contrast_g2": (ff.contrast_g2, "dimensionless"),
        "contrast_g2_err": (ff.contrast_g2_err, "dimensionless"),
        "period_g2": (ff.period_g2, "mm"),
        "period_g2_err": (ff.period_g2_err, "mm"),
        "phase_offset": (ff.phase_offset, "rad"),
        "residual_rms": (ff.residual_rms, "dimensionless"),
        "below_noise_floor": (int(ff.below_noise_floor), "flag"),
        "sigma_g2_theory": (math.sqrt(g2_variance_estimate(grid)), "dimensionless"),
    }
    spec = temporal_spectrum(grid, a.u0)
    if a.spectrum:
        write_spectrum(a.spectrum, spec.frequencies, spec.magnitudes)
    if a.tone_hz is not None:
        t = pl.analyze_tone(grid, TWO_PI * a.tone_hz, ff, a.contrast, a.u0,
                            TWO_PI * a.exclusion_hz)
        rep.update({
            "tone_frequency": (a.tone_hz, "Hz"),
            "line_height": (t.line_height, "dimensionless"),
            "noise_floor": (t.noise, "dimensionless"),
            "snr": (t.snr, "dimensionless"),
            "contrast_used": (t.contrast_used, "dimensionless"),
            "peak_phase_deviation": (t.phi if t.phi is not None else float("nan"), "rad"),
            "peak_phase_deviation_over_pi":
                (t.phi / math.pi if t.phi is not None else float("nan"), "pi"),
        })
    if a.output:
        write_report(a.output, rep)
    for k, (v, unit) in rep.items():
        print(f"{k:30s} {v:.6g} {unit}")
    if ff.below_noise_floor:
        print("fringe contrast is below the noise floor")
    if a.tone_hz is not None and t.phi is None:
        print("numerical failure: no peak phase deviation reproduces the line height",
              file=sys.stderr)
        return 3
    return 0


def cmd_sweep(a) -> int:
    cfg = load_config(a.config, _overrides(a.set))
    events = read_events(a.events) if a.events else None
    tab = pl.sweep_from_config(cfg, events, a.workers)
    write_table(a.output, tab)
    i = int(np.argmax(tab["snr"]))
    print(f"snr argmax  du/lambda = {tab['du_over_lambda'][i]:.4f}")
    return 0


def cmd_fit_noise(a) -> int:
    grid = read_grid(a.grid)
    if not grid.is_normalized:
        raise InvalidInputError(f"{a.grid}: grid holds no normalized values")
    lo, hi, res = a.band_hz
    if not (hi > lo > 0 and res > 0):
        raise InvalidInputError("--band-hz needs 0 < min < max and resolution > 0")
    band = (TWO_PI * lo, TWO_PI * hi, TWO_PI * res)
    r = pl.fit_noise_grid(grid, band, parse_phase(a.phi0_init, "--phi0-init"), a.normalization,
                          TWO_PI * a.center_hz if a.center_hz else None,
                          TWO_PI * a.sigma_hz if a.sigma_hz else None, a.tau_limit)
    f = r.fit
    rep = {
        "contrast_g2": (r.fringe.contrast_g2, "dimensionless"),
        "period_g2": (r.fringe.period_g2, "mm"),
        "phi0": (f.phi0, "rad"), "phi0_err": (f.phi0_err, "rad"),
        "phi0_over_pi": (f.phi0 / math.pi, "pi"),
        "center": (f.omega0 / TWO_PI, "Hz"), "center_err": (f.omega0_err / TWO_PI, "Hz"),
        "sigma": (f.sigma_omega / TWO_PI, "Hz"), "sigma_err": (f.sigma_omega_err / TWO_PI, "Hz"),
        "residual_sum_squares": (f.goodness, "dimensionless"),
        "evaluations": (f.n_evaluations, "count"),
        "normalization": (f.normalization, "label"),
    }
    if a.output:
        write_report(a.output, rep)
    if a.theory_grid:
        write_grid(a.theory_grid, pl.theory_grid(r, grid), binary=a.binary)
    if a.spectra:
        sim = temporal_spectrum(grid, 0.0)
        th = temporal_spectrum(pl.theory_grid(r, grid), 0.0)
        spec = f.spectrum()
        write_table(a.spectra, {"frequency_hz": sim.frequencies / TWO_PI,
                                "simulated": sim.magnitudes, "theory": th.magnitudes})
        write_table(str(a.spectra) + ".lines.csv",
                    {"frequency_hz": spec.frequencies / TWO_PI,
                     "amplitude_rad": spec.line_amplitudes})
    for k, (v, unit) in rep.items():
        print(f"{k:24s} {v if isinstance(v, str) else format(v, '.6g')} {unit}")
    return 0


def cmd_reconstruct(a) -> int:
    events = read_events(a.events)
    tones = [_tone(t) for t in a.tone]
    if not tones:
        raise InvalidInputError("give at least one --tone")
    tones.sort(key=lambda x: x[0])
    freqs = [t[0] for t in tones]
    amps = [t[1] for t in tones]
    before = histogram_contrast(events, a.wavelength)
    rep = {"contrast_before": (before, "dimensionless")}
    if a.search:
        rel = parse_phase(a.relative_phase, "--relative-phase") if a.relative_phase else None
        res = phase_search(events, a.wavelength, freqs, amps, rel)
        phases = list(res.phases)
        rep["search_family"] = (res.family, "label")
        rep["search_evaluations"] = (res.evaluations, "count")
    else:
        if any(t[2] is None for t in tones):
            raise InvalidInputError("every --tone needs a phase unless --search is given")
        phases = [t[2] for t in tones]
    spec = PerturbationSpec.from_arrays(freqs, amps, phases)
    out = reconstruct(events, a.wavelength, spec)
    after = histogram_contrast(out, a.wavelength)
    rep["contrast_after"] = (after, "dimensionless")
    for i, p in enumerate(spec.phases):
        rep[f"phase_{i + 1}"] = (p, "rad")
    write_events(a.output, out)
    if a.report:
        write_report(a.report, rep)
    for k, (v, unit) in rep.items():
        print(f"{k:20s} {v if isinstance(v, str) else format(v, '.6g')} {unit}")
    return 0


def cmd_analytic(a) -> int:
    cfg = load_config(a.config, _overrides(a.set))
    out = Path(a.output)
    out.mkdir(parents=True, exist_ok=True)
    tables = pl.analytic_from_config(cfg)
    for name, tab in tables.items():
        write_table(out / f"{name}.csv", tab)
        print(f"wrote {out / (name + '.csv')}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fringecorr", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate an event file from a preset or config")
    s.add_argument("config", help="preset name (fig6, fig9, fig12, ...) or YAML path")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--digits", type=int, help="significant digits (default: lossless)")
    s.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. perturbation.tones.0.amplitude=0.76pi")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("correlate", help="pair-count and normalize an event file")
    s.add_argument("events")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--du", type=_positive, required=True, help="mm")
    s.add_argument("--dtau", type=_positive, required=True, help="s")
    s.add_argument("--tau-max", type=_positive, required=True, help="s")
    s.add_argument("--u-max", type=_positive, help="mm (default 5 periods or Y/4)")
    s.add_argument("--period", type=_positive, help="fringe period estimate, mm")
    s.add_argument("--workers", type=int, help="default from FRINGECORR_WORKERS or 1")
    s.add_argument("--binary", action="store_true", help="packed FCG1 output")
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("analyze", help="fringe fit, spectrum and tone inversion of a grid")
    s.add_argument("grid")
    s.add_argument("-o", "--output", help="report CSV")
    s.add_argument("--spectrum", help="spectrum CSV at u0")
    s.add_argument("--u0", type=float, default=0.0)
    s.add_argument("--tone-hz", type=_positive)
    s.add_argument("--contrast", type=_positive, help="known fringe contrast for the inversion")
    s.add_argument("--exclusion-hz", type=_positive, default=3.0)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="spatial bin-size sweep of the tone line SNR")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--events", help="reuse an event file instead of simulating")
    s.add_argument("--workers", type=int)
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit-noise", help="fit a Gaussian broad-band phase spectrum to a grid")
    s.add_argument("grid")
    s.add_argument("--band-hz", type=float, nargs=3, required=True,
                   metavar=("MIN", "MAX", "RESOLUTION"))
    s.add_argument("--phi0-init", required=True, help="rad or multiple of pi")
    s.add_argument("--center-hz", type=_positive)
    s.add_argument("--sigma-hz", type=_positive)
    s.add_argument("--normalization", choices=("dft", "tone"), default="dft")
    s.add_argument("--tau-limit", type=_positive, help="fit only tau <= this, s")
    s.add_argument("-o", "--output", help="report CSV")
    s.add_argument("--theory-grid", help="write the fitted model grid")
    s.add_argument("--spectra", help="write simulated/theory spectra at u = 0")
    s.add_argument("--binary", action="store_true")
    s.set_defaults(func=cmd_fit_noise)

    s = sub.add_parser("reconstruct", help="undo a tone perturbation in an event file")
    s.add_argument("events")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--wavelength", "--lambda", type=_positive, required=True, help="mm")
    s.add_argument("--tone", action="append", default=[], metavar="HZ:AMP[:PHASE]")
    s.add_argument("--search", action="store_true", help="search the phases")
    s.add_argument("--relative-phase", help="two tones: fixed phi2 - (w2/w1) phi1")
    s.add_argument("--report")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("analytic", help="evaluate an analytic scenario into CSV tables")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_analytic)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
