"""Broad-band noise scenario: simulate, correlate, fit, and write spectra.

Writes the phase spectrum of the injected noise, the fit report, the fitted
model grid and the simulated/theoretical g2 spectra at u = 0. With
``--long-spectrum`` the u = 0 spectra are recomputed with a 10 s lag range
(100 mHz resolution), which takes several minutes.
"""
import argparse
import math
import time
from pathlib import Path

from fringecorr.correlator import correlate
from fringecorr.inference import temporal_spectrum, theoretical_g2_from_spectrum
from fringecorr.io import load_config, write_grid, write_report, write_table
from fringecorr.model import TWO_PI
from fringecorr.pipeline import (correlate_from_config, fit_noise_from_config, phase_spectrum,
                                 simulate_from_config, theory_grid)

ap = argparse.ArgumentParser()
ap.add_argument("outdir", nargs="?", default="out/broadband")
ap.add_argument("--long-spectrum", action="store_true")
args = ap.parse_args()
out = Path(args.outdir)
out.mkdir(parents=True, exist_ok=True)

cfg = load_config("fig12")
t0 = time.perf_counter()
events, noise = simulate_from_config(cfg)
print(f"simulated {events.n} events over {events.T:.2f} s  ({time.perf_counter() - t0:.1f}s)")

f, m = phase_spectrum(noise, events.T, load_config("fig11").section("phase_spectrum")
                      .number("sample_interval_s"))
write_table(out / "phase_spectrum.csv", {"frequency_hz": f / TWO_PI, "amplitude_rad": m})

t0 = time.perf_counter()
grid = correlate_from_config(events, cfg)
print(f"correlated {grid.n_u} x {grid.n_tau} bins  ({time.perf_counter() - t0:.1f}s)")
write_grid(out / "g2_sim.fcg", grid, binary=True)

t0 = time.perf_counter()
res = fit_noise_from_config(cfg, grid)
fit, ff = res.fit, res.fringe
print(f"fit took {time.perf_counter() - t0:.1f}s, {fit.n_evaluations} evaluations")
print(f"K_g2 = {ff.contrast_g2:.4f} +- {ff.contrast_g2_err:.4f}, "
      f"lambda_g2 = {ff.period_g2:.4f} +- {ff.period_g2_err:.4f} mm")
print(f"phi0 = ({fit.phi0 / math.pi * 100:.3f} +- {fit.phi0_err / math.pi * 100:.3f})e-2 pi")
print(f"f0 = {fit.omega0 / TWO_PI:.3f} +- {fit.omega0_err / TWO_PI:.3f} Hz")
print(f"sigma = {fit.sigma_omega / TWO_PI:.3f} +- {fit.sigma_omega_err / TWO_PI:.3f} Hz")
write_report(out / "fit.csv", {
    "contrast_g2": (ff.contrast_g2, "dimensionless"), "period_g2": (ff.period_g2, "mm"),
    "phi0": (fit.phi0, "rad"), "phi0_err": (fit.phi0_err, "rad"),
    "center": (fit.omega0 / TWO_PI, "Hz"), "center_err": (fit.omega0_err / TWO_PI, "Hz"),
    "sigma": (fit.sigma_omega / TWO_PI, "Hz"), "sigma_err": (fit.sigma_omega_err / TWO_PI, "Hz")})
th = theory_grid(res, grid)
write_grid(out / "g2_theory.fcg", th, binary=True)
spec_fit = fit.spectrum()
write_table(out / "fitted_lines.csv", {"frequency_hz": spec_fit.frequencies / TWO_PI,
                                       "amplitude_rad": spec_fit.line_amplitudes})

if args.long_spectrum:
    c = load_config("fig13").section("spectrum_grid")
    t0 = time.perf_counter()
    grid = correlate(events, c.number("du_mm"), c.number("dtau_s"), c.number("tau_max_s"),
                     c.number("u_max_mm"))
    th = theoretical_g2_from_spectrum(ff.contrast_g2, ff.period_g2, spec_fit, grid,
                                      ff.phase_offset)
    print(f"long-lag grid took {time.perf_counter() - t0:.1f}s")
sim_s, th_s = temporal_spectrum(grid, 0.0), temporal_spectrum(th, 0.0)
write_table(out / "g2_spectra_u0.csv", {"frequency_hz": sim_s.frequencies / TWO_PI,
                                        "simulated": sim_s.magnitudes,
                                        "theory": th_s.magnitudes})
print(f"outputs in {out}")
