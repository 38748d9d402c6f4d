import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq
from scipy.special import jv

from fringecorr import analytic as an
from fringecorr.errors import InvalidInputError, NumericalError
from fringecorr.model import FringeModel, PerturbationSpec

from oracles import (amplitude_by_time_average, bessel_series, bin_averaged_contrast,
                     time_averaged_contrast)

MODEL = FringeModel(0.6, 2.0)


def test_bessel_against_series_oracle():
    rng = np.random.default_rng(7)
    orders = rng.integers(-12, 13, 20)
    xs = rng.uniform(0.0, 3 * math.pi, 20)
    for n, x in zip(orders, xs):
        ref = float(bessel_series(int(n), x))
        assert abs(jv(int(n), x) - ref) < 1e-12, (n, x)


def test_reduced_contrast_matches_time_average():
    for phi in [0.1, 0.5, 1.0, 2.0, 2.5, 4.0]:
        m = FringeModel(0.8, 1.0)
        got = an.reduced_contrast(m, PerturbationSpec.from_hz([50], [phi]))
        assert got == pytest.approx(time_averaged_contrast(0.8, phi), abs=1e-4)


def test_washout_zero_and_sign():
    phis = np.linspace(0, 3 * math.pi, 3001)
    k = np.array([an.reduced_contrast(MODEL, PerturbationSpec.from_hz([50], [p])) for p in phis])
    i = int(np.argmax(k < 0))
    zero = brentq(lambda p: an.reduced_contrast(MODEL, PerturbationSpec.from_hz([50], [p])),
                  phis[i - 1], phis[i])
    assert zero / math.pi == pytest.approx(0.7655, abs=5e-4)
    assert an.reduced_contrast(MODEL, PerturbationSpec()) == pytest.approx(0.6)


@pytest.mark.parametrize("freqs,expected", [
    ([50, 100], Fraction(1, 50)), ([50, 75], Fraction(1, 25)), (["0.5", "1.5"], Fraction(2)),
    ([30], Fraction(1, 30))])
def test_superperiod(freqs, expected):
    assert an.superperiod_exact(freqs) == expected
    assert an.superperiod(freqs) == pytest.approx(float(expected))


def test_superperiod_incommensurate():
    assert an.superperiod([50, 50 * math.sqrt(2)]) is None


def test_kernel_closed_under_negation_and_contains_trivial():
    spec = PerturbationSpec.from_hz([50, 100], [1.0, 1.0])
    k = an.default_kernel(spec, m_max=4)
    assert k.contains([0, 0], [0, 0])
    assert k.contains([2, 0], [-2, 0])
    assert k.contains([1, 0], [1, -1])  # non-trivial: 2 w1 - w2 = 0
    for n, m in zip(k.n[:50], k.m[:50]):
        assert k.contains(-n, -m)
    s = (k.n + k.m) @ np.array([1, 2])
    assert np.all(s == 0)


def test_kernel_budget_and_validation():
    with pytest.raises(InvalidInputError):
        an.enumerate_kernel([1.0, 2.0, 3.0, 4.0, 5.0], 10)
    with pytest.raises(InvalidInputError):
        an.enumerate_kernel([], 3)
    with pytest.raises(InvalidInputError):
        an.enumerate_kernel([1.0], -1)


def test_kernel_tolerance_mode():
    w = np.array([1.0, math.sqrt(2)])
    k = an.enumerate_kernel(w, 3, tolerance=1e-6)
    assert np.all((k.n + k.m) == 0)


def test_single_tone_explicit_equals_approx():
    spec = PerturbationSpec.from_hz([50], [1.3], [0.7])
    u = np.linspace(-3, 3, 41)[:, None]
    tau = np.linspace(0, 0.05, 37)[None, :]
    a = an.g2_explicit(u, tau, MODEL, spec)
    b = an.g2_approx(u, tau, MODEL, spec)
    assert np.max(np.abs(a - b)) < 1e-12


def test_approx_amplitude_matches_time_average():
    spec = PerturbationSpec.from_hz([50], [1.1])
    tau = np.linspace(0, 0.03, 13)
    assert an.correlation_amplitude(spec, tau) == pytest.approx(
        amplitude_by_time_average(1.1, 2 * math.pi * 50, tau), abs=1e-12)


@given(st.floats(0, 3), st.floats(0, 3), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(-5, 5), st.floats(0, 0.1))
def test_explicit_is_real_and_capped(p1, p2, a1, a2, u, tau):
    spec = PerturbationSpec.from_hz([50, 100], [p1, p2], [a1, a2])
    k = an.default_kernel(spec, m_max=6)
    assert abs(an.explicit_imaginary_residue(u, tau, MODEL, spec, k)) < 1e-12
    g = an.g2_explicit(u, tau, MODEL, spec, k)
    assert abs(g - 1.0) <= 0.5 * MODEL.contrast**2 + 1e-9


def test_explicit_differs_from_approx_for_commensurate_tones():
    spec = PerturbationSpec.from_hz([50, 100], [1.5, 1.5], [0.3, -0.4])
    tau = 0.005
    a = an.g2_explicit(0.0, tau, MODEL, spec)
    b = an.g2_approx(0.0, tau, MODEL, spec)
    assert abs(a - b) > 1e-3


def test_multiplet_weight_forms_agree():
    spec = PerturbationSpec.from_hz([50, 100], [1.0, 0.5], [0.2, 0.1])
    k = an.enumerate_kernel(spec.frequencies, 2)
    mp = k.multiplets(spec)[3]
    assert an.multiplet_weight(mp, spec) == pytest.approx(
        an.multiplet_weight(mp.n, mp.m, spec))
    assert mp.weight == pytest.approx(an.multiplet_weight(mp, spec)[0])


def test_transition_ratios():
    r5 = an.transition_ratio(PerturbationSpec.from_hz([50, 250], [0.5 * math.pi] * 2))
    r4 = an.transition_ratio(PerturbationSpec.from_hz([50, 200], [0.5 * math.pi] * 2))
    assert 1 / 30 <= r5 <= 1 / 19
    assert 1 / 9 <= r4 <= 1 / 5
    with pytest.raises(InvalidInputError):
        an.transition_ratio(PerturbationSpec.from_hz([50, 75], [1, 1]))
    assert an.approximation_valid(PerturbationSpec.from_hz([50, 250], [0.5, 0.5]))


def test_spectrum_single_tone_lines():
    phi = 1.2
    spec = PerturbationSpec.from_hz([50], [phi])
    w1 = 2 * math.pi * 50
    for approximate in (False, True):
        s = an.amplitude_spectrum_analytic(MODEL, spec, approximate=approximate)
        for m in (1, 2, 3):
            # cos(m w tau) with amplitude K^2 J_m^2 folds to one line of that height
            assert s.magnitude_at(m * w1) == pytest.approx(MODEL.contrast**2 * jv(m, phi)**2,
                                                           rel=1e-9)
        assert s.dc == pytest.approx(1 + 0.5 * MODEL.contrast**2 * jv(0, phi)**2)


def test_spectrum_explicit_and_approx_agree_for_incommensurate_tones():
    spec = PerturbationSpec.from_hz([50, 50 * math.sqrt(3)], [0.8, 0.6])
    a = an.amplitude_spectrum_analytic(MODEL, spec, m_max=5)
    b = an.amplitude_spectrum_analytic(MODEL, spec, approximate=True, m_max=5)
    for w in (2 * math.pi * 50, 2 * math.pi * 50 * math.sqrt(3)):
        assert a.magnitude_at(w) == pytest.approx(b.magnitude_at(w), rel=1e-6)


@pytest.mark.parametrize("phi,du,dtau", [(0.4 * math.pi, 0.74, 2e-4), (1.0, 0.3, 1e-3),
                                         (2.0, 1.5, 4e-3), (0.5, 0.0, 2e-3), (0.9, 0.5, 0.0)])
def test_discretized_contrast_against_quadrature(phi, du, dtau):
    spec = PerturbationSpec.from_hz([50], [phi])
    got = an.discretized_contrast(MODEL, spec, du, dtau)
    ref = bin_averaged_contrast(0.6, 2.0, phi, 2 * math.pi * 50, du, dtau)
    assert got == pytest.approx(ref, abs=1e-6)


def test_snr_constants():
    c = an.snr_constants()
    assert c["alpha"] == pytest.approx(an.SNR_ALPHA, abs=1e-4)
    assert c["snr_opt"] == pytest.approx(an.SNR_OPT, abs=1e-4)
    assert c["du_opt_fraction"] == pytest.approx(an.DU_OPT_FRACTION, abs=1e-3)
    assert c["phi_min_coeff"] == pytest.approx(an.PHI_MIN_COEFF, rel=1e-4)


def test_snr_theory_optimum_location():
    spec = PerturbationSpec.from_hz([50], [0.4 * math.pi])
    dus = np.linspace(0.02, 2.0, 2000)
    vals = [an.snr_theory(MODEL, spec, 1.95e5, 39.05, 20, 1, du, 0)[0] for du in dus]
    assert dus[int(np.argmax(vals))] / 2.0 == pytest.approx(an.DU_OPT_FRACTION, abs=2e-3)
    snr, th = an.snr_theory(MODEL, spec, 1.95e5, 39.05, 20, 1, 0.74, 0)
    assert max(vals) == pytest.approx(th.snr_opt, rel=1e-3)


def test_noise_theory_and_validation():
    s, f = an.noise_theory(1e5, 10, 20, 0.5, 1e-3, 0.1)
    assert s**2 == pytest.approx(10 * 20 / (1e10 * 1e-3 * 0.5))
    assert f**2 == pytest.approx((1 - math.pi / 4) * s**2 / 100)
    with pytest.raises(InvalidInputError):
        an.noise_theory(0, 1, 1, 1, 1, 1)
    with pytest.raises(InvalidInputError):
        an.snr_theory(MODEL, PerturbationSpec.from_hz([50, 60], [1, 1]), 1, 1, 1, 1, 1, 1)


def test_explicit_rejects_open_kernel():
    spec = PerturbationSpec.from_hz([50, 100], [1.0, 1.0], [0.4, 1.1])
    k = an.default_kernel(spec, m_max=4)
    keep = ~((k.n[:, 0] == 1) & (k.m[:, 0] == 1))
    half = an.KernelEnumeration(k.n[keep], k.m[keep], k.frequencies, k.m_max, k.tolerance)
    with pytest.raises(NumericalError):
        an.g2_explicit(0.3, 0.004, MODEL, spec, half)
