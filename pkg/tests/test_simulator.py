import math

import numpy as np
import pytest
from scipy import stats

from fringecorr import simulator as sim
from fringecorr.errors import InvalidInputError
from fringecorr.model import FringeModel, PerturbationSpec

TWO_PI = 2 * math.pi


def test_arrival_gaps_are_exponential():
    t = sim.sample_arrival_times(5000.0, 50_000, seed=3)
    assert t[0] == 0.0 and np.all(np.diff(t) >= 0)
    res = stats.kstest(np.diff(t), "expon", args=(0, 1 / 5000.0))
    assert res.pvalue > 1e-3


def test_positions_follow_fringe_density():
    model = FringeModel(0.7, 2.0)
    Y = 8.0
    t = np.zeros(200_000)
    y = sim.sample_positions(t, model, None, Y, seed=11)
    assert np.all(np.abs(y) <= Y / 2)
    edges = np.linspace(-Y / 2, Y / 2, 81)
    obs, _ = np.histogram(y, edges)
    # expected counts from the integrated density over each bin
    k = model.wavenumber
    cdf = edges + model.contrast * np.sin(k * edges) / k
    exp = np.diff(cdf) / (cdf[-1] - cdf[0]) * y.size
    chi2 = np.sum((obs - exp) ** 2 / exp)
    assert stats.chi2.sf(chi2, edges.size - 2) > 1e-3


def test_positions_follow_phase_shift():
    model = FringeModel(0.9, 1.0)
    t = np.zeros(100_000)
    y = sim.sample_positions(t, model, None, 10.0, seed=2, phases=np.full(t.size, 1.0))
    z = np.mean(np.exp(1j * model.wavenumber * y))
    # density 1 + K cos(ky + 1) gives <e^{iky}> = (K/2) e^{-i}
    assert abs(z - 0.45 * np.exp(-1j)) < 0.01


def test_simulate_is_deterministic_and_prefix_stable():
    model = FringeModel(0.5, 2.0)
    pert = PerturbationSpec.from_hz([50], [1.0])
    a = sim.simulate(model, pert, 70_000, 4000.0, 10.0, seed=5)
    b = sim.simulate(model, pert, 70_000, 4000.0, 10.0, seed=5)
    c = sim.simulate(model, pert, 100_000, 4000.0, 10.0, seed=5)
    d = sim.simulate(model, pert, 70_000, 4000.0, 10.0, seed=6)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.y, b.y)
    assert np.array_equal(a.t, c.t[:70_000])
    full = sim.POSITION_CHUNK
    assert np.array_equal(a.y[:full], c.y[:full])
    assert not np.array_equal(a.y, d.y)
    assert a.T == a.t[-1]
    assert a.metadata["seed"] == 5 and a.metadata["perturbation"] == "tones"


def test_simulate_validation():
    model = FringeModel(0.5, 2.0)
    with pytest.raises(InvalidInputError):
        sim.simulate(model, None, 0, 1.0, 1.0, seed=1)
    with pytest.raises(InvalidInputError):
        sim.simulate(model, None, 10, -1.0, 1.0, seed=1)
    with pytest.raises(InvalidInputError):
        sim.simulate(model, None, 10, 1.0, 1.0, seed=-1)


def test_noise_spectrum_grid_and_validation():
    s = sim.gaussian_noise_spectrum(0.1, TWO_PI * 50, TWO_PI * 5, TWO_PI * 30, TWO_PI * 70,
                                    TWO_PI * 0.5, seed=1)
    assert s.n_lines == 81
    assert np.all((s.phases > -math.pi) & (s.phases <= math.pi))
    assert s.scale == pytest.approx(1 / (math.sqrt(TWO_PI) * 81))
    with pytest.raises(InvalidInputError):
        sim.NoiseSpectrumSpec(0.1, 1.0, 0.1, 2.0, 3.0, 0.1)
    with pytest.raises(InvalidInputError):
        sim.NoiseSpectrumSpec(0.1, 2.5, 0.1, 2.0, 3.0, 0.3)
    with pytest.raises(InvalidInputError):
        sim.NoiseSpectrumSpec(0.1, 2.5, 0.1, 2.0, 3.0, 0.1, normalization="x")


def test_broadband_table_matches_direct_sum():
    s = sim.gaussian_noise_spectrum(0.05, TWO_PI * 50, TWO_PI * 5, TWO_PI * 30, TWO_PI * 70,
                                    TWO_PI * 0.01, seed=4, normalization="tone")
    t = np.sort(np.random.default_rng(0).uniform(0, 300, 3000))
    a = sim.broadband_phase(s, t, method="direct")
    b = sim.broadband_phase(s, t, method="table")
    assert np.max(np.abs(a - b)) < 1e-9 * np.sum(s.line_amplitudes)


def test_broadband_as_perturbation_agrees():
    from fringecorr.model import evaluate_perturbation
    s = sim.gaussian_noise_spectrum(0.05, TWO_PI * 50, TWO_PI * 5, TWO_PI * 40, TWO_PI * 60,
                                    TWO_PI * 1.0, seed=2)
    t = np.linspace(0, 1, 50)
    assert sim.broadband_phase(s, t) == pytest.approx(
        evaluate_perturbation(s.as_perturbation(), t), abs=1e-12)


def test_applicability_warnings():
    pert = PerturbationSpec.from_hz([500], [1.0])
    assert sim.applicability_warnings(pert, dtau=0.01)
    assert not sim.applicability_warnings(pert, dtau=1e-4)
    s = sim.gaussian_noise_spectrum(1.0, TWO_PI * 50, TWO_PI * 5, TWO_PI * 30, TWO_PI * 70,
                                    TWO_PI * 1.0, seed=1, normalization="tone")
    assert sim.applicability_warnings(s, count_rate=1.0)
