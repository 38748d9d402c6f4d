import numpy as np
import pytest
from hypothesis import given, strategies as st

from fringecorr import correlator as cor
from fringecorr.errors import InvalidInputError
from fringecorr.model import EventSet

from oracles import brute_force_counts


def random_events(rng, n, T=1.0, Y=10.0, dyadic=False):
    if dyadic:
        t = rng.integers(0, int(T * 2**16), n) / 2**16
        y = rng.integers(-int(Y / 2 * 2**10), int(Y / 2 * 2**10) + 1, n) / 2**10
    else:
        t = rng.uniform(0, T, n)
        y = rng.uniform(-Y / 2, Y / 2, n)
    return EventSet(t, y, T, Y)


def test_single_pair_example():
    ev = EventSet([0.0, 1e-3], [0.0, 0.5], T=1.0, Y=10.0)
    g = cor.pair_count(ev, du=1.0, dtau=1e-3, tau_max=1e-3, u_max=2.0)
    assert g.counts.sum() == 1
    assert g.counts[g.u_index(0.5), 0] == 1


def test_three_event_example():
    ev = EventSet([0.0, 1e-3, 2e-3], [0.0, 0.0, 0.0], T=1.0, Y=10.0)
    g = cor.pair_count(ev, du=1.0, dtau=5e-4, tau_max=2e-3, u_max=1.0)
    per_tau = g.counts.sum(axis=0)
    assert per_tau.tolist() == [0, 0, 2, 1]
    assert g.zero_lag_counts.sum() == 0


@given(st.integers(2, 60), st.integers(0, 2**32 - 1),
       st.sampled_from([0.3, 0.5, 1.0]), st.sampled_from([0.01, 0.02, 0.05]))
def test_pair_count_matches_brute_force(n, seed, du, dtau):
    ev = random_events(np.random.default_rng(seed), n)
    g = cor.pair_count(ev, du, dtau, 0.3, 3.0)
    ref = brute_force_counts(ev.t, ev.y, du, dtau, g.tau_max, g.u_max)
    assert np.array_equal(g.counts, ref)


def test_zero_lag_row_brute_force():
    rng = np.random.default_rng(1)
    ev = random_events(rng, 400, T=0.05)
    g = cor.pair_count(ev, 0.5, 1e-3, 0.01, 2.0)
    n_u = g.n_u
    ref = np.zeros(n_u, int)
    for i in range(ev.n):
        for j in range(ev.n):
            if i == j or abs(ev.t[j] - ev.t[i]) >= 0.5e-3:
                continue
            dy = ev.y[j] - ev.y[i]
            if -g.u_max <= dy <= g.u_max:
                ref[min(int((dy + g.u_max) * (1 / g.du)), n_u - 1)] += 1
    assert np.array_equal(g.zero_lag_counts, ref)
    # both orientations: the row is symmetric about u = 0
    assert np.array_equal(g.zero_lag_counts, g.zero_lag_counts[::-1])


def test_grid_is_odd_and_centred():
    n_u, n_tau, u_max, tau_max = cor.grid_shape(0.74, 2e-4, 1.0, 10.0)
    assert n_u % 2 == 1
    assert n_tau == 5000
    assert u_max == pytest.approx(n_u * 0.74 / 2)


def test_worker_count_invariance():
    ev = random_events(np.random.default_rng(5), 3000, T=2.0)
    a = cor.correlate(ev, 0.3, 1e-3, 0.2, 3.0, workers=1)
    b = cor.correlate(ev, 0.3, 1e-3, 0.2, 3.0, workers=4)
    c = cor.correlate(ev, 0.3, 1e-3, 0.2, 3.0, workers=7)
    for other in (b, c):
        assert np.array_equal(a.counts, other.counts)
        assert np.array_equal(a.values, other.values)
        assert np.array_equal(a.zero_lag_counts, other.zero_lag_counts)


def test_workers_env(monkeypatch):
    monkeypatch.setenv(cor.WORKERS_ENV, "3")
    assert cor.default_workers() == 3
    monkeypatch.setenv(cor.WORKERS_ENV, "0")
    with pytest.raises(InvalidInputError):
        cor.default_workers()


def test_normalize_uniform_events_near_one():
    ev = random_events(np.random.default_rng(9), 20_000, T=4.0, Y=20.0)
    g = cor.correlate(ev, 1.0, 0.01, 0.5, 3.0)
    assert np.mean(g.values[g.valid]) == pytest.approx(1.0, abs=0.01)
    corr = cor.correction_factors(g)
    scale = cor.g2_variance_estimate(g)
    assert g.values[0, 0] == pytest.approx(scale * g.counts[0, 0] / corr[0, 0])


def test_normalize_guard_marks_invalid():
    ev = random_events(np.random.default_rng(2), 200, T=1.0, Y=2.0)
    g = cor.correlate(ev, 0.2, 0.1, 1.0, 1.9)
    assert not g.valid.all()
    assert np.all(g.values[~g.valid] == 0)


def test_zero_bin_sweep_matches_pair_count():
    ev = random_events(np.random.default_rng(3), 2000, T=1.0)
    dus = [0.7, 0.1, 0.33]
    sweep = cor.zero_bin_sweep(ev, dus, 2e-3, 0.1, workers=2)
    for du, g in zip(dus, sweep):
        ref = cor.pair_count(ev, du, 2e-3, 0.1, du / 2, zero_lag=False)
        assert ref.n_u == 1
        assert np.array_equal(g.counts, ref.counts)


@pytest.mark.parametrize("kw", [dict(du=0), dict(dtau=-1), dict(tau_max=5.0)])
def test_pair_count_validation(kw):
    ev = random_events(np.random.default_rng(0), 10)
    args = dict(du=0.5, dtau=0.01, tau_max=0.1, u_max=1.0)
    args.update(kw)
    with pytest.raises(InvalidInputError):
        cor.pair_count(ev, **args)


def test_pair_count_rejects_empty():
    with pytest.raises(InvalidInputError):
        cor.pair_count(EventSet([], [], 1.0, 1.0), 0.5, 0.01, 0.1, 1.0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 1000))
def test_time_shift_and_reversal_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    T, Y = 1.0, 8.0
    base = random_events(rng, 300, T=0.5, Y=4.0, dyadic=True)
    args = (0.25, 2**-7, 2**-3, 2.0)
    ref = cor.pair_count(EventSet(base.t, base.y, T, Y), *args).counts
    t0 = shift / 2**11
    shifted = cor.pair_count(EventSet(base.t + t0, base.y, T, Y), *args).counts
    assert np.array_equal(ref, shifted)
    rev = cor.pair_count(EventSet(T - base.t, -base.y, T, Y), *args).counts
    assert np.array_equal(ref, rev)
    yshift = cor.pair_count(EventSet(base.t, base.y + 1.5, T, Y), *args).counts
    assert np.array_equal(ref, yshift)
