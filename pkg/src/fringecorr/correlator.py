"""Numerical g2(u, tau) by windowed pair counting.

Events are time-sorted, so for every event only the partners inside
``tau_max`` are visited (two-pointer sweep, O(N * W)). The outer index is
split into fixed slices; each slice fills a private integer grid and the
grids are summed, which keeps the result independent of the worker count.
"""
from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange

from .errors import InvalidInputError
from .model import CorrelationGrid, EventSet

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

WORKERS_ENV = "FRINGECORR_WORKERS"
MIN_CORRECTION = 0.05


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if w < 1:
        raise InvalidInputError(f"{WORKERS_ENV} must be >= 1")
    return w


@njit(cache=True)
def _count_slice(t, y, start, stop, inv_dtau, n_tau, tau_lim, inv_du, u_max, n_u, zero_half,
                 grid, zero):
    # grid is laid out [i_tau, i_u] so consecutive partners touch nearby memory
    n = t.size
    for i in range(start, stop):
        ti = t[i]
        yi = y[i]
        j = i + 1
        while j < n:
            dt = t[j] - ti
            if dt > tau_lim:
                break
            dy = y[j] - yi
            if -u_max <= dy <= u_max:
                iu = min(int((dy + u_max) * inv_du), n_u - 1)
                if dt < zero_half:
                    # centred zero-lag bin counts both orientations of the pair
                    zero[iu] += 1
                    zero[min(int((u_max - dy) * inv_du), n_u - 1)] += 1
                if dt > 0.0:
                    grid[min(int(dt * inv_dtau), n_tau - 1), iu] += 1
            j += 1


@njit(cache=True, parallel=True)
def _count_parallel(t, y, bounds, inv_dtau, n_tau, tau_lim, inv_du, u_max, n_u, zero_half):
    parts = bounds.size - 1
    grids = np.zeros((parts, n_tau, n_u), np.int64)
    zeros = np.zeros((parts, n_u), np.int64)
    for p in prange(parts):
        _count_slice(t, y, bounds[p], bounds[p + 1], inv_dtau, n_tau, tau_lim, inv_du, u_max,
                     n_u, zero_half, grids[p], zeros[p])
    return grids, zeros


@njit(cache=True)
def _zero_bin_slice(t, y, start, stop, inv_dtau, n_tau, tau_lim, half_widths, acc):
    n = t.size
    top = half_widths[-1]
    for i in range(start, stop):
        ti = t[i]
        yi = y[i]
        j = i + 1
        while j < n:
            dt = t[j] - ti
            if dt > tau_lim:
                break
            ady = abs(y[j] - yi)
            if ady <= top and dt > 0.0:
                k = np.searchsorted(half_widths, ady)
                acc[k, min(int(dt * inv_dtau), n_tau - 1)] += 1
            j += 1


@njit(cache=True, parallel=True)
def _zero_bin_parallel(t, y, bounds, inv_dtau, n_tau, tau_lim, half_widths):
    parts = bounds.size - 1
    accs = np.zeros((parts, half_widths.size, n_tau), np.int64)
    for p in prange(parts):
        _zero_bin_slice(t, y, bounds[p], bounds[p + 1], inv_dtau, n_tau, tau_lim, half_widths,
                        accs[p])
    return accs


def grid_shape(du: float, dtau: float, tau_max: float, u_max: float):
    """Round ranges up to whole bins: (n_u, n_tau, u_max, tau_max).

    The u range is made an odd number of bins so that one bin is centred on
    u = 0.
    """
    if not (du > 0 and dtau > 0 and tau_max > 0 and u_max > 0):
        raise InvalidInputError("du, dtau, tau_max and u_max must be positive")
    n_tau = max(1, math.ceil(tau_max / dtau - 1e-9))
    half = max(0, math.ceil(u_max / du - 0.5 - 1e-9))
    n_u = 2 * half + 1
    return n_u, n_tau, n_u * du / 2, n_tau * dtau


def pair_count(events: EventSet, du: float, dtau: float, tau_max: float, u_max: float,
               workers: int | None = None, zero_lag: bool = True) -> CorrelationGrid:
    """Count ordered pairs (t_j > t_i) into (u, tau) bins.

    tau bins are (0, tau_max] split at multiples of dtau, u bins tile
    [-u_max, u_max]; values on a bin edge go to the upper bin and the outer
    edges are closed. With ``zero_lag`` the centred bin |tau| < dtau/2 is
    counted as well (both orientations, self-pairs excluded).
    """
    if events.n == 0:
        raise InvalidInputError("event set is empty")
    t = np.ascontiguousarray(events.t)
    y = np.ascontiguousarray(events.y)
    if np.any(np.diff(t) < 0):
        raise InvalidInputError("events must be sorted by time")
    n_u, n_tau, u_max, tau_max = grid_shape(du, dtau, tau_max, u_max)
    if tau_max > events.T * (1 + 1e-12):
        raise InvalidInputError(f"tau_max={tau_max} exceeds the acquisition time {events.T}")
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise InvalidInputError("workers must be >= 1")
    bounds = np.linspace(0, t.size, workers + 1).astype(np.int64)
    prev = numba.get_num_threads()
    numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    try:
        grids, zeros = _count_parallel(t, y, bounds, 1.0 / dtau, n_tau, float(tau_max),
                                       1.0 / du, float(u_max), n_u,
                                       0.5 * dtau if zero_lag else -1.0)
    finally:
        numba.set_num_threads(prev)
    counts = np.ascontiguousarray(grids.sum(axis=0).T)
    return CorrelationGrid(counts, float(du), float(dtau), float(tau_max), float(u_max),
                           events.n, events.T, events.Y,
                           zero_lag_counts=zeros.sum(axis=0) if zero_lag else None)


def correction_factors(grid: CorrelationGrid) -> np.ndarray:
    return np.outer(1.0 - np.abs(grid.u_centers) / grid.Y, 1.0 - grid.tau_centers / grid.T)


def g2_variance_estimate(grid: CorrelationGrid) -> float:
    """Poisson variance of one normalized bin, T Y / (N^2 dtau du)."""
    if grid.n_events < 1:
        raise InvalidInputError("grid has no events")
    return grid.T * grid.Y / (grid.n_events**2 * grid.dtau * grid.du)


def normalize(grid: CorrelationGrid, min_correction: float = MIN_CORRECTION) -> CorrelationGrid:
    """Edge-corrected g2 values; bins with correction below the guard are invalid (value 0)."""
    scale = g2_variance_estimate(grid)
    corr = correction_factors(grid)
    valid = corr >= min_correction
    vals = np.zeros(grid.counts.shape)
    vals[valid] = scale * grid.counts[valid] / corr[valid]
    zl_vals = zl_valid = None
    if grid.zero_lag_counts is not None:
        c0 = 1.0 - np.abs(grid.u_centers) / grid.Y
        zl_valid = c0 >= min_correction
        zl_vals = np.zeros(grid.n_u)
        zl_vals[zl_valid] = scale * grid.zero_lag_counts[zl_valid] / c0[zl_valid]
    return grid.replace(values=vals, valid=valid, zero_lag_values=zl_vals,
                        zero_lag_valid=zl_valid)


def correlate(events: EventSet, du: float, dtau: float, tau_max: float, u_max: float | None = None,
              workers: int | None = None, period: float | None = None) -> CorrelationGrid:
    """pair_count followed by normalize; u_max defaults to 5 periods or Y/4."""
    if u_max is None:
        u_max = 5 * period if period else events.Y / 4
    return normalize(pair_count(events, du, dtau, tau_max, u_max, workers))


def zero_bin_sweep(events: EventSet, du_values, dtau: float, tau_max: float,
                   workers: int | None = None) -> list[CorrelationGrid]:
    """Single-bin grids |u| <= du/2 for many du in one pass over the pairs.

    Each returned grid equals ``pair_count(events, du, dtau, tau_max, du / 2)``
    without the zero-lag row.
    """
    du_values = np.asarray(du_values, dtype=float)
    if du_values.size == 0 or np.any(du_values <= 0):
        raise InvalidInputError("du values must be positive")
    if events.n == 0:
        raise InvalidInputError("event set is empty")
    order = np.argsort(du_values, kind="stable")
    half = du_values[order] / 2
    _, n_tau, _, tau_max = grid_shape(float(du_values[0]), dtau, tau_max, float(half[0]))
    if tau_max > events.T * (1 + 1e-12):
        raise InvalidInputError(f"tau_max={tau_max} exceeds the acquisition time {events.T}")
    workers = default_workers() if workers is None else int(workers)
    bounds = np.linspace(0, events.n, workers + 1).astype(np.int64)
    prev = numba.get_num_threads()
    numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    try:
        accs = _zero_bin_parallel(np.ascontiguousarray(events.t), np.ascontiguousarray(events.y),
                                  bounds, 1.0 / dtau, n_tau, float(tau_max), half)
    finally:
        numba.set_num_threads(prev)
    cum = np.cumsum(accs.sum(axis=0), axis=0)
    out = [None] * du_values.size
    for rank, idx in enumerate(order):
        du = float(du_values[idx])
        out[idx] = CorrelationGrid(cum[rank][None, :], du, float(dtau), float(tau_max), du / 2,
                                   events.n, events.T, events.Y)
    return out
