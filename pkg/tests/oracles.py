"""Reference computations that do not share code paths with the package."""
import math

import mpmath
import numpy as np


def bessel_series(n: int, x, dps: int = 60) -> mpmath.mpf:
    """J_n(x) from its power series in high precision (integer n, any sign)."""
    with mpmath.workdps(dps):
        sign = 1
        if n < 0:
            n, sign = -n, (-1) ** n
        x = mpmath.mpf(x)
        half = x / 2
        term = half**n / mpmath.factorial(n)
        total = term
        k = 0
        while True:
            k += 1
            term *= -(half**2) / (k * (k + n))
            total += term
            if abs(term) < mpmath.mpf(10) ** (-dps + 5) * max(1, abs(total)) and k > abs(x):
                break
        return sign * total


def brute_force_counts(t, y, du, dtau, tau_max, u_max):
    """All ordered pairs with t_j > t_i by direct enumeration.

    Bin edges use the same convention as the package grid: lower edge
    inclusive, values at the outer upper edge go to the last bin.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    n_u = int(round(2 * u_max / du))
    n_tau = int(round(tau_max / dtau))
    out = np.zeros((n_u, n_tau), np.int64)
    inv_du, inv_dtau = 1.0 / du, 1.0 / dtau
    for i in range(t.size):
        dt = t - t[i]
        dy = y - y[i]
        sel = (dt > 0) & (dt <= tau_max) & (dy >= -u_max) & (dy <= u_max)
        iu = np.minimum(((dy[sel] + u_max) * inv_du).astype(np.int64), n_u - 1)
        it = np.minimum((dt[sel] * inv_dtau).astype(np.int64), n_tau - 1)
        np.add.at(out, (iu, it), 1)
    return out


def time_averaged_contrast(K, phi, omega=2 * math.pi * 50, periods=10_000, samples=1_000_000):
    """Contrast of the time-averaged pattern 1 + K cos(k y + phi cos(w t)), signed.

    Projects the averaged modulation onto cos(k y): only the time average of
    cos(phi cos(w t)) survives.
    """
    t = np.linspace(0.0, periods * 2 * math.pi / omega, samples, endpoint=False)
    return K * float(np.mean(np.cos(phi * np.cos(omega * t))))


def amplitude_by_time_average(phi, omega, tau, samples=4096):
    """A(tau) = <cos(phi(t + tau) - phi(t))> over one perturbation period."""
    t = np.linspace(0.0, 2 * math.pi / omega, samples, endpoint=False)
    tau = np.atleast_1d(tau)
    d = phi * (np.cos(omega * (t[None, :] + tau[:, None])) - np.cos(omega * t[None, :]))
    return np.mean(np.cos(d), axis=1)


def bin_averaged_contrast(K, lam, phi, omega, du, dtau, nodes=64):
    """sqrt(2 <g2 - 1>) over the bin |u| < du/2, |tau| < dtau/2 by quadrature."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    k = 2 * math.pi / lam
    cos_avg = 1.0 if du == 0 else 0.5 * np.sum(w * np.cos(k * 0.5 * du * x))
    a_avg = (amplitude_by_time_average(phi, omega, 0.0)[0] if dtau == 0
             else 0.5 * np.sum(w * amplitude_by_time_average(phi, omega, 0.5 * dtau * x)))
    return K * math.sqrt(abs(a_avg * cos_avg))
