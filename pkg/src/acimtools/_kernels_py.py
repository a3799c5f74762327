"""Pure-Python/numpy twins of the compiled kernels in ``_kernels.pyx``.

Selected automatically when the extension is not built, or on request via
``ACIMTOOLS_PURE=1``.  Results agree with the compiled path to rounding.
"""

import math

import numpy as np


def _step_many(kind, X, gamma, coeff):
    """One application of the local form to rows of X; returns (X', det)."""
    if kind == 0:
        t = X[:, 0]
        tg = t**gamma
        det = 1.0 + coeff * (1.0 + gamma) * tg
        return (t * (1.0 + coeff * tg))[:, None], det
    if kind == 1:
        x, y = X[:, 0], X[:, 1]
        q = 1.0 + x * x + y * y
        det = q * q * (q + 2.0 * x * x + 4.0 * y * y)
        return np.column_stack((x * q, y * q * q)), det
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    r2 = x * x + y * y + z * z
    q, w = 1.0 + r2, 2.0 + r2
    J = np.empty((X.shape[0], 3, 3))
    J[:, 0] = np.column_stack((q + 2 * x * x, 2 * x * y, 2 * x * z))
    J[:, 1] = np.column_stack((4 * x * y * q, q * q + 4 * y * y * q, 4 * y * z * q))
    J[:, 2] = np.column_stack((6 * x * z * w * w, 6 * y * z * w * w, w**3 + 6 * z * z * w * w))
    return np.column_stack((x * q, y * q * q, z * w**3)), np.linalg.det(J)


def escape_local(kind, X, gamma, coeff, weights, n_max):
    X = np.array(X, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    N = X.shape[0]
    steps = np.zeros(N, dtype=np.int64)
    logdet = np.zeros(N)
    active = np.flatnonzero((X * X) @ w < 1.0)
    n = 0
    while active.size and n < n_max:
        Xa, det = _step_many(kind, X[active], gamma, coeff)
        X[active] = Xa
        logdet[active] += np.log(np.abs(det))
        steps[active] += 1
        n += 1
        active = active[(Xa * Xa) @ w < 1.0]
    steps[active] = -1
    return steps, X, logdet


def _phi(kind, rho, y, gamma, coeff):
    if kind == 0:
        return rho * (1.0 + coeff * rho**gamma) - y[0]
    s = rho * rho
    q = 1.0 + s
    val = s - y[0] ** 2 / q**2 - y[1] ** 2 / q**4
    if kind == 2:
        val -= y[2] ** 2 / (2.0 + s) ** 6
    return val


def _invert(kind, y, gamma, coeff, tol, max_iter):
    hi = y[0] if kind == 0 else math.sqrt(sum(v * v for v in y))
    lo = 0.0
    if hi == 0.0:
        return [0.0] * len(y)
    if _phi(kind, hi, y, gamma, coeff) < 0.0:
        return None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if _phi(kind, mid, y, gamma, coeff) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    mid = 0.5 * (lo + hi)
    if kind == 0:
        return [mid]
    q = 1.0 + mid * mid
    out = [y[0] / q, y[1] / (q * q)]
    if kind == 2:
        out.append(y[2] / (2.0 + mid * mid) ** 3)
    return out


def inverse_orbit(kind, x0, gamma, coeff, n, tol, max_iter):
    out = np.empty((n + 1, len(x0)))
    out[0] = x0
    cur = [float(v) for v in x0]
    for i in range(1, n + 1):
        cur = _invert(kind, cur, gamma, coeff, tol, max_iter)
        if cur is None:
            raise ArithmeticError("bracket lost at backward step %d" % i)
        out[i] = cur
    return out


def orbit_histogram_1d(t0, gamma, coeff, r0, n_steps, burn, lo, hi, n_bins):
    counts = np.zeros(n_bins, dtype=np.int64)
    t = float(t0)
    width = (hi - lo) / n_bins
    slope = 1.0 / (1.0 - r0)
    for i in range(burn + n_steps):
        if t < r0:
            t = t * (1.0 + coeff * t**gamma)
        else:
            t = (t - r0) * slope
        if i >= burn and lo <= t < hi:
            counts[min(int((t - lo) / width), n_bins - 1)] += 1
    return counts, t
