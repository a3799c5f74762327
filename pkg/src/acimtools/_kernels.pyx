# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: escape iteration, bisection backward orbits and the
1-D orbit histogram.  ``_kernels_py`` mirrors every function here."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, log, fabs, sqrt

cnp.import_array()

DEF MAXDIM = 3


cdef inline void _step(int kind, double* x, double gamma, double coeff,
                       double* logdet) noexcept nogil:
    cdef double q, w, r2, t, det, x0, x1, x2
    if kind == 0:
        t = x[0]
        det = 1.0 + coeff * (1.0 + gamma) * pow(t, gamma)
        x[0] = t * (1.0 + coeff * pow(t, gamma))
    elif kind == 1:
        x0 = x[0]
        x1 = x[1]
        q = 1.0 + x0 * x0 + x1 * x1
        det = q * q * (q + 2.0 * x0 * x0 + 4.0 * x1 * x1)
        x[0] = x0 * q
        x[1] = x1 * q * q
    else:
        x0 = x[0]
        x1 = x[1]
        x2 = x[2]
        r2 = x0 * x0 + x1 * x1 + x2 * x2
        q = 1.0 + r2
        w = 2.0 + r2
        det = _det3(q + 2*x0*x0, 2*x0*x1, 2*x0*x2,
                    4*x0*x1*q, q*q + 4*x1*x1*q, 4*x1*x2*q,
                    6*x0*x2*w*w, 6*x1*x2*w*w, w*w*w + 6*x2*x2*w*w)
        x[0] = x0 * q
        x[1] = x1 * q * q
        x[2] = x2 * w * w * w
    logdet[0] += log(fabs(det))


cdef inline double _det3(double a, double b, double c, double d, double e,
                         double f, double g, double h, double i) noexcept nogil:
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


cdef inline double _quad(double* x, double* w, int m) noexcept nogil:
    cdef double s = 0.0
    cdef int k
    for k in range(m):
        s += w[k] * x[k] * x[k]
    return s


def escape_local(int kind, double[:, ::1] X, double gamma, double coeff,
                 double[::1] weights, long n_max):
    """Iterate the local form while ``sum(w x^2) < 1``.

    Returns ``(steps, X_out, logdet)``; ``steps == -1`` marks overflow.
    """
    cdef Py_ssize_t N = X.shape[0], i
    cdef int m = X.shape[1], k
    cdef long n
    cdef double buf[MAXDIM]
    cdef double ld
    out = np.empty((N, m), dtype=np.float64)
    steps = np.empty(N, dtype=np.int64)
    logdet = np.empty(N, dtype=np.float64)
    cdef double[:, ::1] xo = out
    cdef long long[::1] st = steps
    cdef double[::1] lg = logdet
    with nogil:
        for i in range(N):
            for k in range(m):
                buf[k] = X[i, k]
            n = 0
            ld = 0.0
            while _quad(buf, &weights[0], m) < 1.0 and n < n_max:
                _step(kind, buf, gamma, coeff, &ld)
                n += 1
            if _quad(buf, &weights[0], m) < 1.0:
                st[i] = -1
            else:
                st[i] = n
            lg[i] = ld
            for k in range(m):
                xo[i, k] = buf[k]
    return steps, out, logdet


cdef inline double _phi(int kind, double rho, double* y, double gamma,
                        double coeff) noexcept nogil:
    cdef double s, q, w
    if kind == 0:
        return rho * (1.0 + coeff * pow(rho, gamma)) - y[0]
    s = rho * rho
    q = 1.0 + s
    if kind == 1:
        return s - y[0] * y[0] / (q * q) - y[1] * y[1] / (q * q * q * q)
    w = 2.0 + s
    return (s - y[0] * y[0] / (q * q) - y[1] * y[1] / (q * q * q * q)
            - y[2] * y[2] / (w * w * w * w * w * w))


cdef int _invert(int kind, double* y, double gamma, double coeff, double tol,
                 int max_iter, double* out) noexcept nogil:
    cdef double hi = 0.0, lo = 0.0, mid, q, w
    cdef int k, it
    if kind == 0:
        hi = y[0]
    else:
        for k in range(kind + 1):
            hi += y[k] * y[k]
        hi = sqrt(hi)
    if hi == 0.0:
        for k in range(kind + 1):
            out[k] = 0.0
        return 0
    if _phi(kind, hi, y, gamma, coeff) < 0.0:
        return 1
    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        if _phi(kind, mid, y, gamma, coeff) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    mid = 0.5 * (lo + hi)
    if kind == 0:
        out[0] = mid
        return 0
    q = 1.0 + mid * mid
    out[0] = y[0] / q
    out[1] = y[1] / (q * q)
    if kind == 2:
        w = 2.0 + mid * mid
        out[2] = y[2] / (w * w * w)
    return 0


def inverse_orbit(int kind, double[::1] x0, double gamma, double coeff,
                  long n, double tol, int max_iter):
    """Backward orbit ``x_i = T_1^{-i} x0`` for ``i = 0..n`` by bisection."""
    cdef int m = x0.shape[0], k, bad = 0
    cdef long i
    out = np.empty((n + 1, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for k in range(m):
        o[0, k] = x0[k]
    with nogil:
        for i in range(1, n + 1):
            if _invert(kind, &o[i - 1, 0], gamma, coeff, tol, max_iter,
                       &o[i, 0]):
                bad = i
                break
    if bad:
        raise ArithmeticError("bracket lost at backward step %d" % bad)
    return out


def orbit_histogram_1d(double t0, double gamma, double coeff, double r0,
                       long n_steps, long burn, double lo, double hi,
                       long n_bins):
    """Histogram of the visits to ``[lo, hi)`` of the full 1-D neutral map."""
    counts = np.zeros(n_bins, dtype=np.int64)
    cdef long long[::1] c = counts
    cdef double t = t0, width = (hi - lo) / n_bins, slope = 1.0 / (1.0 - r0)
    cdef long i, b
    with nogil:
        for i in range(burn + n_steps):
            if t < r0:
                t = t * (1.0 + coeff * pow(t, gamma))
            else:
                t = (t - r0) * slope
            if i >= burn and t >= lo and t < hi:
                b = <long>((t - lo) / width)
                if b >= n_bins:
                    b = n_bins - 1
                c[b] += 1
    return counts, t
