"""Backward orbits toward the neutral point and the power laws they obey.

All exponent fits are ordinary least squares in log-log coordinates over the
final decade ``[n/10, n]`` unless a window is given.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from . import kernels
from .errors import DegenerateVectors, InverseFailure, OrbitTooShort, ValidationError
from .map_model import PiecewiseMap

MIN_FIT_LENGTH = 1000


@dataclass(frozen=True)
class AsymptoticParams:
    """Constants of the scalar recursion ``t_{n-1} = t_n + C t_n^{1+gamma}`` and of
    the product factors ``r(t) = 1 - C' t^gamma``."""

    gamma: float
    C: float = 1.0
    C_prime: Optional[float] = None

    def __post_init__(self):
        if not (self.gamma > 0 and self.C > 0):
            raise ValidationError("gamma and C must be positive")

    @property
    def beta(self):
        return 1.0 / self.gamma

    @property
    def radius_coeff(self):
        return (self.gamma * self.C) ** (-self.beta)

    @property
    def product_exponent(self):
        if self.C_prime is None:
            return None
        return -self.C_prime / (self.gamma * self.C)


@dataclass
class BackwardOrbit:
    """``x_i = T_1^{-i} x`` for ``i = 0..n`` with per-step data at ``x_i`` (``i >= 1``).

    ``dets[i-1] = |det DT(x_i)|``; ``step_norms[i-1] = ||DT(x_i)^{-1}||``;
    ``log_composite_norms[i-1] = log ||DT^{-i}(x)||``.
    """

    points: np.ndarray
    dets: np.ndarray
    step_norms: np.ndarray
    log_composite_norms: np.ndarray

    @property
    def composite_norms(self):
        return np.exp(self.log_composite_norms)

    @property
    def n(self):
        return len(self.points) - 1

    @property
    def radii(self):
        return np.linalg.norm(self.points, axis=1)

    @property
    def log_det_inverse(self):
        """``log |det DT^{-i}(x)|`` for ``i = 1..n``."""
        return -np.cumsum(np.log(self.dets))


def _orbit_points(pmap, x, n, branch):
    b = pmap.branch(branch)
    lf = b.local_form
    if lf is not None:
        try:
            return kernels.inverse_orbit(lf.kind, np.asarray(x, dtype=float), float(lf.gamma), float(lf.coeff), int(n),
                                         pmap.tol.root_tol, pmap.tol.max_bisect)
        except ArithmeticError as exc:
            raise InverseFailure(str(exc)) from None
    if b.inverse is None:
        raise InverseFailure(f"branch {branch} has no inverse")
    pts = np.empty((n + 1, pmap.dimension))
    pts[0] = x
    for i in range(1, n + 1):
        pts[i] = b.inverse(pts[i - 1][None, :])[0]
    return pts


def backward_orbit(pmap: PiecewiseMap, x, n, branch=1) -> BackwardOrbit:
    x = np.asarray(x, dtype=float).reshape(pmap.dimension)
    pts = np.asarray(_orbit_points(pmap, x, n, branch))
    b = pmap.branch(branch)
    J = b.jacobian(pts[1:])
    dets = np.abs(np.linalg.det(J))
    Jinv = np.linalg.inv(J)
    step_norms = np.linalg.norm(Jinv, ord=2, axis=(1, 2))
    comp = np.empty(n)
    A = np.eye(pmap.dimension)
    scale = 0.0
    for i in range(n):
        # DT^{-(i+1)}(x) = DT(x_{i+1})^{-1} DT^{-i}(x), kept renormalised
        A = Jinv[i] @ A
        s = np.linalg.norm(A, 2)
        scale += np.log(s)
        comp[i] = scale
        A /= s
    return BackwardOrbit(pts, dets, step_norms, comp)


def _window(n, fit_window):
    if n < MIN_FIT_LENGTH:
        raise OrbitTooShort(f"orbit length {n} < {MIN_FIT_LENGTH}")
    if fit_window is None:
        return max(1, n // 10), n
    lo, hi = fit_window
    if not 1 <= lo < hi <= n:
        raise ValidationError(f"fit window {fit_window} not inside [1, {n}]")
    return int(lo), int(hi)


def loglog_fit(values, fit_window=None):
    """OLS of ``log values[i-1]`` on ``log i`` over the window; returns the linregress result."""
    lo, hi = _window(len(values), fit_window)
    i = np.arange(lo, hi + 1)
    return stats.linregress(np.log(i), np.log(values[i - 1]))


def radius_exponent(orbit: BackwardOrbit, params: Optional[AsymptoticParams] = None, fit_window=None):
    """``(beta_hat, coeff_hat)`` from ``|x_n| ~ coeff n^-beta``."""
    fit = loglog_fit(orbit.radii[1:], fit_window)
    return float(-fit.slope), float(np.exp(fit.intercept))


def det_product_exponent(orbit: BackwardOrbit, fit_window=None):
    """Slope of ``log |det DT^{-n}(x)|`` against ``log n``."""
    fit = loglog_fit(np.exp(orbit.log_det_inverse), fit_window)
    return float(fit.slope)


@dataclass(frozen=True)
class NormDecay:
    slope: float
    exponential: bool
    r2_power: float
    r2_exponential: float


def norm_decay_check(orbit: BackwardOrbit, fit_window=None) -> NormDecay:
    """Power-law slope of ``||DT^{-n}||``; flags decay that a semi-log fit
    explains better (exponential rather than polynomial)."""
    lo, hi = _window(orbit.n, fit_window)
    i = np.arange(lo, hi + 1)
    y = orbit.log_composite_norms[i - 1]
    pw = stats.linregress(np.log(i), y)
    ex = stats.linregress(i, y)
    return NormDecay(float(pw.slope), bool(ex.rvalue**2 > pw.rvalue**2), float(pw.rvalue**2), float(ex.rvalue**2))


def distortion_ratio_curve(pmap: PiecewiseMap, z1, z2, n_max, fit_window=None):
    """``|det DT^{-n}(z2)| / |det DT^{-n}(z1)|`` for ``n = 1..n_max`` and its log-log slope
    (NaN when the orbit is too short to fit)."""
    o1 = backward_orbit(pmap, z1, n_max)
    o2 = backward_orbit(pmap, z2, n_max)
    ratios = np.exp(o2.log_det_inverse - o1.log_det_inverse)
    slope = float("nan")
    if n_max >= MIN_FIT_LENGTH:
        slope = float(loglog_fit(ratios, fit_window).slope)
    return ratios, slope


def cone_check(pmap: PiecewiseMap, z, v, v_prime):
    """Stretch of ``v`` and ``v'`` under ``DT_z`` and the area-distortion ratio
    ``|det DT_z on span(v, v')| / (|DT v|/|v| * |DT v'|/|v'|)``."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(v_prime, dtype=float)
    G0 = np.array([[v @ v, v @ w], [v @ w, w @ w]])
    g0 = np.linalg.det(G0)
    if g0 <= 1e-14 * G0[0, 0] * G0[1, 1]:
        raise DegenerateVectors("v and v' are (numerically) parallel")
    J = pmap.jacobian(z)
    a, b = J @ v, J @ w
    G1 = np.array([[a @ a, a @ b], [a @ b, b @ b]])
    area = np.sqrt(np.linalg.det(G1) / g0)
    sv = np.sqrt(G1[0, 0] / G0[0, 0])
    sw = np.sqrt(G1[1, 1] / G0[1, 1])
    return {"len_v": float(np.sqrt(G1[0, 0])), "len_vp": float(np.sqrt(G1[1, 1])), "det_ratio": float(area / (sv * sw))}


@dataclass
class PairDistortionReport:
    admissible: bool
    first_violation: Optional[int]
    max_log_ratio: float
    separation: float
    bound_ratio: float
    J_prime: Optional[float] = None
    within_bound: Optional[bool] = None

    def to_dict(self):
        return dict(self.__dict__)


def pair_distortion_check(pmap: PiecewiseMap, x, y, n, theta=0.5, D1=1.0, J_prime=None):
    """Distortion of ``det DT^{-i}`` between two backward orbits.

    The pair is admissible when ``d(x_i, y_i)^{1-theta} <= D1 |x_i - p|`` at every
    depth ``i = 0..n``; ``first_violation`` is the 1-based position of the first
    failing depth.  ``bound_ratio`` is ``max_log_ratio / d(x, y)^theta``.
    """
    ox = backward_orbit(pmap, x, n)
    oy = backward_orbit(pmap, y, n)
    p = pmap.neutral_point
    d = np.linalg.norm(ox.points - oy.points, axis=1)
    rx = np.linalg.norm(ox.points - p, axis=1)
    ok = d ** (1 - theta) <= D1 * rx
    bad = np.flatnonzero(~ok)
    first = int(bad[0]) + 1 if bad.size else None
    lr = np.abs(ox.log_det_inverse - oy.log_det_inverse)
    mlr = float(lr.max()) if lr.size else 0.0
    sep = float(d[0])
    ratio = mlr / sep**theta if sep > 0 else 0.0
    rep = PairDistortionReport(bad.size == 0, first, mlr, sep, ratio)
    if J_prime is not None:
        rep.J_prime = float(J_prime)
        rep.within_bound = bool(mlr <= J_prime * sep**theta * (1 + 1e-12))
    return rep


lemma33_check = pair_distortion_check


def calibrate_J_prime(pmap: PiecewiseMap, pairs, n, theta=0.5, D1=1.0):
    """Largest ``bound_ratio`` over admissible calibration pairs."""
    vals = [r.bound_ratio for r in (pair_distortion_check(pmap, a, b, n, theta, D1) for a, b in pairs) if r.admissible]
    if not vals:
        raise ValidationError("no admissible calibration pair")
    return max(vals)


# ---------------------------------------------------------------------------
# scalar harness for the recursion t_{n-1} = t_n + C t_n^{1+gamma}
def scalar_orbit(params: AsymptoticParams, n, t0=None):
    """``t_0..t_n`` by exact inversion of ``t -> t (1 + C t^gamma)``.

    The default start has ``C t0^gamma = 0.1``.
    """
    g, C = params.gamma, params.C
    if t0 is None:
        t0 = (0.1 / C) ** (1.0 / g)
    try:
        pts = kernels.inverse_orbit(kernels.KIND_NEUTRAL_1D, np.array([float(t0)]), float(g), float(C), int(n),
                                    1e-15, 200)
    except ArithmeticError as exc:
        raise InverseFailure(str(exc)) from None
    return np.asarray(pts)[:, 0]


def radius_law_ratio(params: AsymptoticParams, n, t0=None):
    """``(gamma C n)^{1/gamma} t_n``, which tends to 1."""
    t = scalar_orbit(params, n, t0)
    return float((params.gamma * params.C * n) ** params.beta * t[n])


def product_exponent_fit(params: AsymptoticParams, n, t0=None, fit_window=None):
    """Fitted slope of ``log prod_{i<=k} (1 - C' t_i^gamma)`` against ``log k``."""
    if params.C_prime is None:
        raise ValidationError("C_prime required")
    t = scalar_orbit(params, n, t0)
    r = 1.0 - params.C_prime * t[1:] ** params.gamma
    if np.any(r <= 0):
        raise ValidationError("C' t0^gamma too large: product factor not positive")
    prod = np.exp(np.cumsum(np.log(r)))
    return float(loglog_fit(prod, fit_window).slope)


def report_json(rows, path=None):
    """Serialise claim rows ``{claim, observed, expected, tolerance, pass}``."""
    text = json.dumps(rows, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
