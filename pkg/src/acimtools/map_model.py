"""Piecewise-smooth maps with a neutral fixed point.

A :class:`PiecewiseMap` is a finite list of :class:`Branch` objects whose
domains are described by signed-distance functions (negative inside).  All
evaluators are vectorised over rows of an ``(N, m)`` array; the point-wise
methods (``evaluate``, ``jacobian_det``, ``branch_index``) wrap them and
enforce the boundary/domain error contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._kernels_py import _phi, _step_many
from .errors import (
    BadSpec,
    DegenerateProbe,
    NoRoot,
    NotMonotone,
    OutOfDomain,
    PointOnBoundary,
    ValidationError,
)

ArrayFn = Callable[[np.ndarray], np.ndarray]

OUTSIDE = -1
ON_BOUNDARY = -2


@dataclass(frozen=True)
class ToleranceConfig:
    """Root-finding tolerance, probe radii and orbit cap."""

    root_tol: float = 1e-14
    audit_radius_grid: tuple = (0.05, 0.025, 0.0125, 0.00625)
    n_max_orbit: int = 100_000
    max_bisect: int = 200

    def __post_init__(self):
        if not (0.0 < self.root_tol <= 1e-6):
            raise ValidationError("root_tol must lie in (0, 1e-6]")
        radii = np.asarray(self.audit_radius_grid, dtype=float)
        if radii.size == 0 or np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
            raise ValidationError("audit radii must be positive and strictly decreasing")
        if self.n_max_orbit < 1:
            raise ValidationError("n_max_orbit must be positive")


@dataclass(frozen=True)
class LocalForm:
    """Kernel description of the germ at the neutral point.

    ``kind`` is one of the codes in :mod:`acimtools.kernels`; ``coeff`` is the
    coefficient ``C`` of the scalar germ ``t(1 + C t**gamma)`` (kind 0 only).
    """

    kind: int
    gamma: float = 2.0
    coeff: float = 1.0

    def step(self, X):
        return _step_many(self.kind, np.atleast_2d(np.asarray(X, dtype=float)), self.gamma, self.coeff)


@dataclass(frozen=True, eq=False)
class Region:
    """The neutral region R.

    ``quad_weights`` lets the escape kernel test membership as
    ``sum(w * x**2) < 1``.  For regions intersected with an invariant set of
    the local form the quadratic test alone is equivalent along orbits.
    """

    sdist: ArrayFn
    bbox: tuple
    label: str = "R"
    volume: Optional[float] = None
    quad_weights: Optional[np.ndarray] = None

    def contains(self, X):
        return self.sdist(np.atleast_2d(np.asarray(X, dtype=float))) < 0.0

    def sample(self, rng, n, batch=None):
        """``n`` uniform points in R by rejection from the bounding box.

        Returns ``(points, acceptance_fraction)``.
        """
        lo, hi = (np.asarray(b, dtype=float) for b in self.bbox)
        batch = batch or max(1024, 2 * n)
        out, tried, kept = [], 0, 0
        while kept < n:
            cand = lo + (hi - lo) * rng.random((batch, lo.size))
            ok = cand[self.contains(cand)]
            tried += batch
            kept += len(ok)
            out.append(ok)
        pts = np.concatenate(out)
        return pts[:n], kept / tried

    def measure(self):
        if self.volume is not None:
            return self.volume
        rng = np.random.default_rng(12345)
        _, frac = self.sample(rng, 200_000)
        lo, hi = (np.asarray(b, dtype=float) for b in self.bbox)
        return float(frac * np.prod(hi - lo))


@dataclass(frozen=True, eq=False)
class Branch:
    """One smooth branch ``T_j: U_j -> M``."""

    index: int
    sdist: ArrayFn
    forward: ArrayFn
    jacobian: ArrayFn
    det: Optional[ArrayFn] = None
    inverse: Optional[ArrayFn] = None
    local_form: Optional[LocalForm] = None
    label: str = ""

    def contains(self, X):
        return self.sdist(X) < 0.0

    def jacobian_det(self, X):
        if self.det is not None:
            return self.det(X)
        return np.linalg.det(self.jacobian(X))


@dataclass(frozen=True, eq=False)
class PiecewiseMap:
    """A piecewise-smooth self-map of the box ``M`` with neutral point ``p``.

    ``domain_sdist`` restricts the study domain to a subset of the box (used by
    the invariant components of the parabola example).
    """

    dimension: int
    branches: tuple
    neutral_point: np.ndarray
    region: Region
    box: tuple
    local_radius: float
    r_preimage_count: int = 0
    tol: ToleranceConfig = field(default_factory=ToleranceConfig)
    label: str = ""
    domain_sdist: Optional[ArrayFn] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise BadSpec("dimension must be >= 1")
        if self.r_preimage_count > len(self.branches):
            raise BadSpec("K' cannot exceed K")

    @property
    def branch_count(self):
        return len(self.branches)

    # -- vectorised core -------------------------------------------------
    def in_domain(self, X):
        lo, hi = (np.asarray(b, dtype=float) for b in self.box)
        ok = np.all((X >= lo) & (X <= hi), axis=1)
        if self.domain_sdist is not None:
            ok &= self.domain_sdist(X) <= 0.0
        return ok

    def locate(self, X):
        """Branch position (0-based) per row; ``OUTSIDE`` or ``ON_BOUNDARY``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        sd = np.stack([b.sdist(X) for b in self.branches])
        idx = np.full(X.shape[0], OUTSIDE, dtype=np.int64)
        inside = sd < 0.0
        has = inside.any(axis=0)
        idx[has] = np.argmax(inside[:, has], axis=0)
        near = (np.abs(sd) < self.tol.root_tol).any(axis=0)
        idx[near] = ON_BOUNDARY
        idx[~self.in_domain(X) & (idx >= 0)] = OUTSIDE
        return idx

    def apply(self, X, idx=None):
        """Images of rows of X; rows with no valid branch become NaN."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if idx is None:
            idx = self.locate(X)
        Y = np.full_like(X, np.nan)
        for k, b in enumerate(self.branches):
            sel = idx == k
            if sel.any():
                Y[sel] = b.forward(X[sel])
        return Y, idx

    def det_many(self, X, idx=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if idx is None:
            idx = self.locate(X)
        out = np.full(X.shape[0], np.nan)
        for k, b in enumerate(self.branches):
            sel = idx == k
            if sel.any():
                out[sel] = b.jacobian_det(X[sel])
        return out

    def jacobian_many(self, X, idx=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if idx is None:
            idx = self.locate(X)
        out = np.full((X.shape[0], self.dimension, self.dimension), np.nan)
        for k, b in enumerate(self.branches):
            sel = idx == k
            if sel.any():
                out[sel] = b.jacobian(X[sel])
        return out

    # -- point-wise contract ---------------------------------------------
    def _position(self, x):
        x = np.asarray(x, dtype=float).reshape(1, self.dimension)
        k = int(self.locate(x)[0])
        if k == ON_BOUNDARY:
            raise PointOnBoundary(f"{x[0]} lies within root_tol of a branch boundary")
        if k == OUTSIDE:
            raise OutOfDomain(f"{x[0]} is outside the study domain")
        return x, k

    def branch_index(self, x):
        """Index ``j`` (1-based, as labelled) of the branch owning ``x``."""
        _, k = self._position(x)
        return self.branches[k].index

    def branch(self, index):
        for b in self.branches:
            if b.index == index:
                return b
        raise ValidationError(f"no branch with index {index}")

    def evaluate(self, x):
        x, k = self._position(x)
        return self.branches[k].forward(x)[0]

    def jacobian(self, x):
        x, k = self._position(x)
        return self.branches[k].jacobian(x)[0]

    def jacobian_det(self, x):
        x, k = self._position(x)
        return float(self.branches[k].jacobian_det(x)[0])


def bisect(f, lo, hi, rel_tol=1e-14, max_iter=200):
    """Root of an increasing scalar function on ``[lo, hi]`` by bisection."""
    flo, fhi = f(lo), f(hi)
    if flo > 0.0 or fhi < 0.0:
        raise NoRoot(f"no sign change on [{lo}, {hi}]: f = ({flo}, {fhi})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * max(abs(hi), abs(lo), np.finfo(float).tiny):
            break
    return 0.5 * (lo + hi)


def _reconstruct(kind, y, rho):
    if kind == 0:
        return np.array([rho])
    q = 1.0 + rho * rho
    out = [y[0] / q, y[1] / q**2]
    if kind == 2:
        out.append(y[2] / (2.0 + rho * rho) ** 3)
    return np.array(out)


def local_inverse(pmap: PiecewiseMap, branch: int, y, bracket: Optional[Sequence[float]] = None):
    """Preimage of ``y`` under branch ``branch`` (1-based label).

    Germ branches reduce the inversion to an increasing scalar equation in the
    preimage radius, solved by bisection on ``bracket`` (default ``[0, |y|]``).
    Affine and chart branches use their closed-form inverse.
    """
    b = pmap.branch(branch)
    y = np.asarray(y, dtype=float).reshape(pmap.dimension)
    tol = pmap.tol
    if b.local_form is not None:
        lf = b.local_form
        if not np.any(y):
            return np.zeros_like(y)
        yl = list(y)
        f = lambda r: _phi(lf.kind, r, yl, lf.gamma, lf.coeff)  # noqa: E731
        if bracket is not None:
            lo, hi = bracket
        else:
            # the germ expands radially, so the preimage radius is at most |y|
            lo, hi = 0.0, float(np.linalg.norm(y)) * (1.0 + 1e-9) + 1e-300
        probe = np.linspace(lo, hi, 17)
        vals = np.array([f(r) for r in probe])
        if vals[0] > 0.0 or vals[-1] < 0.0:
            raise NoRoot(f"bracket {lo, hi} does not straddle a sign change")
        if np.any(np.diff(vals) < 0.0):
            raise NotMonotone("radial profile is not increasing on the bracket")
        rho = bisect(f, lo, hi, tol.root_tol, tol.max_bisect)
        x = _reconstruct(lf.kind, y, rho)
    elif b.inverse is not None:
        x = b.inverse(y.reshape(1, -1))[0]
    else:
        raise NoRoot(f"branch {branch} has no inverse evaluator")
    if not b.contains(x.reshape(1, -1))[0] and not np.allclose(x, pmap.neutral_point):
        raise NoRoot(f"preimage {x} falls outside branch {branch}")
    return x


def uniform_ball(rng, n, m, radius):
    """``n`` uniform samples from the centred ``m``-ball of given radius."""
    d = rng.standard_normal((n, m))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random(n) ** (1.0 / m))[:, None]


def contraction_coefficient(pmap: PiecewiseMap, x, probe_radius, n_samples=256, seed=0):
    """Monte Carlo estimate of the local contraction coefficient ``s(x, T)``.

    The maximum of ``d(x, y) / d(Tx, Ty)`` over ``n_samples`` same-branch
    points ``y`` uniform in the probe ball.  This is a lower-biased estimate
    of the true ``s(x)``.  The radius is clipped to ``0.1 |x - p|``.
    """
    x = np.asarray(x, dtype=float).reshape(pmap.dimension)
    dist_p = float(np.linalg.norm(x - pmap.neutral_point))
    if dist_p < 10.0 * pmap.tol.root_tol:
        raise DegenerateProbe("probe centre coincides with the neutral point")
    _, k = pmap._position(x)
    radius = min(float(probe_radius), 0.1 * dist_p)
    rng = np.random.default_rng(seed)
    Y = x + uniform_ball(rng, n_samples, pmap.dimension, radius)
    br = pmap.branches[k]
    Y = Y[br.contains(Y)]
    Y = Y[np.linalg.norm(Y - x, axis=1) > 0.0]
    if len(Y) == 0:
        raise DegenerateProbe("no probe samples fell in the owning branch")
    Tx = br.forward(x.reshape(1, -1))[0]
    TY = br.forward(Y)
    ratios = np.linalg.norm(Y - x, axis=1) / np.linalg.norm(TY - Tx, axis=1)
    return float(ratios.max())
