"""First-return map to ``M^ = M \\ R`` and escape-time statistics of ``R``.

Escape times are computed by iterating the neutral local form inside ``R``
(the only branch that can keep a point in ``R``), so the expensive part runs
in the compiled kernel.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import kernels
from .errors import (
    EmptyWindow,
    NonPositiveTail,
    NotInRegion,
    OutOfDomain,
    Overflow,
    PointOnBoundary,
    ValidationError,
)
from .map_model import ON_BOUNDARY, OUTSIDE, PiecewiseMap

BLOCK_SIZE = 65_536


@dataclass(frozen=True)
class ReturnSample:
    start: np.ndarray
    point: np.ndarray
    return_time: int
    weight: float


@dataclass
class TailProfile:
    """Escape-time level volumes ``nu(R_n)`` and tails ``nu(escape > n)``.

    Arrays are indexed by ``n = 1 .. n_max`` (position ``n - 1``).  ``residual``
    is the volume of samples still in ``R`` after ``n_max`` steps and is
    included in every tail entry.
    """

    level_volumes: np.ndarray
    tail_volumes: np.ndarray
    stderr: np.ndarray
    residual: float = 0.0
    sample_count: int = 0
    seed: Optional[int] = None
    region_volume: float = float("nan")
    rejected: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self):
        return len(self.level_volumes)

    @property
    def n(self):
        return np.arange(1, self.n_max + 1)

    @classmethod
    def from_levels(cls, levels, residual=0.0, stderr=None, **kw):
        levels = np.asarray(levels, dtype=float)
        # tail[n] = sum_{k > n} level[k] + residual
        rev = np.cumsum(levels[::-1])[::-1]
        tails = np.append(rev[1:], 0.0) + residual
        if stderr is None:
            stderr = np.zeros_like(levels)
        return cls(levels, tails, np.asarray(stderr, dtype=float), float(residual), **kw)

    @classmethod
    def from_tails(cls, tails, **kw):
        """Synthetic profile whose tail sequence is exactly ``tails``."""
        tails = np.asarray(tails, dtype=float)
        prev = np.concatenate(([tails[0]], tails[:-1]))
        levels = np.concatenate(([0.0], prev[1:] - tails[1:]))
        return cls(levels, tails.copy(), np.zeros_like(tails), float(tails[-1]), **kw)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "level_volume", "tail_volume", "stderr"])
        for n, lv, tv, se in zip(self.n, self.level_volumes, self.tail_volumes, self.stderr):
            w.writerow([int(n), repr(float(lv)), repr(float(tv)), repr(float(se))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text):
        body = "".join(line for line in io.StringIO(text) if not line.startswith("#"))
        rows = list(csv.DictReader(io.StringIO(body)))
        lv = np.array([float(r["level_volume"]) for r in rows])
        tv = np.array([float(r["tail_volume"]) for r in rows])
        se = np.array([float(r["stderr"]) for r in rows])
        return cls(lv, tv, se, residual=float(tv[-1]) if len(tv) else 0.0)


def _local(pmap):
    lf = pmap.branches[0].local_form
    if lf is None:
        raise ValidationError("map has no neutral local form")
    w = pmap.region.quad_weights
    if w is None:
        raise ValidationError("region has no quadratic description")
    return lf, np.ascontiguousarray(w, dtype=float)


def escape_many(pmap: PiecewiseMap, X, n_max):
    """Vectorised escape: returns (steps, exit points, log det products).

    ``steps`` is -1 where the cap was reached.
    """
    lf, w = _local(pmap)
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    return kernels.escape_local(lf.kind, X, float(lf.gamma), float(lf.coeff), w, int(n_max))


def escape_time(pmap: PiecewiseMap, x, n_max=None):
    """Smallest ``n >= 1`` with ``T^n x`` outside ``R``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n_max is None:
        n_max = pmap.tol.n_max_orbit
    if not pmap.region.contains(x[None, :])[0]:
        raise NotInRegion(f"{x.tolist()} is not in R")
    steps, _, _ = escape_many(pmap, x[None, :], n_max)
    if steps[0] < 0:
        raise Overflow(f"no escape from R within {n_max} steps")
    return int(steps[0])


def first_return_many(pmap: PiecewiseMap, X, n_max=None):
    """Vectorised first return for rows of X in ``M^``.

    Returns (points, return_times, log_weights, branch_positions).  Rows on a
    branch boundary or outside the domain get position < 0 and NaN output;
    rows that overflow get return time -1.
    """
    if n_max is None:
        n_max = pmap.tol.n_max_orbit
    X = np.atleast_2d(np.asarray(X, dtype=float))
    idx = pmap.locate(X)
    Y, _ = pmap.apply(X, idx)
    ok = idx >= 0
    logw = np.full(X.shape[0], np.nan)
    logw[ok] = -np.log(np.abs(pmap.det_many(X[ok], idx[ok])))
    times = np.where(ok, 1, 0).astype(np.int64)
    inR = np.zeros(X.shape[0], dtype=bool)
    inR[ok] = pmap.region.contains(Y[ok])
    if inR.any():
        steps, Z, logdet = escape_many(pmap, Y[inR], n_max)
        over = steps < 0
        Y[inR] = Z
        logw[inR] -= logdet
        t = 1 + steps
        t[over] = -1
        times[inR] = t
    return Y, times, logw, idx


def first_return(pmap: PiecewiseMap, x, n_max=None) -> ReturnSample:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if pmap.region.contains(x[None, :])[0]:
        raise NotInRegion("start point lies in R, not in M^")
    Y, times, logw, idx = first_return_many(pmap, x[None, :], n_max)
    if idx[0] == ON_BOUNDARY:
        raise PointOnBoundary(f"{x.tolist()} lies on a branch boundary")
    if idx[0] == OUTSIDE:
        raise OutOfDomain(f"{x.tolist()} is outside every branch domain")
    if times[0] < 0:
        raise Overflow("first return not reached within n_max")
    return ReturnSample(x, Y[0], int(times[0]), float(np.exp(logw[0])))


def _sample_block(pmap, rng, n):
    pts, _ = pmap.region.sample(rng, n)
    sd = pmap.region.sdist(pts)
    near = np.abs(sd) < pmap.tol.root_tol
    near |= np.linalg.norm(pts - pmap.neutral_point, axis=1) < pmap.tol.root_tol
    return pts[~near], int(near.sum())


def level_volumes(pmap: PiecewiseMap, n_max=None, n_samples=10**5, seed=0, block_size=BLOCK_SIZE):
    """Monte Carlo escape-time histogram over uniform samples in ``R``.

    Blocks of ``block_size`` samples use independent streams keyed by
    ``(seed, block)``, so results do not depend on how blocks are scheduled.
    """
    if n_samples < 10**4:
        raise ValidationError("n_samples must be at least 1e4")
    if n_max is None:
        n_max = pmap.tol.n_max_orbit
    counts = np.zeros(n_max + 1, dtype=np.int64)
    overflow = 0
    rejected = 0
    n_blocks = -(-n_samples // block_size)
    for b in range(n_blocks):
        size = min(block_size, n_samples - b * block_size)
        rng = np.random.default_rng([seed, b])
        pts = np.empty((0, pmap.dimension))
        while len(pts) < size:
            more, rej = _sample_block(pmap, rng, size - len(pts))
            rejected += rej
            pts = np.concatenate((pts, more))
        steps, _, _ = escape_many(pmap, pts, n_max)
        overflow += int((steps < 0).sum())
        counts += np.bincount(steps[steps >= 0], minlength=n_max + 1)
    vol = pmap.region.measure()
    p = counts[1:] / n_samples
    levels = vol * p
    se = vol * np.sqrt(p * (1 - p) / n_samples)
    return TailProfile.from_levels(
        levels,
        residual=vol * overflow / n_samples,
        stderr=se,
        sample_count=n_samples,
        seed=seed,
        region_volume=vol,
        rejected=rejected,
    )


def tail_exponent(profile: TailProfile, fit_window):
    """OLS slope of ``-log tail`` against ``log n`` over ``n`` in the window.

    Returns ``(rho_hat, stderr)``.
    """
    lo, hi = (int(v) for v in fit_window)
    lo = max(lo, 1)
    hi = min(hi, profile.n_max)
    if hi - lo < 1:
        raise EmptyWindow(f"fit window {fit_window} holds fewer than two levels")
    n = np.arange(lo, hi + 1)
    t = profile.tail_volumes[n - 1]
    if np.any(t <= 0):
        raise NonPositiveTail("tail volume vanishes inside the fit window")
    fit = stats.linregress(np.log(n), -np.log(t))
    return float(fit.slope), float(fit.stderr)


def mean_return_time(pmap: PiecewiseMap, X, n_max=None):
    """Average first-return time over the start points X (boundary rows dropped)."""
    _, times, _, idx = first_return_many(pmap, X, n_max)
    good = (idx >= 0) & (times > 0)
    return float(times[good].mean()), int((times < 0).sum())
