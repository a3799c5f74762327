"""Oscillation fields, the quasi-Hölder seminorm and empirical Lasota-Yorke
coefficients for grid functions.

``osc(f, B_eps(x))`` is the max minus min of ``f`` over the cells whose centres
lie within ``eps`` of the centre of ``x``'s cell.  Max/min over a Euclidean
stencil are computed row by row with 1-D running filters, one per stencil row.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, optimize

from .errors import DegenerateFamily, EpsGridEmpty, EpsTooSmall, PartitionMismatch, ValidationError
from .example_maps import unit_ball_volume
from .transfer import GridDensity, TransferMatrix, UlamPartition, apply_pf


@dataclass(frozen=True)
class QuasiHolderConfig:
    alpha: float = 0.5
    eps0: float = 0.1
    k_max: int = 12

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if not self.eps0 > 0:
            raise ValidationError("eps0 must be positive")
        if self.k_max < 0:
            raise ValidationError("k_max must be >= 0")

    def eps_grid(self, partition: Optional[UlamPartition] = None):
        """``eps0 2^-k``, truncated at two cell widths of ``partition``."""
        eps = self.eps0 * 0.5 ** np.arange(self.k_max + 1)
        if partition is not None:
            eps = eps[eps >= 2 * partition.widths.max() * (1 - 1e-12)]
        if eps.size == 0:
            raise EpsGridEmpty("eps0 is below two cell widths")
        return eps

    @staticmethod
    def gamma_m(m):
        return unit_ball_volume(m)


def _grid(f: GridDensity):
    part = f.partition
    if part is None:
        raise PartitionMismatch("grid function needs a partition")
    vals = f.values.reshape(part.shape)
    mask = part.active.reshape(part.shape) & np.isfinite(vals)
    return part, vals, mask


def _stencil_extreme(G, eps, widths, filt, op, fill):
    """``op``-reduce of G over Euclidean ``eps``-stencils (cell-centre distance)."""
    m = G.ndim
    reach = [int(math.floor(eps / w + 1e-9)) for w in widths[:-1]]
    out = np.full(G.shape, fill)
    cache = {}
    for d in itertools.product(*[range(-r, r + 1) for r in reach]):
        rest = sum((di * w) ** 2 for di, w in zip(d, widths[:-1]))
        if rest > eps * eps * (1 + 1e-12):
            continue
        hw = int(math.floor(math.sqrt(max(eps * eps - rest, 0.0)) / widths[-1] + 1e-9))
        if hw not in cache:
            cache[hw] = filt(G, size=2 * hw + 1, axis=m - 1, mode="constant", cval=fill)
        F = cache[hw]
        dst, src = [], []
        for di, n in zip(d, G.shape[:-1]):
            if di >= 0:
                dst.append(slice(0, n - di))
                src.append(slice(di, n))
            else:
                dst.append(slice(-di, n))
                src.append(slice(0, n + di))
        dst.append(slice(None))
        src.append(slice(None))
        op(out[tuple(dst)], F[tuple(src)], out=out[tuple(dst)])
    return out


def oscillation(f: GridDensity, eps):
    part, vals, mask = _grid(f)
    if eps < 2 * part.widths.max() * (1 - 1e-12):
        raise EpsTooSmall("eps must be at least two cell widths")
    hi = _stencil_extreme(np.where(mask, vals, -np.inf), eps, part.widths, ndimage.maximum_filter1d,
                          np.maximum, -np.inf)
    lo = _stencil_extreme(np.where(mask, vals, np.inf), eps, part.widths, ndimage.minimum_filter1d,
                          np.minimum, np.inf)
    osc = np.where(mask, hi - lo, np.nan)
    return GridDensity(osc.reshape(-1), part)


def seminorm_profile(f: GridDensity, config: QuasiHolderConfig):
    """(eps grid, ``eps^-alpha int osc(f, B_eps)``) over the grid."""
    eps = config.eps_grid(f.partition)
    vol = f.partition.cell_volume
    vals = np.array([np.nansum(oscillation(f, e).values) * vol for e in eps])
    return eps, eps ** (-config.alpha) * vals


def seminorm_alpha(f: GridDensity, config: QuasiHolderConfig):
    return float(seminorm_profile(f, config)[1].max())


def l1_norm(f: GridDensity):
    part, vals, mask = _grid(f)
    return float(np.abs(vals[mask]).sum() * part.cell_volume)


def norm_alpha(f: GridDensity, config: QuasiHolderConfig):
    return l1_norm(f) + seminorm_alpha(f, config)


def sup_norm_bound(f: GridDensity, config: QuasiHolderConfig):
    """``||f||_alpha / (gamma_m eps0^m)``, an upper bound for ``||f||_inf``."""
    m = f.partition.dimension
    return norm_alpha(f, config) / (config.gamma_m(m) * config.eps0**m)


# ---------------------------------------------------------------------------
def default_family(partition: UlamPartition, n_indicators=64, n_trig=16, seed=0):
    """Nonnegative test functions: smoothed indicators of random boxes and
    positive trigonometric profiles, restricted to the active cells."""
    rng = np.random.default_rng(seed)
    C = partition.centers()
    span = partition.hi - partition.lo
    m = partition.dimension
    fam = []
    for _ in range(n_indicators):
        a = partition.lo + rng.random(m) * span
        half = (0.05 + 0.25 * rng.random(m)) * span
        ind = np.all(np.abs(C - a) < half, axis=1).astype(float).reshape(partition.shape)
        sigma = rng.uniform(0.5, 3.0)
        fam.append(ndimage.gaussian_filter(ind, sigma, mode="nearest").reshape(-1))
    for _ in range(n_trig):
        k = rng.integers(1, 6, size=m)
        phase = rng.random(m) * 2 * np.pi
        u = (C - partition.lo) / span
        prof = 1.0 + 0.9 * np.prod(np.cos(2 * np.pi * k * u + phase), axis=1)
        fam.append(prof)
    out = []
    for v in fam:
        v = np.where(partition.active, v, np.nan)
        out.append(GridDensity(v, partition))
    return out


@dataclass
class LYReport:
    eta_hat: float
    D_hat: float
    rows: list
    family: str = ""
    meta: dict = field(default_factory=dict)

    def to_json(self, path=None):
        doc = {
            "eta_hat": self.eta_hat,
            "D_hat": self.D_hat,
            "family": self.family,
            "rows": [
                {"f_id": i, "f_alpha": a, "f_l1": b, "pf_alpha": c} for i, (a, b, c) in enumerate(self.rows)
            ],
        }
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def iterate_bound(self, f_alpha, f_l1):
        return f_alpha + self.D_hat * f_l1 / (1.0 - self.eta_hat)


def _D_of_eta(eta, a, b, c):
    need = np.maximum(c - eta * a, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(need > 0, need / b, 0.0)
    return float(r.max())


def fit_ly(rows):
    """Pick ``(eta, D)`` satisfying every row, minimising ``D / (1 - eta)``.

    Every ``eta >= 0`` admits a smallest feasible ``D(eta)``; the pair that
    minimises the geometric-series bound ``D/(1 - eta)`` is returned.
    """
    a, b, c = (np.array(col, dtype=float) for col in zip(*rows))
    if np.all(a < 1e-12):
        return 0.0, _D_of_eta(0.0, a, b, c)
    if np.any((b <= 0) & (c > 0)):
        raise DegenerateFamily("a function with zero L1 norm has non-zero image seminorm")
    res = optimize.minimize_scalar(lambda e: _D_of_eta(e, a, b, c) / (1 - e), bounds=(0.0, 0.999),
                                   method="bounded", options={"xatol": 1e-6})
    grid = np.linspace(0, 0.999, 1000)
    vals = [_D_of_eta(e, a, b, c) / (1 - e) for e in grid]
    eta = float(res.x) if res.fun <= min(vals) else float(grid[int(np.argmin(vals))])
    return eta, _D_of_eta(eta, a, b, c)


def ly_estimate(matrix: TransferMatrix, test_family: Optional[Sequence[GridDensity]] = None,
                config: QuasiHolderConfig = QuasiHolderConfig(), seed=0):
    part = matrix.partition
    label = "given"
    if test_family is None:
        test_family = default_family(part, seed=seed)
        label = f"default(64 smoothed indicators + 16 trig profiles, seed={seed})"
    if len(test_family) == 0:
        raise DegenerateFamily("empty test family")
    rows = []
    for f in test_family:
        rows.append((seminorm_alpha(f, config), l1_norm(f), seminorm_alpha(apply_pf(matrix, f), config)))
    eta, D = fit_ly(rows)
    return LYReport(eta, D, rows, label, meta={"alpha": config.alpha, "eps0": config.eps0})
