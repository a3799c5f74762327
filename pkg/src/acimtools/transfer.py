"""Ulam discretisation of the induced transfer operator, its invariant density,
the extension of that density into ``R`` and the finite / sigma-finite verdict.

Densities live on a uniform grid over the box.  Only cells whose closure
avoids ``R`` ("active" cells) carry the induced operator; samples whose return
point falls in an inactive cell are credited to the nearest active cell and
the moved mass is reported.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import interpolate, ndimage, sparse

from . import kernels
from .errors import (
    BadResolution,
    InsufficientFit,
    InverseFailure,
    NoConvergence,
    PartitionMismatch,
    ValidationError,
)
from .induction import TailProfile, escape_many, first_return_many, tail_exponent
from .map_model import PiecewiseMap

ACTIVE, IN_REGION, STRADDLE, OUTSIDE_DOMAIN = 0, 1, 2, 3
CELL_BLOCK = 2048


@dataclass(eq=False)
class UlamPartition:
    lo: np.ndarray
    hi: np.ndarray
    resolution: int
    category: np.ndarray  # flat, one of ACTIVE/IN_REGION/STRADDLE/OUTSIDE_DOMAIN
    branch_straddle: np.ndarray  # flat bool, informational

    @property
    def dimension(self):
        return self.lo.size

    @property
    def shape(self):
        return (self.resolution,) * self.dimension

    @property
    def n_cells(self):
        return self.resolution**self.dimension

    @property
    def widths(self):
        return (self.hi - self.lo) / self.resolution

    @property
    def cell_volume(self):
        return float(np.prod(self.widths))

    @property
    def active(self):
        return self.category == ACTIVE

    def centers(self, flat=None):
        if flat is None:
            flat = np.arange(self.n_cells)
        ijk = np.column_stack(np.unravel_index(flat, self.shape))
        return self.lo + (ijk + 0.5) * self.widths

    def axes(self):
        return [self.lo[a] + (np.arange(self.resolution) + 0.5) * self.widths[a] for a in range(self.dimension)]

    def cell_of(self, X):
        """Flat cell index per row; -1 outside the box."""
        ijk = np.floor((X - self.lo) / self.widths).astype(np.int64)
        bad = np.any((ijk < 0) | (ijk >= self.resolution), axis=1) | ~np.isfinite(X).all(axis=1)
        ijk = np.clip(ijk, 0, self.resolution - 1)
        flat = np.ravel_multi_index(tuple(ijk.T), self.shape)
        flat[bad] = -1
        return flat

    def same_as(self, other):
        return (
            other is self
            or (
                other is not None
                and self.resolution == other.resolution
                and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi)
                and np.array_equal(self.category, other.category)
            )
        )


def _corner_grid(lo, hi, res):
    axes = [np.linspace(lo[a], hi[a], res + 1) for a in range(lo.size)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)


def _cell_corner_reduce(values, res, m, op):
    """Reduce per-corner values over the 2^m corners of every cell."""
    V = values.reshape((res + 1,) * m)
    out = None
    for corner in range(2**m):
        sl = tuple(slice(1, None) if (corner >> a) & 1 else slice(0, -1) for a in range(m))
        out = V[sl] if out is None else op(out, V[sl])
    return out.reshape(-1)


def build_partition(pmap_or_box, resolution):
    """Uniform grid over the box with cells classified against ``R``.

    A cell straddles ``R`` when one corner lies strictly inside and another
    strictly outside (by more than ``root_tol``).  Given only a box, every
    cell is active.
    """
    resolution = int(resolution)
    if resolution < 8:
        raise BadResolution("resolution must be at least 8 cells per axis")
    pmap = pmap_or_box if isinstance(pmap_or_box, PiecewiseMap) else None
    box = pmap.box if pmap is not None else pmap_or_box
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in box)
    m = lo.size
    n = resolution**m
    category = np.full(n, ACTIVE, dtype=np.int8)
    bstr = np.zeros(n, dtype=bool)
    if pmap is not None:
        tol = pmap.tol.root_tol
        part = UlamPartition(lo, hi, resolution, category, bstr)
        C = part.centers()
        corners = _corner_grid(lo, hi, resolution)
        sd = pmap.region.sdist(corners)
        any_in = _cell_corner_reduce(sd < -tol, resolution, m, np.logical_or)
        any_out = _cell_corner_reduce(sd > tol, resolution, m, np.logical_or)
        center_in = pmap.region.contains(C)
        category[center_in] = IN_REGION
        category[any_in & any_out] = STRADDLE
        category[~pmap.in_domain(C)] = OUTSIDE_DOMAIN
        loc = pmap.locate(corners)
        bstr[:] = _cell_corner_reduce(loc, resolution, m, np.maximum) != _cell_corner_reduce(
            loc, resolution, m, np.minimum
        )
    return UlamPartition(lo, hi, resolution, category, bstr)


@dataclass(eq=False)
class TransferMatrix:
    """Row-stochastic Ulam matrix over the active cells."""

    P: sparse.csr_matrix
    partition: UlamPartition
    samples_per_cell: int
    seed: int
    reassigned_fraction: float = 0.0
    starved_cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    overflow_samples: int = 0

    @property
    def active_cells(self):
        return np.flatnonzero(self.partition.active)

    def header(self):
        p = self.partition
        return {
            "resolution": p.resolution,
            "box": [p.lo.tolist(), p.hi.tolist()],
            "n_active": int(self.P.shape[0]),
            "samples_per_cell": self.samples_per_cell,
            "seed": self.seed,
            "reassigned_fraction": self.reassigned_fraction,
            "starved_cells": [int(c) for c in self.starved_cells],
            "overflow_samples": self.overflow_samples,
        }

    def to_csv(self, path=None):
        """Triplet CSV (active-cell row, column, value); header is written alongside as JSON."""
        coo = self.P.tocoo()
        order = np.lexsort((coo.col, coo.row))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            w.writerow([int(r), int(c), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
            with open(str(path) + ".json", "w") as fh:
                json.dump(self.header(), fh, indent=2, sort_keys=True)
        return text


def _stratified(rng, lo, widths, n_sub, count):
    """``count`` jittered points per cell: one per sub-cell of an ``n_sub^m`` split."""
    m = lo.shape[1]
    sub = np.stack(np.meshgrid(*([np.arange(n_sub)] * m), indexing="ij"), axis=-1).reshape(-1, m)
    if len(sub) > count:
        sub = sub[np.sort(rng.permutation(len(sub))[:count])]
    u = (sub[None, :, :] + rng.random((lo.shape[0], len(sub), m))) / n_sub
    return lo[:, None, :] + u * widths


def build_transfer(pmap: PiecewiseMap, partition: UlamPartition, samples_per_cell=64, seed=0,
                   n_max=None, block_cells=CELL_BLOCK):
    if samples_per_cell < 16:
        raise ValidationError("samples_per_cell must be at least 16")
    part = partition
    m = part.dimension
    active = np.flatnonzero(part.active)
    n_act = active.size
    pos = np.full(part.n_cells, -1, dtype=np.int64)
    pos[active] = np.arange(n_act)
    # nearest active cell for every cell of the grid
    inactive_grid = ~part.active.reshape(part.shape)
    _, near = ndimage.distance_transform_edt(inactive_grid, return_indices=True)
    nearest = np.ravel_multi_index(tuple(near.reshape(m, -1)), part.shape)
    n_sub = math.ceil(samples_per_cell ** (1.0 / m) - 1e-9)
    rows, cols = [], []
    counts = np.zeros(n_act, dtype=np.int64)
    moved = 0
    overflow = 0
    total = 0
    for b, start in enumerate(range(0, n_act, block_cells)):
        rng = np.random.default_rng([seed, b])
        cells = active[start:start + block_cells]
        lo = part.centers(cells) - 0.5 * part.widths
        X = _stratified(rng, lo, part.widths, n_sub, samples_per_cell)
        k = X.shape[1]
        src = np.repeat(np.arange(start, start + len(cells)), k)
        X = X.reshape(-1, m)
        keep = pmap.in_domain(X) & ~pmap.region.contains(X)
        Y, times, _, idx = first_return_many(pmap, X[keep], n_max)
        src = src[keep]
        ok = (idx >= 0) & (times > 0)
        overflow += int(((idx >= 0) & (times < 0)).sum())
        tgt = part.cell_of(Y[ok])
        src = src[ok]
        inside = tgt >= 0
        tgt, src = tgt[inside], src[inside]
        t_act = pos[tgt]
        miss = t_act < 0
        moved += int(miss.sum())
        t_act[miss] = pos[nearest[tgt[miss]]]
        total += len(src)
        rows.append(src)
        cols.append(t_act)
        counts += np.bincount(src, minlength=n_act)
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    C = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_act, n_act)).tocsr()
    C.sum_duplicates()
    starved = np.flatnonzero(counts < samples_per_cell / 2)
    rs = np.asarray(C.sum(axis=1)).ravel()
    rs[rs == 0] = 1.0
    P = sparse.diags(1.0 / rs) @ C
    P = P.tolil()
    for r in starved:
        P.rows[r] = list(range(n_act))
        P.data[r] = [1.0 / n_act] * n_act
    P = P.tocsr()
    return TransferMatrix(
        P=P,
        partition=part,
        samples_per_cell=int(samples_per_cell),
        seed=int(seed),
        reassigned_fraction=moved / max(total, 1),
        starved_cells=active[starved],
        overflow_samples=overflow,
    )


@dataclass(eq=False)
class GridDensity:
    """Cell values on a partition (NaN where undefined)."""

    values: np.ndarray
    partition: Optional[UlamPartition] = None
    meta: dict = field(default_factory=dict)

    @property
    def cell_volume(self):
        if self.partition is None:
            return 1.0 / len(self.values)
        return self.partition.cell_volume

    @property
    def mass(self):
        return float(np.nansum(self.values) * self.cell_volume)

    def on_active(self):
        if self.partition is None:
            return self.values
        return self.values[self.partition.active]

    @classmethod
    def from_active(cls, partition, vals, **kw):
        full = np.full(partition.n_cells, np.nan)
        full[partition.active] = vals
        return cls(full, partition, **kw)

    def l1_distance(self, other):
        """``int |f - g|`` over cells where both are defined."""
        d = np.abs(self.values - other.values)
        return float(np.nansum(d) * self.cell_volume)

    def to_csv(self, path=None):
        p = self.partition
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = p.dimension if p is not None else 1
        w.writerow(["cell"] + [f"x{a}" for a in range(m)] + ["value"])
        C = p.centers() if p is not None else np.arange(len(self.values))[:, None].astype(float)
        for i, v in enumerate(self.values):
            if np.isfinite(v):
                w.writerow([i] + [repr(float(c)) for c in C[i]] + [repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _as_matrix(matrix):
    if isinstance(matrix, TransferMatrix):
        return matrix.P, matrix.partition
    return sparse.csr_matrix(matrix), None


def invariant_density(matrix, tol=1e-10, max_iter=20_000, start=None):
    """Measure-side fixed point ``p P = p`` by power iteration.

    Starts from the uniform vector (or ``start``).  The residual is the L1
    change of the cell masses over one sweep, which equals
    ``||P^h - h||_1`` for the represented density.
    """
    P, part = _as_matrix(matrix)
    n = P.shape[0]
    rs = np.asarray(P.sum(axis=1)).ravel()
    if np.any(np.abs(rs - 1) > 1e-9) or (P.data < 0).any():
        raise ValidationError("matrix must be row-stochastic")
    p = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float) / np.sum(start)
    PT = P.T.tocsr()
    history = []
    res = np.inf
    for _ in range(max_iter):
        q = PT @ p
        res = float(np.abs(q - p).sum())
        history.append(res)
        p = q / q.sum()
        if res < tol:
            break
    else:
        last = _density_from_masses(p, part)
        raise NoConvergence(f"power iteration stalled at residual {res:.3e}", last=last, residual=res)
    out = _density_from_masses(p, part)
    out.meta.update(residual=res, sweeps=len(history), history=history)
    return out


def _density_from_masses(p, part):
    if part is None:
        return GridDensity(p.copy())
    return GridDensity.from_active(part, p / part.cell_volume)


def apply_pf(matrix, f: GridDensity):
    """Discrete transfer operator ``(P f)_j = sum_i P_ij f_i vol(A_i) / vol(A_j)``."""
    P, part = _as_matrix(matrix)
    if part is None:
        if f.partition is not None or len(f.values) != P.shape[0]:
            raise PartitionMismatch("function and matrix live on different partitions")
        return GridDensity(P.T @ f.values)
    if f.partition is None or not part.same_as(f.partition):
        raise PartitionMismatch("function and matrix live on different partitions")
    vals = f.values[part.active]
    # equal cell volumes cancel
    return GridDensity.from_active(part, P.T @ vals)


def _interpolator(density: GridDensity):
    """Linear interpolation of active-cell values; inactive cells take the
    value of the nearest active cell."""
    part = density.partition
    grid = density.values.reshape(part.shape)
    inactive = ~part.active.reshape(part.shape)
    if inactive.any():
        _, near = ndimage.distance_transform_edt(inactive, return_indices=True)
        grid = grid[tuple(near)]
    return interpolate.RegularGridInterpolator(part.axes(), grid, bounds_error=False, fill_value=None)


def _other_preimage_sum(pmap, hfun, Z):
    """``S(z) = sum_{j != 1} h(T_j^{-1} z) g(T_j^{-1} z)`` for rows of Z."""
    S = np.zeros(Z.shape[0])
    for b in pmap.branches[1:]:
        if b.inverse is None:
            raise InverseFailure(f"branch {b.label} has no inverse")
        W = b.inverse(Z)
        hit = b.contains(W) & pmap.in_domain(W)
        if hit.any():
            S[hit] += hfun(W[hit]) / np.abs(b.jacobian_det(W[hit]))
    return S


def extend_density(pmap: PiecewiseMap, density_hat: GridDensity, n_levels=10_000):
    """Extend the induced density into ``R`` by the pullback recursion

    ``h(x) = |det DT_1(x)| (h(T x) - S(T x))``

    unrolled along the exact orbit of each ``R``-cell centre until it leaves
    ``R``.  Centres not escaping within ``n_levels`` steps stay NaN; negative
    values are clamped to zero and counted in ``meta``.
    """
    part = density_hat.partition
    if part is None:
        raise PartitionMismatch("density_hat must carry its partition")
    hfun = _interpolator(density_hat)
    lf = pmap.branches[0].local_form
    out = density_hat.values.copy()
    cells = np.flatnonzero(part.category != ACTIVE)
    C = part.centers(cells)
    inR = pmap.region.contains(C) & pmap.in_domain(C)
    cells, C = cells[inR], C[inR]
    steps, _, _ = escape_many(pmap, C, n_levels)
    good = steps > 0
    cells, C, steps = cells[good], C[good], steps[good]
    vals = np.zeros(len(cells))
    logJ = np.zeros(len(cells))  # log prod |det DT_1| over x_0 .. x_{k-1}
    X = C.copy()
    alive = np.arange(len(cells))
    from ._kernels_py import _step_many

    k = 0
    while alive.size:
        Xn, det = _step_many(lf.kind, X[alive], lf.gamma, lf.coeff)
        logJ[alive] += np.log(np.abs(det))
        k += 1
        X[alive] = Xn
        S = _other_preimage_sum(pmap, hfun, Xn)
        done = steps[alive] == k
        w = np.exp(logJ[alive])
        # interior orbit points contribute -J S; the exit point contributes J (h - S)
        contrib = -w * S
        if done.any():
            contrib[done] += w[done] * hfun(Xn[done])
        vals[alive] += contrib
        alive = alive[~done]
    neg = vals < 0
    vals[neg] = 0.0
    out[cells] = vals
    res = GridDensity(out, part, meta={"clamped": int(neg.sum()), "unresolved": int((~good).sum())})
    res.meta["levels"] = np.full(part.n_cells, -1, dtype=np.int64)
    res.meta["levels"][cells] = steps
    return res


@dataclass(frozen=True)
class Classification:
    verdict: str
    rho_hat: float
    stderr: float
    margin: float
    extended_mass_bound: float
    fit_window: tuple

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "rho_hat": self.rho_hat,
            "stderr": self.stderr,
            "margin": self.margin,
            "extended_mass_bound": self.extended_mass_bound,
            "fit_window": list(self.fit_window),
        }


def classify_measure(profile: TailProfile, density_hat: Optional[GridDensity] = None, margin=0.15,
                     fit_window=None, k_prime=2, z=3.0):
    """Finite if the tail exponent clears ``1 + margin``, sigma-finite if it stays
    below ``1 - margin``.  Inside the band the verdict is sigma-finite when
    ``rho + z * stderr < 1``, and indeterminate otherwise.

    For a Finite verdict the extended mass is bounded by
    ``||h^||_inf (K' - 1) sum_n nu(escape > n)`` over the measured levels.
    """
    if fit_window is None:
        fit_window = (max(1, profile.n_max // 10), profile.n_max)
    rho, se = tail_exponent(profile, fit_window)
    if not se < margin / 2:
        raise InsufficientFit(f"fit stderr {se:.3g} is not below margin/2")
    if rho >= 1 + margin:
        verdict = "Finite"
    elif rho <= 1 - margin:
        verdict = "SigmaFinite"
    elif rho + z * se < 1:
        # inside the band but significantly below the harmonic rate: the
        # tail sum diverges (a shifted law c/(n + k) sits here)
        verdict = "SigmaFinite"
    else:
        verdict = "Indeterminate"
    bound = math.inf
    if verdict == "Finite":
        hmax = 1.0 if density_hat is None else float(np.nanmax(density_hat.on_active()))
        bound = hmax * (k_prime - 1) * float(profile.tail_volumes.sum())
    return Classification(verdict, rho, se, margin, bound, tuple(int(v) for v in fit_window))


def orbit_histogram_density(pmap: PiecewiseMap, partition: UlamPartition, n_steps=10**7, burn=1000, t0=None):
    """Oracle for the one-dimensional neutral map: histogram of the full orbit's
    visits to ``M^``, normalised to mass 1 there.

    Visits of the full orbit to ``M^`` are exactly the induced orbit, so this
    estimates the induced invariant density independently of the Ulam matrix.
    """
    if pmap.dimension != 1:
        raise ValidationError("orbit oracle is one-dimensional")
    lf = pmap.branches[0].local_form
    rR = float(pmap.region.bbox[1][0])
    if t0 is None:
        t0 = (math.sqrt(5) - 1) / 2
    lo, hi = float(partition.lo[0]), float(partition.hi[0])
    counts, _ = kernels.orbit_histogram_1d(t0, lf.gamma, lf.coeff, pmap.local_radius, int(n_steps), int(burn),
                                          lo, hi, partition.resolution)
    counts = np.asarray(counts, dtype=float)
    act = partition.active
    total = counts[act].sum()
    vals = np.full(partition.n_cells, np.nan)
    vals[act] = counts[act] / (total * partition.cell_volume)
    return GridDensity(vals, partition, meta={"visits": int(total), "region_edge": rR})
