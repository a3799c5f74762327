"""Numerical estimates of the expansion, boundary-overlap and distortion
constants, and the smallness condition ``s^alpha + lambda < 1``.

All estimates are sampled and therefore lower bounds of the true suprema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BadRadii, DegenerateProbe, EmptyTable, ValidationError
from .example_maps import unit_ball_volume
from .map_model import PiecewiseMap, contraction_coefficient, uniform_ball

FD_STEP = 1e-7


def audit_grid_points(pmap: PiecewiseMap, per_axis=32):
    """Cell-centred grid of ``per_axis^m`` points over the box."""
    if per_axis < 32:
        raise ValidationError("audit grid needs at least 32 points per axis")
    lo, hi = (np.asarray(b, dtype=float) for b in pmap.box)
    axes = [lo[a] + (np.arange(per_axis) + 0.5) * (hi[a] - lo[a]) / per_axis for a in range(lo.size)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)


def expansion_audit(pmap: PiecewiseMap, audit_grid=32, probe_radius=0.01, seed=0, n_samples=256, top=5):
    """Largest sampled contraction coefficient over grid points of ``M^``.

    Returns ``(s_hat, worst_points, info)``; ``info`` counts grid points
    skipped because they lie in ``R``, outside the domain, on a branch
    boundary, or at the neutral point.
    """
    G = audit_grid_points(pmap, audit_grid) if np.isscalar(audit_grid) else np.asarray(audit_grid, dtype=float)
    skip = {"in_region": 0, "outside": 0, "boundary": 0, "degenerate": 0}
    idx = pmap.locate(G)
    inR = pmap.region.contains(G)
    skip["in_region"] = int(inR.sum())
    skip["outside"] = int(((idx == -1) & ~inR).sum())
    skip["boundary"] = int(((idx == -2) & ~inR).sum())
    use = np.flatnonzero((idx >= 0) & ~inR)
    s = np.full(len(use), np.nan)
    for k, i in enumerate(use):
        try:
            s[k] = contraction_coefficient(pmap, G[i], probe_radius, n_samples, seed=seed + int(i))
        except DegenerateProbe:
            skip["degenerate"] += 1
    ok = np.isfinite(s)
    if not ok.any():
        raise ValidationError("no auditable grid point in M^")
    order = np.argsort(-np.where(ok, s, -np.inf))[:top]
    worst = G[use[order]]
    return float(np.nanmax(s)), worst, skip


def _grad_sdist(branch, Y):
    m = Y.shape[1]
    g = np.empty_like(Y)
    for a in range(m):
        e = np.zeros(m)
        e[a] = FD_STEP
        g[:, a] = (branch.sdist(Y + e) - branch.sdist(Y - e)) / (2 * FD_STEP)
    return g


def _near_image_boundary(pmap, Y, idx, eps):
    """Whether ``T_j y`` lies within ``eps`` of the image boundary ``T_j(dU_j)``.

    The image distance is the first-order push-forward of the signed distance:
    ``|sdist(y)| * |DT(y) grad sdist(y)|`` (exact for similarities).
    """
    near = np.zeros(len(Y), dtype=bool)
    for k, b in enumerate(pmap.branches):
        sel = np.flatnonzero(idx == k)
        if sel.size == 0:
            continue
        Z = Y[sel]
        sd = b.sdist(Z)
        finite = np.isfinite(sd)
        if not finite.any():
            continue
        Z, sd, sel = Z[finite], sd[finite], sel[finite]
        grad = _grad_sdist(b, Z)
        push = np.linalg.norm(np.einsum("nij,nj->ni", b.jacobian(Z), grad), axis=1)
        near[sel] = np.abs(sd) * push < eps
    return near


def _check_radii(pmap, eps, eps0):
    grid = np.asarray(pmap.tol.audit_radius_grid, dtype=float)
    if not (0 < eps <= eps0):
        raise BadRadii("need 0 < eps <= eps0")
    for r in (eps, eps0):
        if not np.any(np.isclose(grid, r, rtol=1e-12, atol=0)):
            raise BadRadii(f"radius {r} is not on the audit radius grid {grid.tolist()}")


def _centers(pmap, n, rng):
    """Stratified centres over the box, restricted to ``M^``."""
    lo, hi = (np.asarray(b, dtype=float) for b in pmap.box)
    m = lo.size
    k = int(np.ceil(n ** (1.0 / m)))
    sub = np.stack(np.meshgrid(*([np.arange(k)] * m), indexing="ij"), axis=-1).reshape(-1, m)
    C = lo + (sub + rng.random(sub.shape)) / k * (hi - lo)
    C = C[pmap.in_domain(C) & ~pmap.region.contains(C)]
    return C[:n]


def boundary_overlap(pmap: PiecewiseMap, eps, eps0, n_centers=1000, samples_per_center=512, seed=0, s=1.0 / 3.0,
                     centers=None):
    """Sampled ``sup_x G_U(x, eps, eps0)``: the fraction of ``B_{(1-s)eps0}(x)``
    whose image lies within ``eps`` of a branch-image boundary.

    Returns ``(G_hat, centers)``.
    """
    _check_radii(pmap, eps, eps0)
    if not 0 < s < 1:
        raise ValidationError("s must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    if centers is None:
        centers = _centers(pmap, n_centers, rng)
    r = (1 - s) * eps0
    m = pmap.dimension
    best = 0.0
    for c in centers:
        Y = c + uniform_ball(rng, samples_per_center, m, r)
        idx = pmap.locate(Y)
        frac = _near_image_boundary(pmap, Y, idx, eps).mean()
        best = max(best, float(frac))
    return best, centers


def lambda_estimate(G_table, s_hat, alpha, m, eps2=None):
    """``max(2 sup G eps0^alpha / eps^alpha, 3 s gamma_{m-1} / ((1 - s) gamma_m))``.

    ``G_table`` rows are ``(eps, eps0, G)``; rows with ``eps0 > eps2`` are
    dropped when ``eps2`` is given.  Returns ``(lambda_hat, condition_value)``.
    """
    rows = [tuple(r) for r in G_table if eps2 is None or r[1] <= eps2]
    if not rows:
        raise EmptyTable("G table is empty")
    first = max(2.0 * G * (e0 / e) ** alpha for e, e0, G in rows)
    second = 3.0 * s_hat * unit_ball_volume(m - 1) / ((1.0 - s_hat) * unit_ball_volume(m))
    lam = max(first, second)
    return float(lam), float(s_hat**alpha + lam)


def distortion_holder_constant(pmap: PiecewiseMap, n_pairs=1000, seed=0, alpha=0.5, branch=None, radius=None):
    """Sampled ``max |g(x) - g(y)| / (g(x) d(x, y)^alpha)`` with ``g = |det DT_j^{-1}|``
    over image pairs ``x = T u``, ``y = T v`` of same-branch points ``u, v``.

    ``branch`` (1-based) restricts to one branch; ``radius`` restricts the
    preimages to the centred ball of that radius.
    """
    if n_pairs < 1000:
        raise ValidationError("n_pairs must be at least 1000")
    rng = np.random.default_rng(seed)
    lo, hi = (np.asarray(b, dtype=float) for b in pmap.box)
    branches = [pmap.branch(branch)] if branch is not None else list(pmap.branches)
    best = 0.0
    per = -(-n_pairs // len(branches))
    for b in branches:
        U, V = [], []
        got = 0
        for _ in range(200):
            P = lo + (hi - lo) * rng.random((4 * per, 2, lo.size))
            ok = b.contains(P[:, 0]) & b.contains(P[:, 1]) & pmap.in_domain(P[:, 0]) & pmap.in_domain(P[:, 1])
            if radius is not None:
                ok &= (np.linalg.norm(P[:, 0], axis=1) < radius) & (np.linalg.norm(P[:, 1], axis=1) < radius)
            P = P[ok]
            U.append(P[:, 0])
            V.append(P[:, 1])
            got += len(P)
            if got >= per:
                break
        if got == 0:
            continue
        U = np.concatenate(U)[:per]
        V = np.concatenate(V)[:per]
        gu = 1.0 / np.abs(b.jacobian_det(U))
        gv = 1.0 / np.abs(b.jacobian_det(V))
        d = np.linalg.norm(b.forward(U) - b.forward(V), axis=1)
        keep = d > 0
        ratio = np.abs(gu - gv)[keep] / (gu[keep] * d[keep] ** alpha)
        if ratio.size:
            best = max(best, float(ratio.max()))
    return best


@dataclass
class AuditReport:
    s_hat: float
    lambda_hat: float
    G_table: list
    c_hat: float
    condition_value: float
    alpha: float
    worst_points: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def verdict(self):
        return bool(self.condition_value < 1.0)

    def to_dict(self):
        return {
            "s_hat": self.s_hat,
            "lambda_hat": self.lambda_hat,
            "G_table": [{"eps": e, "eps0": e0, "G": g} for e, e0, g in self.G_table],
            "c_hat": self.c_hat,
            "condition_value": self.condition_value,
            "verdict": self.verdict,
            "alpha": self.alpha,
            "worst_points": [list(map(float, p)) for p in self.worst_points],
            "meta": self.meta,
            "not_machine_checkable": ["N_s", "N(eps)", "J", "b", "C_xi", "I"],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def run_audit(pmap: PiecewiseMap, alpha=0.5, grid=32, radii=None, n_centers=200, samples_per_center=256,
              n_pairs=1000, probe_radius=0.01, seed=0, eps2=None):
    """Full audit with every (eps <= eps0) pair from the radius grid."""
    s_hat, worst, skipped = expansion_audit(pmap, grid, probe_radius, seed)
    radii = sorted(pmap.tol.audit_radius_grid if radii is None else radii)
    s_used = min(s_hat, 1 - 1e-9)
    table = []
    centers = None
    for j, e0 in enumerate(radii):
        for e in radii[: j + 1]:
            G, centers = boundary_overlap(pmap, e, e0, n_centers, samples_per_center, seed, s_used, centers)
            table.append((float(e), float(e0), G))
    lam, cond = lambda_estimate(table, s_used, alpha, pmap.dimension, eps2)
    c_hat = distortion_holder_constant(pmap, n_pairs, seed, alpha)
    meta = {"grid": grid, "radii": list(radii), "n_centers": int(len(centers)), "seed": seed,
            "skipped": skipped, "probe_radius": probe_radius}
    return AuditReport(s_hat, lam, table, c_hat, cond, alpha, worst.tolist(), meta)
