"""Built-in maps: the planar and spatial germs, the parabola example and a
one-dimensional neutral map used as a cross-check oracle.

Each germ is fixed only near the neutral point.  Away from it the map is
completed by a folding surrogate: ``k`` affine laps per axis on ``[-1, 1]``,
slopes ``+-k``, every lap mapping onto ``[-1, 1]``.  The germ owns a ball of
radius ``r0`` (an ellipsoid in 3-D) and each lap owns its box minus that ball.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate, optimize

from . import kernels
from .errors import BadSpec
from .map_model import Branch, LocalForm, PiecewiseMap, Region, ToleranceConfig


def full_branch_radius(gamma, coeff=1.0):
    """Root of ``r (1 + coeff r^gamma) = 1``: the germ then maps ``[0, r)`` onto ``[0, 1)``."""
    return optimize.brentq(lambda r: r * (1 + coeff * r**gamma) - 1.0, 0.0, 1.0, xtol=1e-15)


def unit_ball_volume(m):
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


@dataclass(frozen=True)
class ExampleSpec:
    example_id: Union[int, str] = 1
    r0: Optional[float] = None
    region_radius: Optional[float] = None
    surrogate_expansion: float = 3.0
    gamma: float = 2.0

    def __post_init__(self):
        if self.example_id not in (1, 2, 3, 4, "neutral1d"):
            raise BadSpec(f"unknown example_id {self.example_id!r}")
        if self.r0 is not None and not self.r0 > 0:
            raise BadSpec("r0 must be positive")
        if not self.gamma > 0:
            raise BadSpec("gamma must be positive")
        if self.region_radius is not None and not (0 < self.region_radius < self.radius_r0):
            raise BadSpec("region_radius must lie in (0, r0)")
        k = self.surrogate_expansion
        if k < 2 or k != int(k):
            raise BadSpec("surrogate_expansion must be an integer >= 2 (full-branch folding)")

    @property
    def radius_r0(self):
        """Germ radius; for the 1-D map the default makes the germ branch full."""
        if self.r0 is not None:
            return self.r0
        if self.example_id == "neutral1d":
            return full_branch_radius(self.gamma)
        return 0.5

    @property
    def radius_R(self):
        if self.region_radius is not None:
            return self.region_radius
        return 0.25 if self.example_id == "neutral1d" else 0.2

    @classmethod
    def from_dict(cls, d):
        allowed = {"example_id", "r0", "region_radius", "surrogate_expansion", "gamma"}
        unknown = set(d) - allowed
        if unknown:
            raise BadSpec(f"unknown ExampleSpec fields {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        d = asdict(self)
        d["region_radius"] = self.radius_R
        d["r0"] = self.radius_r0
        return d


# ---------------------------------------------------------------------------
# folding surrogate
class Fold:
    """``k``-lap full-branch folding of ``[-1, 1]``; the lap through 0 is increasing."""

    def __init__(self, k):
        self.k = int(k)
        self.edges = -1.0 + 2.0 * np.arange(self.k + 1) / self.k
        mid = (self.k - 1) // 2
        self.signs = np.array([1.0 if (i - mid) % 2 == 0 else -1.0 for i in range(self.k)])

    def apply(self, u, lap):
        a = self.edges[lap]
        s = self.signs[lap]
        return np.where(s > 0, -1.0 + self.k * (u - a), 1.0 - self.k * (u - a))

    def invert(self, v, lap):
        a = self.edges[lap]
        s = self.signs[lap]
        return np.where(s > 0, a + (v + 1.0) / self.k, a + (1.0 - v) / self.k)

    def slope(self, lap):
        return self.signs[lap] * self.k

    def face_constraints(self, lap):
        """(lower, upper) internal cut positions; None where the face is on dM."""
        lo = self.edges[lap] if lap > 0 else None
        hi = self.edges[lap + 1] if lap < self.k - 1 else None
        return lo, hi


def _halfspace_sdist(X, axis, lo, hi):
    parts = []
    if lo is not None:
        parts.append(lo - X[:, axis])
    if hi is not None:
        parts.append(X[:, axis] - hi)
    return parts


def _max_parts(parts, n):
    if not parts:
        return np.full(n, -np.inf)
    return np.max(np.stack(parts), axis=0)


def _affine_lap_branch(index, fold, laps, cut_sdist):
    """Product-lap branch ``U = lap box \\ cut`` with diagonal affine action."""
    laps = tuple(int(a) for a in laps)
    m = len(laps)
    slopes = np.array([fold.slope(a) for a in laps])

    def sdist(X):
        parts = []
        for ax, a in enumerate(laps):
            parts += _halfspace_sdist(X, ax, *fold.face_constraints(a))
        box = _max_parts(parts, X.shape[0])
        return np.maximum(box, -cut_sdist(X))

    def forward(X):
        return np.column_stack([fold.apply(X[:, ax], a) for ax, a in enumerate(laps)])

    def inverse(Y):
        return np.column_stack([fold.invert(Y[:, ax], a) for ax, a in enumerate(laps)])

    jac = np.diag(slopes)

    def jacobian(X):
        return np.broadcast_to(jac, (X.shape[0], m, m)).copy()

    def det(X):
        return np.full(X.shape[0], float(np.prod(slopes)))

    return Branch(index, sdist, forward, jacobian, det=det, inverse=inverse, label=f"lap{laps}")


def _lap_is_empty(fold, laps, cut_sdist, extra_sdist=None, n=24):
    grids = [np.linspace(fold.edges[a], fold.edges[a + 1], n)[1:-1] for a in laps]
    pts = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, len(laps))
    keep = cut_sdist(pts) > 0
    if extra_sdist is not None:
        keep &= extra_sdist(pts) < 0
    return not keep.any()


# ---------------------------------------------------------------------------
# germs
def _ex1_forward(X):
    x, y = X[:, 0], X[:, 1]
    q = 1.0 + x * x + y * y
    return np.column_stack((x * q, y * q * q))


def _ex1_jacobian(X):
    x, y = X[:, 0], X[:, 1]
    q = 1.0 + x * x + y * y
    J = np.empty((X.shape[0], 2, 2))
    J[:, 0, 0] = q + 2 * x * x
    J[:, 0, 1] = 2 * x * y
    J[:, 1, 0] = 4 * x * y * q
    J[:, 1, 1] = q * q + 4 * y * y * q
    return J


def _ex1_det(X):
    x, y = X[:, 0], X[:, 1]
    q = 1.0 + x * x + y * y
    return q * q * (q + 2 * x * x + 4 * y * y)


def _ex2_forward(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    r2 = x * x + y * y + z * z
    q, w = 1.0 + r2, 2.0 + r2
    return np.column_stack((x * q, y * q * q, z * w**3))


def _ex2_jacobian(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    r2 = x * x + y * y + z * z
    q, w = 1.0 + r2, 2.0 + r2
    J = np.empty((X.shape[0], 3, 3))
    J[:, 0] = np.column_stack((q + 2 * x * x, 2 * x * y, 2 * x * z))
    J[:, 1] = np.column_stack((4 * x * y * q, q * q + 4 * y * y * q, 4 * y * z * q))
    J[:, 2] = np.column_stack((6 * x * z * w * w, 6 * y * z * w * w, w**3 + 6 * z * z * w * w))
    return J


def _ball_sdist(radius):
    return lambda X: np.linalg.norm(X, axis=1) - radius


def _ellipsoid_sdist(radius, scales):
    scales = np.asarray(scales, dtype=float)

    def sdist(X):
        S = X * scales
        n = np.linalg.norm(S, axis=1)
        grad = np.linalg.norm(S * scales, axis=1) / np.maximum(n, 1e-300)
        return (n - radius) / np.maximum(grad, 1.0)

    return sdist


def ball_region(radius, m):
    return Region(
        sdist=_ball_sdist(radius),
        bbox=(np.full(m, -radius), np.full(m, radius)),
        label=f"B_{radius}(0)",
        volume=unit_ball_volume(m) * radius**m,
        quad_weights=np.full(m, 1.0 / radius**2),
    )


def count_r_preimage_branches(pmap, n=4000, seed=0):
    """Number of branches whose image meets R (sampled)."""
    rng = np.random.default_rng(seed)
    lo, hi = (np.asarray(b, dtype=float) for b in pmap.box)
    pts = lo + (hi - lo) * rng.random((n * pmap.branch_count, pmap.dimension))
    count = 0
    for b in pmap.branches:
        P = pts[b.contains(pts) & pmap.in_domain(pts)]
        if len(P) and pmap.region.contains(b.forward(P)).any():
            count += 1
    # the germ branch always covers R
    return max(count, 1)


def _with_kprime(pmap):
    k = count_r_preimage_branches(pmap)
    object.__setattr__(pmap, "r_preimage_count", k)
    return pmap


def _surrogate_laps(fold, m, cut_sdist, extra=None, start=2, factory=None):
    branches = []
    idx = start
    for laps in np.ndindex(*([fold.k] * m)):
        if _lap_is_empty(fold, laps, cut_sdist, extra):
            continue
        branches.append((factory or _affine_lap_branch)(idx, fold, laps, cut_sdist))
        idx += 1
    return branches


def example1(spec: ExampleSpec = ExampleSpec(), tol: ToleranceConfig = ToleranceConfig()):
    """Planar germ ``(x(1+r^2), y(1+r^2)^2)`` on ``B_r0`` with folding completion."""
    if spec.example_id not in (1, 3):
        raise BadSpec("example1 needs example_id 1 (or 3, the same map)")
    if spec.radius_r0 > 0.5:
        raise BadSpec("r0 > 0.5 lets the germ leave [-1, 1]^2")
    r0, rR = spec.radius_r0, spec.radius_R
    germ = Branch(
        1,
        _ball_sdist(r0),
        _ex1_forward,
        _ex1_jacobian,
        det=_ex1_det,
        local_form=LocalForm(kernels.KIND_EXAMPLE1),
        label="germ",
    )
    fold = Fold(spec.surrogate_expansion)
    cut = _ball_sdist(r0)
    branches = [germ] + _surrogate_laps(fold, 2, cut)
    pmap = PiecewiseMap(
        dimension=2,
        branches=tuple(branches),
        neutral_point=np.zeros(2),
        region=ball_region(rR, 2),
        box=(np.full(2, -1.0), np.full(2, 1.0)),
        local_radius=r0,
        tol=tol,
        label=f"example{spec.example_id}",
    )
    return _with_kprime(pmap)


EX2_Z_SCALE = 8.0


def example2(spec: ExampleSpec = ExampleSpec(example_id=2), tol: ToleranceConfig = ToleranceConfig()):
    """Spatial germ with ``z(2+r^2)^3``.

    The germ owns the ellipsoid ``x^2 + y^2 + (8z)^2 < r0^2`` so that the
    strongly expanding third coordinate stays inside ``[-1, 1]^3``.
    """
    if spec.example_id != 2:
        raise BadSpec("example2 needs example_id 2")
    if spec.radius_r0 > 0.5:
        raise BadSpec("r0 > 0.5 lets the germ leave [-1, 1]^3")
    r0, rR = spec.radius_r0, spec.radius_R
    scales = (1.0, 1.0, EX2_Z_SCALE)
    cut = _ellipsoid_sdist(r0, scales)
    germ = Branch(
        1,
        cut,
        _ex2_forward,
        _ex2_jacobian,
        local_form=LocalForm(kernels.KIND_EXAMPLE2),
        label="germ",
    )
    fold = Fold(spec.surrogate_expansion)
    region = Region(
        sdist=_ellipsoid_sdist(rR, scales),
        bbox=(-rR / np.asarray(scales), rR / np.asarray(scales)),
        label=f"ellipsoid {rR}",
        volume=unit_ball_volume(3) * rR**3 / EX2_Z_SCALE,
        quad_weights=(np.asarray(scales) / rR) ** 2,
    )
    pmap = PiecewiseMap(
        dimension=3,
        branches=tuple([germ] + _surrogate_laps(fold, 3, cut)),
        neutral_point=np.zeros(3),
        region=region,
        box=(np.full(3, -1.0), np.full(3, 1.0)),
        local_radius=r0,
        tol=tol,
        label="example2",
    )
    return _with_kprime(pmap)


# ---------------------------------------------------------------------------
# parabola example: two invariant components
def _cusp_sdist(component):
    """Signed distance (first order) to ``{|y| = x^2}``; negative inside M_i."""

    def sdist(X):
        x, y = X[:, 0], X[:, 1]
        g = np.abs(y) - x * x
        if component == 2:
            g = -g
        return g / np.sqrt(1.0 + 4.0 * x * x)

    return sdist


class _Chart:
    """Coordinates flattening M_1 = {|y| < x^2} or M_2 = {|y| > x^2} onto [-1,1]^2."""

    def __init__(self, component):
        self.c = component

    def to(self, X):
        x, y = X[:, 0], X[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.c == 1:
                return np.column_stack((x, y / (x * x)))
            return np.column_stack((x / np.sqrt(np.abs(y)), y))

    def back(self, U):
        u, v = U[:, 0], U[:, 1]
        if self.c == 1:
            return np.column_stack((u, v * u * u))
        return np.column_stack((u * np.sqrt(np.abs(v)), v))

    def d_to(self, X):
        x, y = X[:, 0], X[:, 1]
        J = np.zeros((X.shape[0], 2, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.c == 1:
                J[:, 0, 0] = 1.0
                J[:, 1, 0] = -2.0 * y / x**3
                J[:, 1, 1] = 1.0 / (x * x)
            else:
                ay = np.abs(y)
                J[:, 0, 0] = 1.0 / np.sqrt(ay)
                J[:, 0, 1] = -0.5 * x * np.sign(y) / ay**1.5
                J[:, 1, 1] = 1.0
        return J

    def d_back(self, U):
        u, v = U[:, 0], U[:, 1]
        J = np.zeros((U.shape[0], 2, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.c == 1:
                J[:, 0, 0] = 1.0
                J[:, 1, 0] = 2.0 * v * u
                J[:, 1, 1] = u * u
            else:
                av = np.abs(v)
                J[:, 0, 0] = np.sqrt(av)
                J[:, 0, 1] = 0.5 * u * np.sign(v) / np.sqrt(av)
                J[:, 1, 1] = 1.0
        return J

    def cut_sdist(self, axis, value):
        """First-order signed distance to the chart line ``coord[axis] = value``
        (positive where coord > value)."""
        c = self.c

        def g(X):
            x, y = X[:, 0], X[:, 1]
            if axis == 0 and c == 1 or axis == 1 and c == 2:
                return X[:, axis] - value
            if c == 1:  # y / x^2 = value
                return (y - value * x * x) / np.sqrt(1.0 + 4.0 * value * value * x * x)
            ay = np.maximum(np.abs(y), 1e-300)  # x / sqrt|y| = value
            return (x - value * np.sqrt(ay)) / np.sqrt(1.0 + value * value / (4.0 * ay))

        return g


def _chart_lap_branch(index, fold, laps, cut_sdist, chart, comp_sdist):
    a, b = laps
    lo0, hi0 = fold.face_constraints(a)
    lo1, hi1 = fold.face_constraints(b)
    cons = []
    for axis, lo, hi in ((0, lo0, hi0), (1, lo1, hi1)):
        if lo is not None:
            g = chart.cut_sdist(axis, lo)
            cons.append(lambda X, g=g: -g(X))
        if hi is not None:
            cons.append(chart.cut_sdist(axis, hi))
    slopes = np.array([fold.slope(a), fold.slope(b)])

    def sdist(X):
        parts = [c(X) for c in cons] + [-cut_sdist(X), comp_sdist(X)]
        return np.max(np.stack(parts), axis=0)

    def forward(X):
        U = chart.to(X)
        V = np.column_stack((fold.apply(U[:, 0], a), fold.apply(U[:, 1], b)))
        return chart.back(V)

    def inverse(Y):
        V = chart.to(Y)
        U = np.column_stack((fold.invert(V[:, 0], a), fold.invert(V[:, 1], b)))
        return chart.back(U)

    def jacobian(X):
        U = chart.to(X)
        V = np.column_stack((fold.apply(U[:, 0], a), fold.apply(U[:, 1], b)))
        return chart.d_back(V) @ (slopes[:, None] * chart.d_to(X))

    return Branch(index, sdist, forward, jacobian, inverse=inverse, label=f"chart{laps}")


def _cusp_area(radius):
    """Area of ``{|y| < x^2, x^2 + y^2 < radius^2}``."""
    # parabola meets the circle at x_c^2 = (sqrt(1 + 4 r^2) - 1) / 2
    xc = math.sqrt((math.sqrt(1 + 4 * radius**2) - 1) / 2)
    inner = 2 * xc**3 / 3
    outer, _ = integrate.quad(lambda x: math.sqrt(radius**2 - x * x), xc, radius)
    return 4 * (inner + outer)


@dataclass(frozen=True, eq=False)
class ParabolaExample:
    """Two invariant components sharing the planar germ, split by ``|y| = x^2``."""

    components: dict
    spec: ExampleSpec

    def component_of(self, x):
        x = np.asarray(x, dtype=float).reshape(1, 2)
        g = float(np.abs(x[0, 1]) - x[0, 0] ** 2)
        if abs(g) < 1e-14:
            return "boundary"
        return 1 if g < 0 else 2

    def __getitem__(self, i):
        return self.components[i]


def example4(spec: ExampleSpec = ExampleSpec(example_id=4), tol: ToleranceConfig = ToleranceConfig()):
    """Planar germ with invariant components ``M_1 = {|y| < x^2}``, ``M_2 = {|y| > x^2}``.

    Each component is completed by folding in coordinates that flatten it
    onto ``[-1, 1]^2``, so ``T M_i = M_i`` holds globally.
    """
    if spec.example_id != 4:
        raise BadSpec("example4 needs example_id 4")
    if spec.radius_r0 > 0.5:
        raise BadSpec("r0 > 0.5 lets the germ leave [-1, 1]^2")
    r0, rR = spec.radius_r0, spec.radius_R
    fold = Fold(spec.surrogate_expansion)
    ball = _ball_sdist(r0)
    comps = {}
    for c in (1, 2):
        comp = _cusp_sdist(c)
        chart = _Chart(c)
        germ = Branch(
            1,
            lambda X, comp=comp: np.maximum(ball(X), comp(X)),
            _ex1_forward,
            _ex1_jacobian,
            det=_ex1_det,
            local_form=LocalForm(kernels.KIND_EXAMPLE1),
            label="germ",
        )
        laps = []
        idx = 2
        for ab in np.ndindex(fold.k, fold.k):
            br = _chart_lap_branch(idx, fold, ab, ball, chart, comp)
            grids = [np.linspace(fold.edges[t], fold.edges[t + 1], 40)[1:-1] for t in ab]
            U = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, 2)
            if not (ball(chart.back(U)) > 0).any():
                continue
            laps.append(br)
            idx += 1
        area1 = _cusp_area(rR)
        region = Region(
            sdist=lambda X, comp=comp: np.maximum(_ball_sdist(rR)(X), comp(X)),
            bbox=(np.full(2, -rR), np.full(2, rR)),
            label=f"B_{rR}(0) & M{c}",
            volume=area1 if c == 1 else math.pi * rR**2 - area1,
            quad_weights=np.full(2, 1.0 / rR**2),
        )
        pmap = PiecewiseMap(
            dimension=2,
            branches=tuple([germ] + laps),
            neutral_point=np.zeros(2),
            region=region,
            box=(np.full(2, -1.0), np.full(2, 1.0)),
            local_radius=r0,
            tol=tol,
            label=f"example4/M{c}",
            domain_sdist=comp,
        )
        comps[c] = _with_kprime(pmap)
    return ParabolaExample(comps, spec)


# ---------------------------------------------------------------------------
def neutral_1d(spec: ExampleSpec = ExampleSpec(example_id="neutral1d"), tol: ToleranceConfig = ToleranceConfig(),
               coeff: float = 1.0):
    """``t(1 + coeff t^gamma)`` on ``[0, r0)``, affine ``(t - r0)/(1 - r0)`` on ``[r0, 1]``.

    Without an explicit ``r0`` both branches are full, so the invariant
    density is positive on all of ``[R, 1]``.
    """
    if spec.example_id != "neutral1d":
        raise BadSpec("neutral_1d needs example_id 'neutral1d'")
    r0, rR, g = spec.radius_r0, spec.radius_R, spec.gamma
    if spec.r0 is None and coeff != 1.0:
        r0 = full_branch_radius(g, coeff)
    if not r0 < 1:
        raise BadSpec("r0 must be < 1")
    if r0 * (1 + coeff * r0**g) > 1 + 1e-12:
        raise BadSpec("germ image leaves [0, 1]")

    def germ_fwd(X):
        t = X[:, :1]
        return t * (1.0 + coeff * t**g)

    def germ_jac(X):
        t = X[:, 0]
        return (1.0 + coeff * (1.0 + g) * t**g)[:, None, None]

    slope = 1.0 / (1.0 - r0)
    germ = Branch(
        1,
        lambda X: X[:, 0] - r0,
        germ_fwd,
        germ_jac,
        det=lambda X: 1.0 + coeff * (1.0 + g) * X[:, 0] ** g,
        local_form=LocalForm(kernels.KIND_NEUTRAL_1D, g, coeff),
        label="germ",
    )
    affine = Branch(
        2,
        lambda X: r0 - X[:, 0],
        lambda X: (X - r0) * slope,
        lambda X: np.full((X.shape[0], 1, 1), slope),
        det=lambda X: np.full(X.shape[0], slope),
        inverse=lambda Y: r0 + Y / slope,
        label="affine",
    )
    region = Region(
        sdist=lambda X: X[:, 0] - rR,
        bbox=(np.zeros(1), np.full(1, rR)),
        label=f"[0, {rR})",
        volume=rR,
        quad_weights=np.array([1.0 / rR**2]),
    )
    pmap = PiecewiseMap(
        dimension=1,
        branches=(germ, affine),
        neutral_point=np.zeros(1),
        region=region,
        box=(np.zeros(1), np.ones(1)),
        local_radius=r0,
        tol=tol,
        label=f"neutral1d(gamma={g})",
    )
    return _with_kprime(pmap)


def fold_map(dimension=2, expansion=3, tol: ToleranceConfig = ToleranceConfig()):
    """Pure folding surrogate on ``[-1, 1]^m`` (Lebesgue-invariant, no neutral branch)."""
    fold = Fold(expansion)
    never = lambda X: np.full(X.shape[0], 1.0)  # noqa: E731
    branches = [
        _affine_lap_branch(i + 1, fold, laps, lambda X: np.full(X.shape[0], np.inf))
        for i, laps in enumerate(np.ndindex(*([fold.k] * dimension)))
    ]
    region = Region(sdist=never, bbox=(np.zeros(dimension), np.zeros(dimension)), label="empty",
                    volume=0.0)
    return PiecewiseMap(
        dimension=dimension,
        branches=tuple(branches),
        neutral_point=np.zeros(dimension),
        region=region,
        box=(np.full(dimension, -1.0), np.full(dimension, 1.0)),
        local_radius=0.0,
        r_preimage_count=0,
        tol=tol,
        label=f"fold{expansion}^{dimension}",
    )


def build_example(spec: ExampleSpec, tol: ToleranceConfig = ToleranceConfig()):
    if spec.example_id in (1, 3):
        return example1(spec, tol)
    if spec.example_id == 2:
        return example2(spec, tol)
    if spec.example_id == 4:
        return example4(spec, tol)
    return neutral_1d(spec, tol)
