import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acimtools import induction
from acimtools.errors import EmptyWindow, NonPositiveTail, NotInRegion, Overflow, ValidationError
from acimtools.induction import TailProfile


def _direct_escape(t, g=2.0, R=0.25):
    n = 0
    while True:
        t = t * (1 + t**g)
        n += 1
        if t >= R:
            return n, t


def test_escape_time_oracle(neutral):
    assert induction.escape_time(neutral, [0.2]) == _direct_escape(0.2)[0] == 5


def test_escape_not_in_region(neutral):
    with pytest.raises(NotInRegion):
        induction.escape_time(neutral, [0.5])


def test_escape_overflow(neutral):
    with pytest.raises(Overflow):
        induction.escape_time(neutral, [1e-3], n_max=10)


def test_first_return_time(neutral):
    # 0.6 lies on the germ branch and lands at 0.816 outside R: one step
    s = induction.first_return(neutral, [0.6])
    assert s.return_time == 1
    # affine branch sends 0.7 deep into R, then escape takes over
    s = induction.first_return(neutral, [0.7])
    y = (0.7 - neutral.local_radius) / (1 - neutral.local_radius)
    n, z = _direct_escape(y)
    assert s.return_time == 1 + n
    assert s.point[0] == pytest.approx(z, rel=1e-13)


def test_first_return_weight_is_product(neutral):
    x = 0.7
    r0 = neutral.local_radius
    y = (x - r0) / (1 - r0)
    w = 1 - r0
    while y < 0.25:
        w /= 1 + 3 * y * y
        y = y * (1 + y * y)
    s = induction.first_return(neutral, [x])
    assert s.weight == pytest.approx(w, rel=1e-10)


def test_first_return_rejects_region_start(neutral):
    with pytest.raises(NotInRegion):
        induction.first_return(neutral, [0.1])


@given(st.floats(0.01, 0.2499))
def test_escape_recursion(t):
    # escape(x) = 1 + escape(Tx) while Tx stays in R
    m = _NEUTRAL
    n = induction.escape_time(m, [t])
    tx = t * (1 + t * t)
    if tx < 0.25:
        assert n == 1 + induction.escape_time(m, [tx])
    else:
        assert n == 1


def _neutral():
    from acimtools.example_maps import neutral_1d

    return neutral_1d()


_NEUTRAL = _neutral()


def test_synthetic_tail_exponents():
    n = np.arange(1, 2001, dtype=float)
    for rho in (1.0, 1.5, 0.5):
        p = TailProfile.from_tails(n**-rho)
        r, se = induction.tail_exponent(p, (10, 1000))
        assert r == pytest.approx(rho, abs=1e-10)


def test_tail_exponent_errors():
    p = TailProfile.from_tails(np.r_[np.ones(10), np.zeros(10)])
    with pytest.raises(EmptyWindow):
        induction.tail_exponent(p, (5, 5))
    with pytest.raises(NonPositiveTail):
        induction.tail_exponent(p, (5, 15))


@given(st.lists(st.floats(0, 1), min_size=2, max_size=40), st.floats(0, 1))
def test_tails_are_monotone(levels, residual):
    p = TailProfile.from_levels(levels, residual)
    assert np.all(np.diff(p.tail_volumes) <= 1e-12)
    assert p.tail_volumes[-1] == pytest.approx(residual)
    assert p.tail_volumes[0] == pytest.approx(sum(levels[1:]) + residual)


def test_csv_roundtrip():
    p = TailProfile.from_levels([0.1, 0.2, 0.3], 0.05, stderr=[0.01, 0.02, 0.03])
    text = "# config_sha256=abc seed=1\n" + p.to_csv()
    q = TailProfile.from_csv(text)
    assert np.array_equal(q.level_volumes, p.level_volumes)
    assert np.array_equal(q.tail_volumes, p.tail_volumes)


def test_level_volumes_total_and_determinism(neutral):
    a = induction.level_volumes(neutral, n_max=500, n_samples=20_000, seed=3, block_size=4096)
    b = induction.level_volumes(neutral, n_max=500, n_samples=20_000, seed=3, block_size=4096)
    assert np.array_equal(a.level_volumes, b.level_volumes)
    assert a.level_volumes.sum() + a.residual == pytest.approx(0.25, rel=1e-12)


def test_level_volumes_match_exact_levels(neutral):
    # escape level n is an interval [x_{n}, x_{n-1}) of backward iterates of 0.25
    from scipy import optimize

    pts = [0.25]
    for _ in range(40):
        y = pts[-1]
        pts.append(optimize.brentq(lambda t: t * (1 + t * t) - y, 0, y, xtol=1e-16))
    exact = -np.diff(pts)
    p = induction.level_volumes(neutral, n_max=40, n_samples=200_000, seed=0)
    se = p.stderr[:40]
    assert np.all(np.abs(p.level_volumes[:40] - exact) <= 5 * se + 1e-12)


def test_level_volumes_sample_floor(neutral):
    with pytest.raises(ValidationError):
        induction.level_volumes(neutral, n_samples=100)


def test_ex1_tail_exponent(ex1):
    p = induction.level_volumes(ex1, n_max=1000, n_samples=100_000, seed=0)
    rho, _ = induction.tail_exponent(p, (100, 1000))
    assert rho == pytest.approx(1.0, abs=0.1)
