import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from acimtools.errors import DegenerateProbe, NoRoot, NotMonotone, OutOfDomain, PointOnBoundary, ValidationError
from acimtools.map_model import ToleranceConfig, bisect, contraction_coefficient, local_inverse


def test_neutral_point_is_fixed(ex1):
    assert np.allclose(ex1.evaluate([0.0, 0.0]), 0.0)


def test_ex1_axis_value(ex1):
    assert np.allclose(ex1.evaluate([0.1, 0.0]), [0.101, 0.0], atol=1e-15)


def test_ex1_diagonal_value(ex1):
    # r^2 = 0.02: first coordinate 0.1 * 1.02, second 0.1 * 1.02^2
    assert np.allclose(ex1.evaluate([0.1, 0.1]), [0.102, 0.10404], atol=1e-15)


def test_ex1_det_identity_at_origin(ex1):
    assert ex1.jacobian_det([0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)


def test_ex1_det_on_axis(ex1):
    # exact partials (1 + 3x^2)(1 + x^2)^2 at x = 0.1
    assert ex1.jacobian_det([0.1, 0.0]) == pytest.approx(1.03 * 1.01**2, abs=1e-12)
    assert ex1.jacobian_det([0.1, 0.0]) == pytest.approx(1.050703, abs=1e-6)


def test_ex2_det_at_origin(ex2):
    assert ex2.jacobian_det([0.0, 0.0, 0.0]) == pytest.approx(8.0, abs=1e-12)


def test_jacobian_matches_finite_differences(ex1, rng):
    h = 1e-6
    for x in rng.uniform(-0.3, 0.3, size=(20, 2)):
        J = ex1.jacobian(x)
        fd = np.column_stack([(ex1.evaluate(x + h * e) - ex1.evaluate(x - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.allclose(J, fd, atol=1e-7)
        assert ex1.jacobian_det(x) == pytest.approx(np.linalg.det(J), rel=1e-10)


def test_branch_index_germ(ex1):
    assert ex1.branch_index([0.0, 0.0]) == 1
    assert ex1.branch_index([0.05, -0.02]) == 1


def test_branch_index_boundary(ex1):
    r0 = ex1.local_radius
    with pytest.raises(PointOnBoundary):
        ex1.branch_index([r0, 0.0])


def test_out_of_domain(ex1):
    with pytest.raises(OutOfDomain):
        ex1.evaluate([1.5, 0.0])


def test_local_inverse_axis(ex1):
    x = local_inverse(ex1, 1, [0.101, 0.0], bracket=(0.0, 0.101))
    assert np.allclose(x, [0.1, 0.0], atol=1e-13)


def test_local_inverse_fixed_point(ex1):
    assert np.allclose(local_inverse(ex1, 1, [0.0, 0.0]), 0.0)


def test_local_inverse_y_axis(ex1):
    y = 0.1 * (1.01) ** 2
    x = local_inverse(ex1, 1, [0.0, y])
    assert np.allclose(x, [0.0, 0.1], atol=1e-13)


def test_local_inverse_no_root(ex1):
    with pytest.raises(NoRoot):
        local_inverse(ex1, 1, [0.101, 0.0], bracket=(0.2, 0.3))


def test_local_inverse_not_monotone():
    from acimtools.example_maps import ExampleSpec, neutral_1d

    # t(1 - t^2) turns over at 1/sqrt(3)
    m = neutral_1d(ExampleSpec(example_id="neutral1d", r0=0.5), coeff=-1.0)
    with pytest.raises(NotMonotone):
        local_inverse(m, 1, [0.005], bracket=(0.0, 0.99))


@given(st.floats(-0.35, 0.35), st.floats(-0.35, 0.35))
def test_local_inverse_roundtrip(a, b):
    m = _EX1
    x = np.array([a, b])
    if np.linalg.norm(x) >= 0.45:
        return
    y = m.evaluate(x)
    back = local_inverse(m, 1, y)
    assert np.allclose(back, x, atol=1e-12 * (1 + np.linalg.norm(y)))


def _build_ex1():
    from acimtools.example_maps import example1

    return example1()


_EX1 = _build_ex1()


def test_contraction_ex1(ex1):
    s = contraction_coefficient(ex1, [0.1, 0.0], 0.005, 512, seed=1)
    assert 0.9 < s < 1.0


def test_contraction_affine(fold2):
    s = contraction_coefficient(fold2, [0.5, 0.55], 0.01, 256, seed=2)
    assert s == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_contraction_degenerate(ex1):
    with pytest.raises(DegenerateProbe):
        contraction_coefficient(ex1, [0.0, 0.0], 0.01)


def test_bisect_oracle():
    f = lambda x: x * (1 + x * x) - 0.101  # noqa: E731
    assert bisect(f, 0.0, 0.101) == pytest.approx(optimize.brentq(f, 0, 0.101, xtol=1e-16), abs=1e-15)


@pytest.mark.parametrize("kw", [{"root_tol": 0.0}, {"root_tol": 1e-3}, {"audit_radius_grid": (0.1, 0.2)},
                                {"n_max_orbit": 0}])
def test_tolerance_validation(kw):
    with pytest.raises(ValidationError):
        ToleranceConfig(**kw)
