import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acimtools.errors import BadSpec
from acimtools.example_maps import (
    ExampleSpec,
    build_example,
    example4,
    fold_map,
    full_branch_radius,
    unit_ball_volume,
)


def test_full_branch_radius():
    r = full_branch_radius(2.0)
    assert r * (1 + r**2) == pytest.approx(1.0, abs=1e-14)
    assert r == pytest.approx(0.6823278, abs=1e-7)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(np.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * np.pi / 3)


@pytest.mark.parametrize("bad", [
    {"example_id": 7},
    {"r0": -0.1},
    {"gamma": 0.0},
    {"region_radius": 0.6},
    {"surrogate_expansion": 2.5},
    {"surrogate_expansion": 1},
])
def test_spec_validation(bad):
    with pytest.raises(BadSpec):
        ExampleSpec(**bad)


def test_spec_unknown_field():
    with pytest.raises(BadSpec):
        ExampleSpec.from_dict({"example_id": 1, "colour": "red"})


def test_spec_json_roundtrip():
    s = ExampleSpec(example_id=2, r0=0.5, region_radius=0.2)
    assert ExampleSpec.from_json(json.dumps(s.to_dict())) == s


def test_branch_counts(ex1, ex2):
    assert ex1.branch_count == 9
    assert ex2.branch_count == 28
    assert 1 <= ex1.r_preimage_count <= ex1.branch_count


def test_neutral_1d_values(neutral):
    assert neutral.evaluate([0.2]) == pytest.approx([0.208])
    assert neutral.jacobian_det([0.2]) == pytest.approx(1.12)
    assert neutral.r_preimage_count == 2


def test_neutral_1d_full_branches(neutral):
    r0 = neutral.local_radius
    assert neutral.branches[0].forward(np.array([[r0 - 1e-12]]))[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert neutral.evaluate([1.0]) == pytest.approx([1.0])


def test_example3_matches_example1():
    a = build_example(ExampleSpec(example_id=3))
    b = build_example(ExampleSpec(example_id=1))
    x = np.array([0.13, -0.07])
    assert np.allclose(a.evaluate(x), b.evaluate(x))


def test_example4_components_invariant(rng):
    ex = example4()
    for c in (1, 2):
        m = ex[c]
        X = rng.uniform(-1, 1, size=(4000, 2))
        X = X[m.in_domain(X)]
        idx = m.locate(X)
        X = X[idx >= 0]
        Y, _ = m.apply(X)
        assert m.in_domain(Y).mean() == 1.0


def test_example4_component_of():
    ex = example4()
    assert ex.component_of([0.5, 0.1]) == 1
    assert ex.component_of([0.1, 0.5]) == 2
    assert ex.component_of([0.5, 0.25]) == "boundary"


def test_maps_stay_in_box(ex1, ex2, rng):
    for m in (ex1, ex2):
        X = rng.uniform(-1, 1, size=(5000, m.dimension))
        idx = m.locate(X)
        Y, _ = m.apply(X[idx >= 0])
        assert np.all(np.abs(Y) <= 1 + 1e-12)


def test_fold_map_preserves_lebesgue(fold2, rng):
    # every point has exactly k^m preimages, each with |det| = k^m
    X = rng.uniform(-1, 1, size=(200_000, 2))
    idx = fold2.locate(X)
    Y, _ = fold2.apply(X[idx >= 0])
    H, _, _ = np.histogram2d(Y[:, 0], Y[:, 1], bins=4, range=[[-1, 1], [-1, 1]])
    assert np.allclose(H / H.mean(), 1.0, atol=0.03)


@given(st.floats(-0.45, 0.45), st.floats(-0.45, 0.45))
def test_germ_is_radially_expanding(a, b):
    x = np.array([a, b])
    r = np.linalg.norm(x)
    if r == 0 or r >= 0.5:
        return
    y = _EX1.branches[0].forward(x[None, :])[0]
    assert np.linalg.norm(y) >= r


_EX1 = build_example(ExampleSpec())


def test_fold_branch_count():
    assert fold_map(2, 3).branch_count == 9
    assert fold_map(1, 2).branch_count == 2
