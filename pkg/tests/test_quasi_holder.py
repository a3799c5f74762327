import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acimtools import quasi_holder as qh
from acimtools import transfer
from acimtools.errors import DegenerateFamily, EpsGridEmpty, EpsTooSmall, ValidationError
from acimtools.transfer import GridDensity

PART = transfer.build_partition((np.zeros(2), np.ones(2)), 64)
CFG = qh.QuasiHolderConfig(alpha=0.5, eps0=0.1, k_max=4)


def _field(seed, smooth=2.0):
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    v = ndimage.gaussian_filter(rng.random(PART.shape), smooth, mode="wrap") * 4
    return GridDensity(v.reshape(-1), PART)


fields = st.integers(0, 10_000).map(_field)


def test_constant_has_zero_seminorm():
    f = GridDensity(np.full(PART.n_cells, 3.0), PART)
    assert qh.seminorm_alpha(f, CFG) == 0.0
    assert qh.norm_alpha(f, CFG) == pytest.approx(3.0)


def test_half_plane_indicator():
    # oscillation is 1 on the strip of half-width eps around the line: int = 2 eps
    part = transfer.build_partition((np.zeros(2), np.ones(2)), 512)
    x = part.centers()[:, 0]
    f = GridDensity((x > 0.5).astype(float), part)
    cfg = qh.QuasiHolderConfig(alpha=0.5, eps0=0.1, k_max=3)
    assert qh.seminorm_alpha(f, cfg) == pytest.approx(2 * np.sqrt(0.1), rel=0.01)


def test_eps_too_small():
    with pytest.raises(EpsTooSmall):
        qh.oscillation(_field(0), 0.01)


def test_eps_grid_empty():
    with pytest.raises(EpsGridEmpty):
        qh.QuasiHolderConfig(eps0=0.01).eps_grid(PART)


@pytest.mark.parametrize("kw", [{"alpha": 1.0}, {"alpha": 0.0}, {"eps0": 0.0}, {"k_max": -1}])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        qh.QuasiHolderConfig(**kw)


@given(fields, st.floats(-5, 5))
def test_homogeneity(f, c):
    g = GridDensity(c * f.values, PART)
    assert qh.seminorm_alpha(g, CFG) == pytest.approx(abs(c) * qh.seminorm_alpha(f, CFG), rel=1e-9, abs=1e-12)


@given(fields, fields)
def test_subadditivity(f, g):
    s = GridDensity(f.values + g.values, PART)
    assert qh.seminorm_alpha(s, CFG) <= qh.seminorm_alpha(f, CFG) + qh.seminorm_alpha(g, CFG) + 1e-9


@given(fields, fields)
def test_product_bound_nonnegative(f, g):
    fg = GridDensity(f.values * g.values, PART)
    bound = qh.seminorm_alpha(f, CFG) * g.values.max() + qh.seminorm_alpha(g, CFG) * f.values.max()
    assert qh.seminorm_alpha(fg, CFG) <= bound + 1e-9


@given(fields)
def test_monotone_in_eps0(f):
    small = qh.QuasiHolderConfig(eps0=0.1, k_max=4)
    big = qh.QuasiHolderConfig(eps0=0.2, k_max=5)
    assert qh.seminorm_alpha(f, big) >= qh.seminorm_alpha(f, small) - 1e-12


@given(fields)
def test_sup_norm_bound(f):
    assert np.nanmax(np.abs(f.values)) <= qh.sup_norm_bound(f, CFG) + 1e-9


def test_oscillation_nonnegative():
    o = qh.oscillation(_field(3), 0.05)
    assert np.nanmin(o.values) >= 0


def test_fit_ly_constants_family():
    rows = [(0.0, 1.0, 0.0), (0.0, 2.0, 0.0)]
    assert qh.fit_ly(rows) == (0.0, 0.0)


def test_fit_ly_feasible():
    rng = np.random.default_rng(0)
    rows = [(a, b, 0.4 * a + 2 * b) for a, b in rng.random((20, 2)) + 0.1]
    eta, D = qh.fit_ly(rows)
    for a, b, c in rows:
        assert c <= eta * a + D * b + 1e-9
    assert D / (1 - eta) <= 2 / (1 - 0.4) + 1e-6


def test_fit_ly_degenerate():
    with pytest.raises(DegenerateFamily):
        qh.fit_ly([(1.0, 0.0, 1.0), (1.0, 1.0, 0.5)])


def test_ly_estimate_fold_constants(fold2):
    part = transfer.build_partition(fold2, 36)
    M = transfer.build_transfer(fold2, part, 36, seed=0)
    fam = [GridDensity(np.full(part.n_cells, c), part) for c in (0.5, 1.0, 2.0)]
    rep = qh.ly_estimate(M, fam, qh.QuasiHolderConfig(eps0=0.2, k_max=2))
    assert rep.eta_hat == 0.0
    assert rep.D_hat == pytest.approx(0.0, abs=1e-9)
    doc = json.loads(rep.to_json())
    assert len(doc["rows"]) == 3


def test_ly_estimate_fold_contracts(fold2):
    # the 3-fold contracts the seminorm roughly by 3^(alpha - 1) per step
    part = transfer.build_partition(fold2, 36)
    M = transfer.build_transfer(fold2, part, 36, seed=0)
    rep = qh.ly_estimate(M, config=qh.QuasiHolderConfig(eps0=0.25, k_max=2))
    assert 0.0 <= rep.eta_hat < 1.0
    f_a, f_l1 = rep.rows[0][0], rep.rows[0][1]
    assert rep.iterate_bound(f_a, f_l1) >= rep.rows[0][2]
