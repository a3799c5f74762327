import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from acimtools import transfer
from acimtools.errors import BadResolution, InsufficientFit, NoConvergence, PartitionMismatch, ValidationError
from acimtools.induction import TailProfile
from acimtools.transfer import GridDensity


def test_partition_cell_count(ex1):
    part = transfer.build_partition(ex1, 64)
    assert part.n_cells == 4096
    assert part.active.sum() < 4096
    assert np.all(part.category[part.cell_of(np.array([[0.0, 0.0]]))] != transfer.ACTIVE)


def test_partition_bad_resolution(ex1):
    with pytest.raises(BadResolution):
        transfer.build_partition(ex1, 4)


def test_partition_box_all_active():
    part = transfer.build_partition((np.zeros(2), np.ones(2)), 8)
    assert part.active.all()


def test_cell_of_outside():
    part = transfer.build_partition((np.zeros(1), np.ones(1)), 10)
    assert part.cell_of(np.array([[0.05], [0.95], [1.5], [-0.1]])).tolist() == [0, 9, -1, -1]


@pytest.fixture(scope="module")
def fold_matrix(fold2):
    part = transfer.build_partition(fold2, 36)
    return transfer.build_transfer(fold2, part, samples_per_cell=36, seed=0)


def test_rows_stochastic(fold_matrix):
    rs = np.asarray(fold_matrix.P.sum(axis=1)).ravel()
    assert np.allclose(rs, 1.0, atol=1e-12)


def test_fold_uniform_density(fold_matrix):
    # aligned strata: each row spreads mass 1/9 onto nine cells exactly
    h = transfer.invariant_density(fold_matrix)
    vals = h.on_active()
    assert np.allclose(vals, vals.mean(), rtol=1e-8)
    assert h.mass == pytest.approx(1.0, rel=1e-12)


def test_fold_pf_fixes_constant(fold_matrix):
    part = fold_matrix.partition
    one = GridDensity.from_active(part, np.full(part.active.sum(), 0.25))
    out = transfer.apply_pf(fold_matrix, one)
    assert np.allclose(out.on_active(), 0.25, atol=1e-12)


def test_transfer_determinism(neutral):
    part = transfer.build_partition(neutral, 64)
    a = transfer.build_transfer(neutral, part, 32, seed=4)
    b = transfer.build_transfer(neutral, part, 32, seed=4)
    assert (a.P != b.P).nnz == 0
    assert json.loads(json.dumps(a.header()))["seed"] == 4


def test_samples_floor(neutral):
    part = transfer.build_partition(neutral, 64)
    with pytest.raises(ValidationError):
        transfer.build_transfer(neutral, part, 8)


def test_invariant_density_permutation():
    P = sparse.csr_matrix(np.eye(4)[[1, 2, 3, 0]])
    h = transfer.invariant_density(P)
    assert np.allclose(h.values, 0.25)


def test_invariant_density_identity_start():
    start = np.array([0.1, 0.2, 0.3, 0.4])
    h = transfer.invariant_density(sparse.identity(4, format="csr"), start=start)
    assert np.allclose(h.values, start)


def test_invariant_density_no_convergence():
    P = sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(NoConvergence) as err:
        transfer.invariant_density(P, start=[1.0, 0.0], max_iter=50)
    assert err.value.last is not None


def test_invariant_density_rejects_non_stochastic():
    with pytest.raises(ValidationError):
        transfer.invariant_density(sparse.csr_matrix(np.array([[0.5, 0.2], [0.0, 1.0]])))


@given(st.integers(2, 12), st.integers(0, 10_000))
def test_pf_preserves_integral(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.random((n, n)) * (rng.random((n, n)) < 0.5) + np.eye(n) * 1e-3
    P = sparse.csr_matrix(A / A.sum(axis=1, keepdims=True))
    f = GridDensity(rng.random(n))
    g = transfer.apply_pf(P, f)
    assert g.values.sum() == pytest.approx(f.values.sum(), rel=1e-12)
    assert np.all(g.values >= 0)


def test_pf_partition_mismatch(fold_matrix):
    other = transfer.build_partition((np.zeros(2), np.ones(2)), 36)
    with pytest.raises(PartitionMismatch):
        transfer.apply_pf(fold_matrix, GridDensity(np.ones(other.n_cells), other))


def test_classify_synthetic():
    n = np.arange(1, 2001, dtype=float)
    assert transfer.classify_measure(TailProfile.from_tails(n**-1.0)).verdict == "Indeterminate"
    assert transfer.classify_measure(TailProfile.from_tails(n**-1.5)).verdict == "Finite"
    assert transfer.classify_measure(TailProfile.from_tails(n**-0.5)).verdict == "SigmaFinite"


def test_classify_finite_mass_bound():
    n = np.arange(1, 2001, dtype=float)
    c = transfer.classify_measure(TailProfile.from_tails(n**-2.0), k_prime=3)
    assert c.extended_mass_bound == pytest.approx(2 * np.sum(n**-2.0))


def test_classify_insufficient_fit():
    rng = np.random.default_rng(0)
    n = np.arange(1, 201, dtype=float)
    noisy = n**-1.0 * np.exp(rng.normal(0, 3, n.size))
    with pytest.raises(InsufficientFit):
        transfer.classify_measure(TailProfile.from_tails(noisy), fit_window=(20, 40))


@pytest.fixture(scope="module")
def neutral_density(neutral_half):
    part = transfer.build_partition(neutral_half, 128)
    M = transfer.build_transfer(neutral_half, part, 128, seed=0)
    return neutral_half, transfer.invariant_density(M)


def test_neutral_density_positive(neutral_density):
    _, h = neutral_density
    assert h.on_active().min() > 0.1
    assert h.mass == pytest.approx(1.0)


def test_neutral_density_vs_orbit(neutral_density):
    m, h = neutral_density
    ref = transfer.orbit_histogram_density(m, h.partition, n_steps=2 * 10**6)
    assert h.l1_distance(ref) < 0.1


def test_extension_grows_toward_neutral_point(neutral_density):
    m, h = neutral_density
    ext = transfer.extend_density(m, h, n_levels=10_000)
    part = h.partition
    inR = part.category == transfer.IN_REGION
    vals = ext.values[inR]
    ok = np.isfinite(vals)
    assert ok.sum() > 0.8 * inR.sum()
    # partial masses over [t, R) increase as t decreases
    partial = np.cumsum(vals[ok][::-1])
    assert np.all(np.diff(partial) >= 0)
    assert vals[ok][0] > vals[ok][-1]
