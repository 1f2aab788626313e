import numpy as np
import pytest

from clustermg import (ClusterAssignment, FeatureMatrix, MethodSpec, LevelSpec, RidgeOperator,
                       build_adjusted_average, build_plain_average, compare_methods,
                       effective_spectral_radius, iteration_matrix, make_ideal_dataset,
                       random_ideal_dataset)
from clustermg.analysis import CSV_COLUMNS
from clustermg.coarsening import DenseCapExceeded
from conftest import random_matrix


def test_iteration_matrix_formula(rng):
    X = random_matrix(rng, 15, 12)
    P = build_adjusted_average(ClusterAssignment(np.arange(12) % 5))
    beta, omega = 1e-2, 0.05
    A = X.toarray().T @ X.toarray() + beta * np.eye(12)
    Pd = P.toarray()
    ref = (np.eye(12) - omega * A) @ (np.eye(12) - Pd @ np.linalg.solve(Pd.T @ A @ Pd, Pd.T @ A))
    np.testing.assert_allclose(iteration_matrix(X, beta, P, omega), ref, atol=1e-10)


def test_own_cluster_rho_is_zero(rng):
    X = random_matrix(rng, 10, 8)
    rep = effective_spectral_radius(X, 1e-6, build_adjusted_average(ClusterAssignment.singletons(8)))
    assert rep.rho_eff == 0.0
    assert rep.f_c == 8 and rep.fine_dim == 8


def test_ideal_rho_is_tiny(rng):
    for _ in range(5):
        ds = random_ideal_dataset(rng, 30, 6)
        rep = effective_spectral_radius(ds.matrix, 1e-2, build_adjusted_average(ds.assignment))
        assert rep.rho_eff <= 1e-8


def test_rho_is_fc_th_smallest(rng):
    X = random_matrix(rng, 12, 10)
    P = build_plain_average(ClusterAssignment(np.arange(10) % 3))
    rep = effective_spectral_radius(X, 0.1, P, omega=0.01)
    mags = np.sort(np.abs(np.linalg.eigvals(iteration_matrix(X, 0.1, P, 0.01))))
    assert rep.rho_eff == pytest.approx(mags[2], abs=1e-12)
    assert np.all(np.diff(rep.eigenvalue_magnitudes) >= 0)


def test_rho_dense_cap(monkeypatch, rng):
    monkeypatch.setenv("CLUSTERMG_DENSE_CAP", "4")
    X = random_matrix(rng, 6, 5)
    with pytest.raises(DenseCapExceeded):
        effective_spectral_radius(X, 1.0, build_adjusted_average(ClusterAssignment(np.arange(5) % 2)))


def test_rho_singular_coarse():
    X = FeatureMatrix.from_dense(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    P = build_adjusted_average(ClusterAssignment(np.array([0, 0, 1])))
    with pytest.raises(np.linalg.LinAlgError):
        iteration_matrix(X, 0.0, P, 0.5)


def test_make_ideal_dataset_assignment():
    base = FeatureMatrix.from_dense(np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]]))
    ds = make_ideal_dataset(base, [2, 1, 3], seed=4)
    D = ds.matrix.toarray()
    a = ds.assignment
    assert D.shape == (2, 6)
    for s in range(3):
        cols = D[:, a.membership == s]
        assert np.all(cols == cols[:, :1])
        assert a.prototype_index[s] == np.flatnonzero(a.membership == s)[0]
    assert sorted(a.sizes) == [1, 2, 3]
    with pytest.raises(ValueError):
        make_ideal_dataset(base, [1, 0, 1])


def test_compare_single_cg_cell(rng):
    X = random_matrix(rng, 20, 10)
    rows = compare_methods(X, rng.standard_normal(20), [1e-2], [1e-6], ["cg"], n_repeats=2)
    assert len(rows) == 1
    assert rows[0].speedup == 1.0
    assert len(rows[0].as_csv()) == len(CSV_COLUMNS)


def test_compare_grid_and_determinism(rng):
    X = random_matrix(rng, 30, 40, density=0.3)
    b = rng.standard_normal(30)
    specs = [MethodSpec("jacobi_cg"),
             MethodSpec("fcg_twolevel", (LevelSpec(clustering="km", n_clusters=10, seed=2),), "fcg_km10")]
    r1 = compare_methods(X, b, [1e-4, 1e-1], [1e-6], specs, n_repeats=2, seed=5)
    r2 = compare_methods(X, b, [1e-4, 1e-1], [1e-6], specs, n_repeats=2, seed=5, threads=3)
    assert len(r1) == 2 * 3
    assert [r.method for r in r1] == ["cg", "jacobi_cg", "fcg_km10"] * 2
    assert [r.iterations for r in r1] == [r.iterations for r in r2]
    assert all(r.speedup > 0 for r in r1)
    assert r1[2].F_C == "10" and r1[2].clustering == "km"


def test_compare_validation(rng):
    X = random_matrix(rng, 5, 4)
    with pytest.raises(ValueError):
        compare_methods(X, np.ones(5), [1.0], [1e-6], [])
    with pytest.raises(ValueError):
        compare_methods(X, np.ones(5), [], [1e-6], ["cg"])


def test_lpsc105_rho_numerically_zero(lpsc105):
    from clustermg import leader_follower_for_size
    a = leader_follower_for_size(lpsc105, 56)
    assert effective_spectral_radius(lpsc105, 1e-6, build_adjusted_average(a)).rho_eff <= 1e-10
