import logging

import numpy as np
import numpy.testing as npt
import pytest

from lpvred.lpv import (
    AffineLpvModel,
    BlockLayout,
    FullOrderReduction,
    VariationDataset,
    ab_entry_indices,
    build_variation_dataset,
    full_order_lpv,
    unvec_gamma,
    vec_gamma,
)
from lpvred.models import DimensionError, FactorizedModel

from conftest import region_samples


def test_vec_one_by_one_zero_blocks():
    z = np.zeros((1, 1))
    g = vec_gamma(z, z, z, z, z, z)
    npt.assert_array_equal(g, np.zeros(6))


def test_vec_column_major_order():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    npt.assert_array_equal(vec_gamma(A), [1.0, 3.0, 2.0, 4.0])


def test_vec_unvec_round_trip():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((3, 3))
    Bu = rng.standard_normal((3, 2))
    Bw = rng.standard_normal((3, 1))
    C = np.eye(3)
    Du = np.zeros((3, 2))
    Dw = np.zeros((3, 1))
    g = vec_gamma(A, Bu, Bw, C, Du, Dw)
    M = unvec_gamma(g, n_x=3, n_u=2, n_w=1, n_y=3)
    npt.assert_array_equal(M[:3, :3], A)
    npt.assert_array_equal(M[:3, 3:5], Bu)
    npt.assert_array_equal(M[:3, 5:], Bw)
    npt.assert_array_equal(M[3:, :3], C)


def test_layout_batched_vec_round_trip():
    layout = BlockLayout(3, 2, 1, 3, mode="full")
    rng = np.random.default_rng(5)
    M = rng.standard_normal((7, layout.rows, layout.cols))
    npt.assert_array_equal(layout.unvec(layout.vec(M)), M)


def test_vec_position_matches_indicator():
    layout = BlockLayout(3, 2, 0, 0, mode="ab")
    for block, r, c in [("A", 1, 0), ("A", 2, 2), ("Bu", 0, 1)]:
        M = np.zeros((layout.rows, layout.cols))
        r0, c0 = layout.block_offset(block)
        M[r0 + r, c0 + c] = 1.0
        pos = layout.vec_position(block, r, c)
        assert layout.vec(M)[pos] == 1.0
        assert layout.vec(M).sum() == 1.0


def test_constant_model_variation_is_constant():
    model = FactorizedModel(
        name="const", n_x=2, n_u=1, n_w=0,
        const_A=[[0.0, 1.0], [-2.0, -0.5]], const_Bu=[[0.0], [1.0]], const_Bw=np.zeros((2, 0)),
        entries=[], x_bounds=[[-1, 1]] * 2, u_bounds=[[-1, 1]], w_bounds=np.zeros((0, 2)),
    )
    from lpvred.simulate import ConstantSignal, Scenario, generate_dataset

    ds = generate_dataset(model, [Scenario(np.array([0.5, 0.0]), ConstantSignal([0.1]))],
                          h=0.01, T=2.0, n_samples=100, seed=1)
    vd = build_variation_dataset(model, ds)
    assert vd.varying_rows().sum() == 0
    centered = vd.Pi - vd.Pi.mean(axis=1, keepdims=True)
    npt.assert_allclose(centered, 0.0, atol=1e-15)


def test_variation_counts_exposed(parafoil, parafoil_dataset_small):
    vd = build_variation_dataset(parafoil, parafoil_dataset_small)
    assert vd.n_pi == 12 * 14  # full vectorized size
    assert vd.varying_rows().sum() == len(ab_entry_indices(parafoil))
    assert vd.n_samples == len(parafoil_dataset_small)


def test_affinity_of_lpv_evaluation(benchmark):
    lpv = full_order_lpv(benchmark)
    rng = np.random.default_rng(6)
    x = rng.standard_normal(3)
    u = rng.standard_normal(1)
    t1, t2 = rng.standard_normal((2, lpv.n_theta))
    for alpha in (-0.3, 0.0, 0.4, 1.0, 1.7):
        blend, _ = lpv.evaluate(alpha * t1 + (1 - alpha) * t2, x, u)
        f1, _ = lpv.evaluate(t1, x, u)
        f2, _ = lpv.evaluate(t2, x, u)
        npt.assert_allclose(blend, alpha * f1 + (1 - alpha) * f2, atol=1e-12)


def test_zero_matrices_give_zero_derivative():
    layout = BlockLayout(2, 1, 0, 0, mode="ab")
    lpv = AffineLpvModel(M0=np.zeros((2, 3)), coeffs=np.zeros((2, 2, 3)), layout=layout)
    xdot, y = lpv.evaluate(np.ones(2), np.array([1.0, -2.0]), np.array([3.0]))
    npt.assert_array_equal(xdot, np.zeros(2))
    npt.assert_array_equal(y, [1.0, -2.0])  # full-state output


@pytest.mark.parametrize("name", ["analytic-benchmark", "parafoil"])
def test_full_order_embedding_exact(name):
    from lpvred.models import get_model

    model = get_model(name)
    lpv = full_order_lpv(model, "ab")
    X, U, _ = region_samples(model, 2000, seed=7)
    theta = model.psi(X, U, None)[:, ab_entry_indices(model)]
    xdot, _ = lpv.evaluate(theta, X, U)
    f = model.f(X, U, None)
    assert np.all(np.abs(xdot - f).max(axis=1) <= 1e-10 * (1 + np.abs(f).max(axis=1)))


def test_full_order_reduction_predicts_exactly(benchmark, benchmark_split, benchmark_variation):
    _, val = benchmark_split
    _, vval = benchmark_variation
    red = FullOrderReduction(benchmark)
    Pi_hat = red.predict_pi(benchmark, val)
    npt.assert_allclose(Pi_hat, vval.Pi, atol=1e-14)


def test_outside_region_warns(benchmark, caplog):
    lpv = full_order_lpv(benchmark)
    lpv.region_lo = -0.5 * np.ones(lpv.n_theta)
    lpv.region_hi = 0.5 * np.ones(lpv.n_theta)
    with caplog.at_level(logging.WARNING, logger="lpvred.lpv"):
        lpv.evaluate(np.ones(lpv.n_theta), np.zeros(3), np.zeros(1))
    assert any("outside the region" in rec.message for rec in caplog.records)


def test_mismatched_theta_rejected(benchmark):
    lpv = full_order_lpv(benchmark)
    with pytest.raises(DimensionError):
        lpv.matrices(np.zeros(lpv.n_theta + 1))


def test_variation_from_matrix_wrapper():
    Pi = np.array([[1.0, 1.0], [1.0, 1.0]])
    vd = VariationDataset.from_matrix(Pi)
    assert vd.layout.n_pi == 2
    npt.assert_array_equal(vd.layout.vec(vd.layout.unvec(Pi[:, 0])), Pi[:, 0])
