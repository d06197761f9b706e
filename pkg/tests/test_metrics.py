import numpy as np
import numpy.testing as npt
import pytest

from lpvred.lpv import FullOrderReduction, build_variation_dataset, full_order_lpv
from lpvred.metrics import (
    ErrorReport,
    aggregate,
    compare_trajectories,
    error_pi,
    error_xdot,
    evaluate_reduction,
)
from lpvred.pca import fit_pca
from lpvred.simulate import ConstantSignal


class TestErrorPi:
    def test_exact_reconstruction_is_zero(self):
        Pi = np.arange(12.0).reshape(3, 4)
        e, flagged = error_pi(Pi, Pi.copy())
        npt.assert_array_equal(e, np.zeros(3))
        assert flagged.size == 0

    def test_single_row_arithmetic(self):
        e, _ = error_pi(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]))
        npt.assert_allclose(e, [1.0])

    def test_zero_row_uses_unit_denominator(self):
        Pi = np.array([[0.0, 0.0], [2.0, 2.0]])
        Pi_hat = np.array([[0.3, -0.4], [2.0, 2.0]])
        e, flagged = error_pi(Pi, Pi_hat)
        npt.assert_allclose(e[0], 0.5)
        npt.assert_array_equal(flagged, [0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            error_pi(np.zeros((2, 3)), np.zeros((3, 2)))


class TestAggregate:
    def test_three_four_five(self):
        assert aggregate(np.array([3.0, 4.0])) == (4.0, 5.0)

    def test_zero_vector(self):
        assert aggregate(np.zeros(4)) == (0.0, 0.0)

    def test_singleton(self):
        assert aggregate(np.array([2.5])) == (2.5, 2.5)

    def test_conventional_variant(self):
        _, rms = aggregate(np.array([3.0, 4.0]), conventional_rms=True)
        npt.assert_allclose(rms, np.sqrt(12.5))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate(np.zeros(0))

    def test_norm_inequality(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.standard_normal(rng.integers(1, 30))
            mx, rms = aggregate(np.abs(v))
            assert mx >= rms / np.sqrt(len(v)) - 1e-12


def test_full_order_errors_are_zero(benchmark, benchmark_split, benchmark_variation):
    _, val = benchmark_split
    _, vval = benchmark_variation
    rep = evaluate_reduction(benchmark, FullOrderReduction(benchmark), val, vval)
    assert rep.max_e_pi <= 1e-12
    assert rep.max_e_xdot <= 1e-12
    assert rep.dataset_tag == "validation"


def test_pca_rank_two_derivative_error(benchmark, benchmark_split, benchmark_variation):
    vtrain, vval = benchmark_variation
    _, val = benchmark_split
    rep2 = evaluate_reduction(benchmark, fit_pca(vtrain, "minmax", 2), val, vval)
    rep1 = evaluate_reduction(benchmark, fit_pca(vtrain, "minmax", 1), val, vval)
    assert rep2.max_e_pi <= 1e-6
    assert np.all(rep2.e_xdot <= 1e-6)
    assert rep1.rms_e_xdot > rep2.rms_e_xdot
    assert rep1.rms_e_pi > 10.0 * rep2.rms_e_pi


def test_error_report_rejects_bad_values():
    with pytest.raises(ValueError):
        ErrorReport(e_pi=np.array([-1.0]), e_xdot=np.array([0.0]), n_theta_hat=1,
                    method="pca", normalization="std", dataset_tag="t", n_samples=1)


def test_error_xdot_full_order_zero(benchmark, benchmark_split):
    _, val = benchmark_split
    red = FullOrderReduction(benchmark)
    e, flagged = error_xdot(benchmark, red.lpv, red.scheduling_fn(benchmark), val)
    npt.assert_allclose(e, 0.0, atol=1e-12)


class TestCompareTrajectories:
    def test_full_order_matches_reference(self, benchmark, benchmark_variation):
        vtrain, _ = benchmark_variation
        reductions = {"full": FullOrderReduction(benchmark)}
        cmp = compare_trajectories(benchmark, reductions, np.array([1.0, 0.0, 0.5]),
                                   ConstantSignal([0.3]), h=0.01, T=8.0)
        assert cmp.state_error("full").max() <= 1e-9

    def test_exact_rank_tracks_closely(self, benchmark, benchmark_variation):
        vtrain, _ = benchmark_variation
        reductions = {
            "pca-2": fit_pca(vtrain, "minmax", 2),
            "pca-1": fit_pca(vtrain, "minmax", 1),
        }
        cmp = compare_trajectories(benchmark, reductions, np.array([1.0, 0.0, 0.5]),
                                   ConstantSignal([0.3]), h=0.01, T=8.0)
        assert cmp.state_error("pca-2").max() <= 1e-5
        drift = cmp.drift_summary()
        for label in reductions:
            assert np.isfinite(drift[label]["final_error"])
            assert "outside_region" in drift[label]
        assert drift["pca-1"]["final_error"] > drift["pca-2"]["final_error"]

    def test_divergent_reduction_flagged(self, benchmark, benchmark_variation):
        # a deliberately broken reduction: amplify the mean model so the
        # open-loop run blows up and is truncated, not hidden
        vtrain, _ = benchmark_variation
        red = fit_pca(vtrain, "minmax", 1)
        red.lpv.M0 = red.lpv.M0 * 40.0
        cmp = compare_trajectories(benchmark, {"broken": red}, np.array([1.0, 0.0, 0.5]),
                                   ConstantSignal([0.3]), h=0.01, T=8.0)
        drift = cmp.drift_summary()["broken"]
        assert drift["diverged"] or np.isfinite(drift["final_error"])


def test_evaluate_reduction_rebuilds_variation(benchmark, benchmark_split, benchmark_variation):
    vtrain, _ = benchmark_variation
    _, val = benchmark_split
    red = fit_pca(vtrain, "minmax", 2)
    rep_auto = evaluate_reduction(benchmark, red, val)
    rep_given = evaluate_reduction(benchmark, red, val, build_variation_dataset(benchmark, val))
    npt.assert_allclose(rep_auto.e_pi, rep_given.e_pi)
