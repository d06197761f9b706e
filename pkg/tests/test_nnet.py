import numpy as np
import numpy.testing as npt
import pytest

from lpvred.lpv import build_variation_dataset
from lpvred.nnet import (
    AdamState,
    MlpNetwork,
    TrainConfig,
    adam_step,
    feature_map,
    train,
)


class TestFeatureMap:
    def test_angles_expand_to_sine_cosine(self, parafoil):
        X = np.zeros((1, 12))
        F = feature_map(parafoil, X, np.zeros((1, 2)))
        assert F.shape == (1, 17)
        npt.assert_array_equal(F[0, 3:6], [0.0, 0.0, 0.0])   # sines
        npt.assert_array_equal(F[0, 6:9], [1.0, 1.0, 1.0])   # cosines

    def test_parafoil_feature_count_is_17(self, parafoil):
        rng = np.random.default_rng(0)
        F = feature_map(parafoil, rng.standard_normal((5, 12)), rng.random((5, 2)))
        assert F.shape == (5, 17)

    def test_benchmark_is_identity_stack(self, benchmark):
        X = np.array([[0.1, -0.2, 0.3]])
        U = np.array([[0.7]])
        F = feature_map(benchmark, X, U)
        npt.assert_array_equal(F, [[0.1, -0.2, 0.3, 0.7]])


class TestForward:
    def test_zero_network_outputs_zero(self):
        net = MlpNetwork(4, (8,), 2, 5, rng=np.random.default_rng(0))
        net.set_parameters([np.zeros_like(p) for p in net.parameters()])
        theta, gamma = net.forward(np.ones((3, 4)))
        npt.assert_array_equal(theta, np.zeros((3, 2)))
        npt.assert_array_equal(gamma, np.zeros((3, 5)))

    def test_decoder_is_a_plain_matrix_product(self):
        rng = np.random.default_rng(1)
        net = MlpNetwork(4, (), 3, 6, rng=rng)
        F = rng.standard_normal((10, 4))
        theta, gamma = net.forward(F)
        npt.assert_allclose(gamma, theta @ net.W_gamma.T + net.b_gamma, atol=1e-14)
        npt.assert_allclose(theta, np.tanh(F @ net.Ws[0].T + net.bs[0]), atol=1e-14)

    def test_decoder_affinity_in_theta(self):
        rng = np.random.default_rng(2)
        net = MlpNetwork(4, (8,), 3, 6, bypass=True, rng=rng)
        net.W_bypass[...] = rng.standard_normal(net.W_bypass.shape)
        t1, t2 = rng.standard_normal((2, 3))
        fixed = rng.standard_normal(4)
        for alpha in (-0.5, 0.25, 1.5):
            blend = net.decode(alpha * t1 + (1 - alpha) * t2, fixed)
            npt.assert_allclose(blend, alpha * net.decode(t1, fixed) + (1 - alpha) * net.decode(t2, fixed),
                                atol=1e-12)

    def test_feature_width_checked(self):
        net = MlpNetwork(4, (8,), 2, 5)
        with pytest.raises(ValueError):
            net.forward(np.ones((3, 5)))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    worst = 0.0
    for trial in range(10):
        net = MlpNetwork(5, (8,), 8, 4, bypass=bool(trial % 2), rng=rng)
        F = rng.standard_normal((7, 5))
        G = rng.standard_normal((7, 4))
        _, grads = net.loss_and_gradients(F, G, l2_weight=1e-3)
        params = net.parameters()
        for _ in range(3):
            pi = int(rng.integers(len(params)))
            k = int(rng.integers(params[pi].size))
            orig = params[pi].flat[k]
            for sign, out in ((+1, "lp"), (-1, "lm")):
                params[pi].flat[k] = orig + sign * 1e-6
                if sign > 0:
                    lp = net.loss(F, G, 1e-3)
                else:
                    lm = net.loss(F, G, 1e-3)
            params[pi].flat[k] = orig
            fd = (lp - lm) / 2e-6
            an = grads[pi].flat[k]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-10))
    assert worst <= 1e-5


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        p = [np.array([1.0, -2.0])]
        st = AdamState.for_params(p)
        adam_step(p, [np.zeros(2)], st, lr=0.1)
        npt.assert_array_equal(p[0], [1.0, -2.0])

    def test_zero_gradient_decays_moments(self):
        p = [np.array([1.0, -2.0])]
        st = AdamState.for_params(p)
        st.m[0][:] = 0.5
        st.v[0][:] = 0.25
        adam_step(p, [np.zeros(2)], st, lr=0.1)
        npt.assert_allclose(st.m[0], 0.45)   # beta1 * m
        npt.assert_allclose(st.v[0], 0.24975)  # beta2 * v

    def test_constant_gradient_step_approaches_lr(self):
        p = [np.array([0.0])]
        st = AdamState.for_params(p)
        g = [np.array([3.7])]
        prev = p[0].copy()
        for _ in range(500):
            prev = p[0].copy()
            adam_step(p, g, st, lr=0.01)
        npt.assert_allclose(abs(p[0] - prev), 0.01, rtol=1e-6)

    def test_scalar_quadratic_converges(self):
        p = [np.array([0.0])]
        st = AdamState.for_params(p)
        for k in range(10_000):
            adam_step(p, [2.0 * (p[0] - 3.0)], st, lr=0.01)
            if abs(p[0][0] - 3.0) < 1e-3:
                break
        assert abs(p[0][0] - 3.0) < 1e-3
        assert k < 10_000 - 1


class TestTraining:
    def test_constant_target_reaches_zero_loss(self, benchmark, benchmark_split):
        train_ds, val_ds = benchmark_split
        vtrain = build_variation_dataset(benchmark, train_ds)
        vval = build_variation_dataset(benchmark, val_ds)
        # overwrite targets with a constant; the bias-only solution is exact
        vtrain.Pi = np.full_like(vtrain.Pi, 0.37)
        vval.Pi = np.full_like(vval.Pi, 0.37)
        cfg = TrainConfig(learning_rate=5e-3, epochs=12, hidden=(8,), seed=1,
                          l2_weight=0.0, normalization="minmax")
        red = train(benchmark, vtrain, vval, 1, cfg)
        assert red.history["val_loss"][-1] < 1e-4

    def test_same_seed_reproduces_weights(self, benchmark, benchmark_variation):
        vtrain, vval = benchmark_variation
        cfg = TrainConfig(learning_rate=1e-3, epochs=3, hidden=(8,), seed=5)
        r1 = train(benchmark, vtrain, vval, 2, cfg)
        r2 = train(benchmark, vtrain, vval, 2, cfg)
        for a, b in zip(r1.net.parameters(), r2.net.parameters()):
            npt.assert_array_equal(a, b)

    def test_loss_decreases_from_epoch_zero(self, benchmark, benchmark_variation):
        vtrain, vval = benchmark_variation
        cfg = TrainConfig(learning_rate=1e-3, epochs=10, hidden=(16,), seed=2)
        red = train(benchmark, vtrain, vval, 2, cfg)
        tl = red.history["train_loss"]
        assert np.all(np.isfinite(tl))
        assert tl[red.history["best_epoch"] + 1] < tl[0]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_training_aborts(self, benchmark, benchmark_variation):
        vtrain, vval = benchmark_variation
        cfg = TrainConfig(learning_rate=1e160, epochs=3, hidden=(8,), seed=3)
        with pytest.raises(RuntimeError):
            train(benchmark, vtrain, vval, 2, cfg)

    def test_exported_affine_model_matches_decoder(self, benchmark, benchmark_split, benchmark_variation):
        vtrain, vval = benchmark_variation
        cfg = TrainConfig(learning_rate=1e-3, epochs=5, hidden=(8,), seed=4)
        red = train(benchmark, vtrain, vval, 2, cfg)
        _, val = benchmark_split
        theta = red.encode(benchmark, val.X, val.U)
        gamma_net = red.predict_pi(benchmark, val)
        gamma_affine = red.lpv.layout.vec(red.lpv.matrices(theta))
        npt.assert_allclose(gamma_net, gamma_affine, atol=1e-9)

    def test_early_stopping_engages(self, benchmark, benchmark_split):
        # independent noise targets: the network overfits the training
        # noise and validation stops improving, so patience cuts the run
        train_ds, val_ds = benchmark_split
        vtrain = build_variation_dataset(benchmark, train_ds)
        vval = build_variation_dataset(benchmark, val_ds)
        rng = np.random.default_rng(0)
        vtrain.Pi = rng.standard_normal(vtrain.Pi.shape)
        vval.Pi = rng.standard_normal(vval.Pi.shape)
        cfg = TrainConfig(learning_rate=5e-3, epochs=400, hidden=(16,), seed=6, patience=5)
        red = train(benchmark, vtrain, vval, 2, cfg)
        assert len(red.history["val_loss"]) < 401

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(l2_weight=-1.0)
