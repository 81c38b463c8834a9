import numpy as np
import pytest

from mpe_lab.nn import (
    BACKEND,
    Mlp,
    TrainConfig,
    TrainingError,
    _kernels_py,
    fd_partial_action,
    forward,
    get_kernels,
    init_mlp,
    riesz_objective,
    train_regression,
    train_riesz,
)

BACKENDS = ["python"] + (["compiled"] if BACKEND == "compiled" else [])
MSE, RIESZ = _kernels_py.MSE, _kernels_py.RIESZ


def _fixed_problem(seed=0):
    rng = np.random.default_rng(seed)
    sizes = np.array([3, 6, 4, 1], dtype=np.int64)
    params = rng.normal(scale=0.6, size=_kernels_py.param_count(sizes))
    X = rng.normal(size=(9, 3))
    y = rng.normal(size=9)
    return sizes, params, X, y


class TestForward:
    def test_zero_network(self):
        net = Mlp((3, 4, 1), np.zeros(_kernels_py.param_count((3, 4, 1))), np.zeros(3), np.ones(3))
        assert forward(net, np.array([1.0, -2.0, 5.0])) == 0.0

    def test_linear_layer(self):
        net = Mlp((2, 1), np.array([1.0, 2.0, 0.0]), np.zeros(2), np.ones(2))
        assert forward(net, np.array([3.0, 4.0])) == 11.0

    def test_deterministic(self):
        net = init_mlp(4, (8, 8), seed=3)
        x = np.random.default_rng(0).normal(size=(5, 4))
        np.testing.assert_array_equal(net(x), net(x))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            init_mlp(3, (4,))(np.zeros(2))

    def test_bad_params(self):
        with pytest.raises(ValueError):
            Mlp((2, 1), np.array([1.0, 2.0]), np.zeros(2), np.ones(2))

    def test_folded_equivalent(self):
        rng = np.random.default_rng(1)
        net = Mlp((3, 5, 1), rng.normal(size=_kernels_py.param_count((3, 5, 1))), rng.normal(size=3),
                  rng.uniform(0.5, 2, size=3), out_shift=1.3, out_scale=0.4)
        x = rng.normal(size=(20, 3))
        np.testing.assert_allclose(net.folded()(x), net(x), rtol=0, atol=1e-8)

    def test_json_roundtrip(self):
        net = init_mlp(2, (3,), seed=5)
        back = Mlp.from_json(net.to_json())
        x = np.ones((2, 2))
        np.testing.assert_array_equal(back(x), net(x))


class TestGradients:
    @pytest.mark.parametrize("backend", BACKENDS)
    @pytest.mark.parametrize("mode", [MSE, RIESZ])
    def test_backprop_vs_finite_differences(self, backend, mode):
        sizes, params, X, y = _fixed_problem()
        k = get_kernels(backend)
        _, g = k.loss_grad(params, sizes, X, y, mode, 1, 0.1)
        h = 1e-5
        for i in range(params.size):
            e = np.zeros_like(params)
            e[i] = h
            fd = (k.loss_grad(params + e, sizes, X, y, mode, 1, 0.1)[0]
                  - k.loss_grad(params - e, sizes, X, y, mode, 1, 0.1)[0]) / (2 * h)
            assert abs(g[i] - fd) <= 1e-4 * max(abs(fd), abs(g[i]), 1e-6)

    @pytest.mark.skipif(BACKEND != "compiled", reason="compiled kernels not built")
    @pytest.mark.parametrize("mode", [MSE, RIESZ])
    def test_backends_agree(self, mode):
        sizes, params, X, y = _fixed_problem(2)
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 3))
        y = rng.normal(size=300)
        order = rng.permutation(300)
        out = {}
        for name in ("python", "compiled"):
            p, v = params.copy(), np.zeros_like(params)
            loss = get_kernels(name).sgd_epoch(p, v, sizes, X, y, order, 32, 1e-2, 0.9, mode, 1, 0.05)
            out[name] = (loss, p)
        assert out["python"][0] == pytest.approx(out["compiled"][0], rel=1e-12)
        np.testing.assert_allclose(out["python"][1], out["compiled"][1], rtol=0, atol=1e-12)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            get_kernels("gpu")


class TestRegression:
    def test_linear_target_vs_ols(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-2, 2, size=(5000, 1))
        y = 2 * x[:, 0] + 1 + 0.1 * rng.normal(size=5000)
        net = train_regression(init_mlp(1, (16,), 0), x, y, TrainConfig(hidden=(16,), epochs=60, lr=2e-3))
        xt = rng.uniform(-2, 2, size=(2000, 1))
        beta = np.linalg.lstsq(np.column_stack([np.ones(5000), x]), y, rcond=None)[0]
        ols = beta[0] + beta[1] * xt[:, 0]
        assert np.mean((net(xt) - (2 * xt[:, 0] + 1)) ** 2) <= 0.01
        assert np.mean((net(xt) - ols) ** 2) <= 0.01

    @pytest.mark.parametrize("c", [3.0, -0.5])
    def test_constant_target(self, c):
        x = np.random.default_rng(2).normal(size=(2000, 2))
        net = train_regression(init_mlp(2, (8,), 0), x, np.full(2000, c), TrainConfig(hidden=(8,), epochs=10))
        assert np.abs(net(x) - c).max() <= abs(c) * 0.01 + 0.01

    def test_zero_epochs(self):
        net = init_mlp(2, (4,), 0)
        out = train_regression(net, np.ones((10, 2)), np.arange(10.0), TrainConfig(epochs=0))
        np.testing.assert_array_equal(out.params, net.params)

    def test_final_mse_not_above_initial(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(500, 3))
        y = np.sin(x[:, 0]) + rng.normal(size=500)
        start = init_mlp(3, (8,), 0)
        cfg = TrainConfig(hidden=(8,), epochs=5, lr=5e-3)
        trained = train_regression(start, x, y, cfg)
        initial = train_regression(start, x, y, TrainConfig(epochs=0))
        assert np.mean((trained(x) - y) ** 2) <= np.mean((initial(x) - y) ** 2)

    def test_divergence_aborts(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(200, 2))
        with pytest.raises(TrainingError):
            train_regression(init_mlp(2, (8,), 0), x, rng.normal(size=200),
                             TrainConfig(hidden=(8,), epochs=50, lr=1e6, momentum=0.0))

    def test_early_stopping_returns_finite_net(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(400, 1))
        net = train_regression(init_mlp(1, (8,), 0), x, x[:, 0] ** 2,
                               TrainConfig(hidden=(8,), epochs=10, val_frac=0.25))
        assert np.isfinite(net(x)).all()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(delta_riesz=0.0)
        with pytest.raises(ValueError):
            TrainConfig(lr=-1.0)


class TestRiesz:
    CFG = TrainConfig(hidden=(16,), epochs=30, batch_size=256, lr=2e-3, seed=1)

    @pytest.mark.parametrize("mu,sigma", [(0.0, 1.0), (2.0, 0.7)])
    def test_recovers_gaussian_score(self, mu, sigma):
        rng = np.random.default_rng(0)
        a = rng.normal(mu, sigma, size=(50_000, 1))
        cfg = TrainConfig(**{**self.CFG.__dict__, "delta_riesz": 0.05 * sigma})
        h = train_riesz(init_mlp(1, cfg.hidden, 1), a, 0, cfg)
        at = rng.normal(mu, sigma, size=(20_000, 1))
        err = np.sqrt(np.mean((h(at) - (at[:, 0] - mu) / sigma**2) ** 2))
        assert err <= 0.05 / sigma**2

    def test_objective_not_above_zero_function(self):
        rng = np.random.default_rng(1)
        z = np.column_stack([rng.normal(size=3000), rng.normal(size=3000)])
        h = train_riesz(init_mlp(2, (8,), 0), z, 1, TrainConfig(hidden=(8,), epochs=10, lr=2e-3))
        assert riesz_objective(lambda x: np.zeros(x.shape[0]), z, 1, 0.05) == 0.0
        assert riesz_objective(h, z, 1, 0.05) <= 0.0

    def test_bad_action_index(self):
        with pytest.raises(IndexError):
            train_riesz(init_mlp(2, (4,), 0), np.zeros((10, 2)), 2, TrainConfig())


class TestFiniteDifference:
    def test_quadratic(self):
        assert fd_partial_action(lambda x: x[:, 0] ** 2, np.array([3.0]), 0, 1e-3) == pytest.approx(6.0, abs=1e-6)

    def test_constant(self):
        assert fd_partial_action(lambda x: np.full(x.shape[0], 2.0), np.array([1.0, 2.0]), 1, 1e-3) == 0.0

    def test_sine(self):
        d = 1e-2
        assert abs(fd_partial_action(lambda x: np.sin(x[:, 0]), np.array([0.0]), 0, d) - 1.0) <= d**2

    def test_one_sided_near_bounds(self):
        f = lambda x: x[:, 0] ** 2  # noqa: E731
        x = np.array([[1.0], [5.0], [10.0]])
        got = fd_partial_action(f, x, 0, 0.1, bounds=(1.0, 10.0))
        np.testing.assert_allclose(got, [(1.1**2 - 1.0) / 0.1, 10.0, (100.0 - 9.9**2) / 0.1])

    def test_nonpositive_step(self):
        with pytest.raises(ValueError):
            fd_partial_action(lambda x: x[:, 0], np.zeros(1), 0, 0.0)
