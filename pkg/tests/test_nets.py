"""Gradient-trained routers: planted-data recovery, losses, and gradients."""

import numpy as np
import pytest

from routebench.core import RoutingDataset
from routebench.routers import (
    ContractError,
    RouterConfig,
    TrainingError,
    fit_knn,
    fit_linear_mf,
    fit_linear_utility,
    fit_mlp_mf,
    fit_mlp_utility,
    fit_selection,
    gradient_check,
    load_router,
    save_router,
    select_model,
    selection_labels,
)

from conftest import make_dataset, random_dataset


def _rank_one_bilinear(seed=42, n=256, dim=8, n_models=3):
    """Targets exactly expressible as x' W emb(m) + scalar bias."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    a = rng.standard_normal(dim)
    g = rng.uniform(0.5, 1.5, n_models)
    a2 = rng.standard_normal(dim)
    g2 = rng.uniform(0.5, 1.5, n_models)
    S = (X @ a)[:, None] * g[None, :] * 0.3 + 0.5
    C = (X @ a2)[:, None] * g2[None, :] * 0.1 + 0.5
    assert C.min() > 0
    return make_dataset(X, S, C, normalize=False)


def _memorization_fixture(seed=42, n=20, dim=6, n_models=2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    S = rng.uniform(0, 1, (n, n_models))
    C = rng.uniform(0.01, 1, (n, n_models))
    return make_dataset(X, S, C, normalize=False)


def _additive_fixture(seed=42, n=96, dim=6, n_models=3):
    """s(x, m) = x . w + const_m, an easy shared-network target."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    w = rng.standard_normal(dim) * 0.5
    offsets = np.linspace(0.1, 0.7, n_models)
    S = (X @ w)[:, None] + offsets[None, :]
    C = np.tile(np.linspace(0.1, 0.3, n_models), (n, 1))
    return make_dataset(X, S, C, normalize=False)


def _separable_selection_fixture(seed=42, n=80, dim=4):
    """Two models, linearly separable best-model labels with a margin."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3 * n, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    boundary = rng.standard_normal(dim)
    boundary /= np.linalg.norm(boundary)
    proj = X @ boundary
    X = X[np.abs(proj) > 0.25][:n]
    proj = X @ boundary
    S = np.where((proj > 0)[:, None], [[0.9, 0.1]], [[0.1, 0.9]])
    C = np.full((n, 2), 0.1)
    return make_dataset(X, S, C, normalize=False)


class TestRouterConfig:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            RouterConfig(k=0)
        with pytest.raises(ValueError):
            RouterConfig(ridge_reg=-1.0)
        with pytest.raises(ValueError):
            RouterConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            RouterConfig(alpha=-0.5)
        with pytest.raises(ValueError):
            RouterConfig(epochs=0)
        with pytest.raises(ValueError):
            RouterConfig(model_embed_dim=0)


class TestLinearMF:
    def test_rank_one_planted_converges_under_default_epochs(self):
        ds = _rank_one_bilinear()
        router = fit_linear_mf(
            ds,
            RouterConfig(
                model_embed_dim=4, learning_rate=0.5, batch_size=16, seed=0
            ),
        )
        assert router.config.epochs == 100
        assert router.meta["final_train_loss"] < 1e-4

    def test_default_model_embed_dim_is_128(self):
        assert RouterConfig().model_embed_dim == 128

    def test_same_seed_is_bit_identical(self, tmp_path):
        ds = _rank_one_bilinear()
        cfg = RouterConfig(model_embed_dim=4, learning_rate=0.3, epochs=5, seed=9)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_router(fit_linear_mf(ds, cfg), a)
        save_router(fit_linear_mf(ds, cfg), b)
        assert a.read_bytes() == b.read_bytes()

    def test_divergence_raises_training_error(self):
        ds = _rank_one_bilinear()
        with pytest.raises(TrainingError, match="diverged"):
            fit_linear_mf(
                ds,
                RouterConfig(
                    model_embed_dim=4, learning_rate=50.0, epochs=10, seed=0
                ),
            )


class TestMLP:
    def test_memorizes_twenty_records(self):
        ds = _memorization_fixture()
        router = fit_mlp_utility(
            ds,
            RouterConfig(learning_rate=0.5, epochs=1500, batch_size=20, seed=0),
        )
        assert router.meta["final_train_loss"] < 1e-3

    def test_default_hidden_width_is_100(self):
        ds = _memorization_fixture()
        router = fit_mlp_utility(ds, RouterConfig(epochs=1, seed=0))
        assert router.params["s_w1"].shape == (6, 100)
        assert router.params["s_w2"].shape == (100, 100)
        assert router.params["s_w3"].shape == (100, 2)

    def test_alpha_zero_kills_cost_gradients_exactly(self):
        ds = _memorization_fixture()
        router = fit_mlp_utility(ds, RouterConfig(epochs=1, alpha=0.0, seed=0))
        _, grads = router.loss_and_grads(
            ds.embedding_matrix, ds.score_matrix, ds.cost_matrix
        )
        for name, grad in grads.items():
            if name.startswith("c_"):
                assert np.all(grad == 0.0), name

    def test_outputs_finite_on_random_unit_inputs(self, rng):
        ds = _memorization_fixture()
        router = fit_mlp_utility(
            ds, RouterConfig(learning_rate=0.3, epochs=50, seed=0)
        )
        X = rng.standard_normal((1000, 6))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        scores, costs = router.predict_matrix(X)
        assert np.all(np.isfinite(scores)) and np.all(np.isfinite(costs))

    def test_early_stopping_on_validation_loss(self, rng):
        train = random_dataset(rng, n=12, dim=6, n_models=2)
        val = random_dataset(rng, n=30, dim=6, n_models=2)
        cfg = RouterConfig(
            learning_rate=0.5,
            epochs=400,
            batch_size=12,
            seed=0,
            early_stop_patience=10,
        )
        router = fit_mlp_utility(train, cfg, val=val)
        assert router.meta["epochs_run"] < cfg.epochs


class TestMLPMF:
    def test_planted_additive_function(self):
        ds = _additive_fixture()
        router = fit_mlp_mf(
            ds,
            RouterConfig(
                model_embed_dim=8,
                learning_rate=0.3,
                epochs=300,
                batch_size=32,
                seed=0,
            ),
        )
        assert router.meta["final_train_loss"] < 1e-3

    def test_concatenated_input_dimension(self):
        ds = _additive_fixture()
        router = fit_mlp_mf(
            ds, RouterConfig(model_embed_dim=8, epochs=1, seed=0)
        )
        assert router.params["s_w1"].shape == (6 + 8, 100)
        assert router.params["emb"].shape == (3, 8)

    def test_same_seed_determinism(self, tmp_path):
        ds = _additive_fixture()
        cfg = RouterConfig(model_embed_dim=8, learning_rate=0.2, epochs=3, seed=4)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_router(fit_mlp_mf(ds, cfg), a)
        save_router(fit_mlp_mf(ds, cfg), b)
        assert a.read_bytes() == b.read_bytes()


class TestTrainingCurves:
    @pytest.mark.parametrize(
        "fit",
        [fit_linear_mf, fit_mlp_utility, fit_mlp_mf],
        ids=["linear_mf", "mlp", "mlp_mf"],
    )
    def test_loss_decreases_and_trend_is_monotone_within_noise(self, fit):
        ds = _rank_one_bilinear(n=128)
        cfg = RouterConfig(
            model_embed_dim=4, learning_rate=0.2, epochs=80, batch_size=16, seed=1
        )
        router = fit(ds, cfg)
        assert router.meta["final_train_loss"] < router.meta["initial_train_loss"]
        losses = np.array([h[0] for h in router.meta["loss_history"]])
        window = 10
        moving = np.convolve(losses, np.ones(window) / window, mode="valid")
        assert np.all(np.diff(moving) <= 0.05 * moving[:-1] + 1e-12)


class TestSelection:
    def test_separable_labels_reach_perfect_accuracy(self):
        ds = _separable_selection_fixture()
        labels = selection_labels(ds.score_matrix, ds.cost_matrix, 0.5)
        for arch, lr in (("linear", 2.0), ("mlp", 0.5), ("linear_mf", 2.0), ("mlp_mf", 0.5)):
            router = fit_selection(
                ds,
                0.5,
                arch,
                RouterConfig(
                    model_embed_dim=8,
                    learning_rate=lr,
                    epochs=500,
                    batch_size=32,
                    seed=0,
                ),
            )
            assert router.accuracy(ds.embedding_matrix, labels) == 1.0, arch

    def test_single_class_degenerate(self, rng):
        ds = random_dataset(rng, n=30, dim=5, n_models=3)
        scores = np.zeros_like(ds.score_matrix)
        scores[:, 2] = 1.0  # model C is always best
        one_class = make_dataset(
            ds.embedding_matrix, scores, ds.cost_matrix, normalize=False
        )
        router = fit_selection(
            one_class, 0.0, "linear", RouterConfig(learning_rate=1.0, epochs=50, seed=0)
        )
        for record in one_class.records:
            assert router.select(record.embedding, 0.0) == "C"

    def test_label_construction_prefers_utility(self):
        """{A: (s=1, c=1), B: (s=0.9, c=0.1)} at lam=1 labels B."""
        ds = make_dataset(
            [[1.0, 0.0]], [[1.0, 0.9]], [[1.0, 0.1]]
        )
        labels = selection_labels(ds.score_matrix, ds.cost_matrix, 1.0)
        assert ds.catalog.names[labels[0]] == "B"

    def test_wrong_lambda_is_contract_error(self):
        ds = _separable_selection_fixture()
        router = fit_selection(
            ds, 0.5, "linear", RouterConfig(learning_rate=1.0, epochs=20, seed=0)
        )
        assert router.select(ds.records[0].embedding, 0.5) in ("A", "B")
        with pytest.raises(ContractError, match="trained for"):
            router.select(ds.records[0].embedding, 0.25)

    def test_selection_router_has_no_utility_predictions(self):
        ds = _separable_selection_fixture()
        router = fit_selection(
            ds, 0.5, "linear", RouterConfig(epochs=5, seed=0)
        )
        with pytest.raises(ContractError):
            router.predict_utility(ds.records[0].embedding)


class TestGradientChecks:
    @pytest.fixture
    def batch_dataset(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((24, 6))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        S = rng.uniform(0, 1, (24, 3))
        C = rng.uniform(0.01, 1, (24, 3))
        return make_dataset(X, S, C, normalize=False)

    @pytest.fixture
    def fresh_config(self):
        # epochs=1 at a vanishing learning rate keeps parameters at init
        return RouterConfig(
            model_embed_dim=8, epochs=1, learning_rate=1e-9, batch_size=8, seed=3
        )

    def test_linear_mf_fresh_init(self, batch_dataset, fresh_config):
        router = fit_linear_mf(batch_dataset, fresh_config)
        assert gradient_check(router, batch_dataset, h=1e-5) <= 1e-4

    def test_mlp_fresh_init(self, batch_dataset, fresh_config):
        router = fit_mlp_utility(batch_dataset, fresh_config)
        assert gradient_check(router, batch_dataset, h=1e-5) <= 1e-4

    def test_mlp_mf_fresh_init(self, batch_dataset, fresh_config):
        router = fit_mlp_mf(batch_dataset, fresh_config)
        assert gradient_check(router, batch_dataset, h=1e-5) <= 1e-4

    @pytest.mark.parametrize("arch", ["linear", "mlp", "linear_mf", "mlp_mf"])
    def test_selection_gradients(self, batch_dataset, fresh_config, arch):
        router = fit_selection(batch_dataset, 0.5, arch, fresh_config)
        assert gradient_check(router, batch_dataset, h=1e-5) <= 1e-4

    def test_exact_fit_passes_vacuously(self, batch_dataset, fresh_config):
        """Targets produced by the router itself: zero loss, ~zero grads."""
        router = fit_linear_mf(batch_dataset, fresh_config)
        X = batch_dataset.embedding_matrix
        S_hat, C_hat = router.predict_matrix(X)
        assert gradient_check(router, (X, S_hat, C_hat), h=1e-5) <= 1e-6


class TestSerialization:
    def _assert_roundtrip(self, router, ds, tmp_path, lam=0.3):
        path = tmp_path / "router.json"
        save_router(router, path)
        loaded = load_router(path)
        for record in ds.records[:5]:
            assert select_model(router, record.embedding, lam) == select_model(
                loaded, record.embedding, lam
            )
            if router.formulation == "utility":
                a = router.predict_utility(record.embedding)
                b = loaded.predict_utility(record.embedding)
                np.testing.assert_array_equal(a.scores, b.scores)
                np.testing.assert_array_equal(a.costs, b.costs)

    def test_all_architectures_round_trip(self, tmp_path, rng):
        ds = random_dataset(rng, n=24, dim=5, n_models=3)
        cfg = RouterConfig(
            model_embed_dim=6, learning_rate=0.1, epochs=5, batch_size=8, seed=2
        )
        routers = [
            fit_knn(ds, cfg),
            fit_linear_utility(ds, cfg),
            fit_linear_mf(ds, cfg),
            fit_mlp_utility(ds, cfg),
            fit_mlp_mf(ds, cfg),
            fit_selection(ds, 0.3, "mlp", cfg),
        ]
        for i, router in enumerate(routers):
            sub = tmp_path / str(i)
            sub.mkdir()
            self._assert_roundtrip(router, ds, sub)

    def test_standardize_targets_round_trips(self, tmp_path, rng):
        ds = random_dataset(rng, n=24, dim=5, n_models=3)
        cfg = RouterConfig(
            model_embed_dim=6,
            learning_rate=0.1,
            epochs=5,
            seed=2,
            standardize_targets=True,
        )
        router = fit_mlp_utility(ds, cfg)
        self._assert_roundtrip(router, ds, tmp_path)
