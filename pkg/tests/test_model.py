import warnings

import numpy as np
import pytest

from ngmvlvm.data import MultiViewDataset, SyntheticSpec, make_s_curve_latents, sample_gp_views
from ngmvlvm.elbo import NumericalError, draw_mc_noise, elbo_estimate
from ngmvlvm.kernels import KernelSpec
from ngmvlvm.model import (
    ModelState,
    TrainConfig,
    _converged,
    _pca_init,
    impute,
    initialize,
    latent_mean,
    reconstruct,
    train,
)


def one_view_s_curve(N=150, seed=0, M=10):
    X = make_s_curve_latents(N, seed)
    spec = SyntheticSpec(N=N, kernels=[KernelSpec.rbf()], noise_std=[0.1], dims=[M])
    return sample_gp_views(X, spec, seed), X


def small_data(N=20, seed=0):
    rng = np.random.default_rng(seed)
    return MultiViewDataset([rng.normal(size=(N, 3)), rng.normal(size=(N, 2))])


def test_config_validation():
    with pytest.raises(ValueError, match="even"):
        TrainConfig(L=7).validate()
    with pytest.raises(ValueError):
        TrainConfig(lr=0).validate()


def test_fresh_latents_equal_pca_init():
    data = small_data()
    model = initialize(data, TrainConfig(seed=3))
    stats = data.standardization()
    Z = np.concatenate(data.standardized(stats), axis=1)
    expected = _pca_init(Z, 2, np.random.default_rng([3, 4]))
    np.testing.assert_array_equal(latent_mean(model), expected)
    assert latent_mean(model).shape == (20, 2)
    np.testing.assert_allclose(model.variational().s, 0.01)


def test_initial_kernel_parameters():
    model = initialize(small_data(), TrainConfig(Q=3))
    p, s2 = model.view_params(1)
    np.testing.assert_allclose(p.alpha, 1 / 3)
    np.testing.assert_allclose(p.sigma1sq, 1.0)
    np.testing.assert_allclose(p.rho, 0.0, atol=1e-15)
    assert s2 == pytest.approx(0.1)


def test_training_trend_single_view():
    data, _ = one_view_s_curve()
    model, hist = train(data, TrainConfig(T=1000, seed=1))
    assert len(hist) >= 500
    assert np.all(np.isfinite(hist))
    assert np.mean(hist[-500:]) > hist[0]


def test_training_is_deterministic():
    data = small_data()
    cfg = TrainConfig(T=40, seed=5, L=10)
    _, h1 = train(data, cfg)
    _, h2 = train(data, cfg)
    assert h1 == h2


def test_identical_views_learn_similar_noise():
    data, _ = one_view_s_curve(N=80, seed=2, M=6)
    two = MultiViewDataset([data.views[0], data.views[0].copy()])
    model, _ = train(two, TrainConfig(T=1500, seed=2))
    s1, s2 = model.view_params(0)[1], model.view_params(1)[1]
    assert abs(s1 - s2) / max(s1, s2) < 0.2


def test_row_permutation_equivariance():
    data = small_data(N=12, seed=4)
    perm = np.random.default_rng(0).permutation(12)
    pdata = MultiViewDataset([Y[perm] for Y in data.views])
    cfg = TrainConfig(T=30, seed=9, L=8)

    def noise(t):
        return draw_mc_noise(cfg.seed, t, 1, 12, 2, 2, 8, [0, 1])

    def pnoise(t):
        n = noise(t)
        n.latent = n.latent[:, perm]
        return n

    m1, _ = train(data, cfg, noise_fn=noise)
    m2, _ = train(pdata, cfg, state=initialize(pdata, cfg), noise_fn=pnoise)
    np.testing.assert_allclose(latent_mean(m2), latent_mean(m1)[perm], atol=1e-8)


def test_converged_rule():
    flat = [-100.0] * 200
    assert _converged(flat, 100, 1e-4)
    rising = list(np.linspace(-200, -100, 200))
    assert not _converged(rising, 100, 1e-4)
    assert not _converged(flat[:150], 100, 1e-4)


def test_non_finite_raises_numerical_error():
    data = small_data()
    cfg = TrainConfig(T=5, L=4)

    def bad(t):
        n = draw_mc_noise(0, t, 1, 20, 2, 2, 4, [0, 1])
        n.latent[:] = np.nan
        return n

    with pytest.raises(NumericalError):
        train(data, cfg, noise_fn=bad)


def test_save_load_round_trip(tmp_path):
    data = small_data()
    model, _ = train(data, TrainConfig(T=10, L=6, seed=2))
    model.save(tmp_path / "m.json")
    back = ModelState.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.theta, model.theta)
    assert elbo_estimate(back, data, 1, 3) == elbo_estimate(model, data, 1, 3)
    assert back.to_json() == model.to_json()


def test_predict_requires_training():
    data = small_data()
    model = initialize(data)
    with pytest.raises(RuntimeError):
        reconstruct(model, data)


def _pretend_trained(data, noise_var, L=20):
    model = initialize(data, TrainConfig(L=L, Q=2, n_feature_draws=4))
    for v in range(data.V):
        model.set_constrained(f"view{v}.noise_var", noise_var)
    model.n_iter = 1
    return model


def test_reconstruct_interpolates_at_small_noise():
    rng = np.random.default_rng(3)
    data = MultiViewDataset([rng.normal(size=(10, 3))])
    Yh = reconstruct(_pretend_trained(data, 1e-8), data)[0]
    assert np.max(np.abs(Yh - data.views[0])) <= 1e-4


def test_reconstruct_shrinks_at_large_noise():
    rng = np.random.default_rng(4)
    data = MultiViewDataset([rng.normal(size=(10, 3)) * 5 + 2])
    Yh = reconstruct(_pretend_trained(data, 1e12), data)[0]
    np.testing.assert_allclose(Yh, np.broadcast_to(data.views[0].mean(axis=0), Yh.shape), atol=1e-8)


def test_reconstruction_not_worse_than_zero_predictor():
    data, _ = one_view_s_curve(N=60, seed=5, M=5)
    model, _ = train(data, TrainConfig(T=300, seed=5))
    Yh = reconstruct(model, data)[0]
    Y = data.views[0]
    assert np.mean((Y - Yh) ** 2) <= 1.05 * np.mean((Y - Y.mean(0)) ** 2)


def test_impute_without_mask_is_identity():
    data = small_data()
    model, _ = train(data, TrainConfig(T=5, L=6))
    out = impute(model, data)
    for a, b in zip(out, data.views):
        np.testing.assert_array_equal(a, b)


def test_impute_constant_column():
    rng = np.random.default_rng(6)
    Y = np.column_stack([rng.normal(size=30), np.full(30, 4.25), rng.normal(size=30)])
    mask = np.zeros(Y.shape, bool)
    mask[[2, 7, 11], 1] = True
    data = MultiViewDataset([Y], masks=[mask])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, _ = train(data, TrainConfig(T=200, L=10))
        out = impute(model, data)[0]
    np.testing.assert_allclose(out[mask], 4.25, atol=1e-2)
    np.testing.assert_array_equal(out[~mask], Y[~mask])


def test_data_shape_mismatch_rejected():
    data = small_data()
    model, _ = train(data, TrainConfig(T=3, L=4))
    with pytest.raises(ValueError, match="expects"):
        reconstruct(model, small_data(N=21))
