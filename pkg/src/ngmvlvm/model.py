"""The multi-view latent variable model: initialisation, training, prediction."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .data import MultiViewDataset
from .elbo import (
    MCNoise,
    NumericalError,
    ObjectiveData,
    VariationalParams,
    build_layout,
    draw_mc_noise,
    objective,
    view_params,
)
from .optim import AdamState, ParamLayout, adam_step
from .rff import draw_noise, feature_matrix, sample_spectral_points

__all__ = [
    "TrainConfig",
    "ModelState",
    "initialize",
    "train",
    "latent_mean",
    "reconstruct",
    "impute",
    "MODEL_SCHEMA",
]

MODEL_SCHEMA = "ngmvlvm-model-v1"

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Training settings: Q=2 components, L=100 features (50 frequency pairs),
    D=2, Adam lr 0.01 with betas (0.9, 0.99), at most 10000 iterations."""

    Q: int = 2
    L: int = 100
    D: int = 2
    I: int = 1
    T: int = 10000
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    tol: float = 1e-4
    window: int = 100
    seed: int = 0
    n_feature_draws: int = 64
    threads: int = 1

    def validate(self):
        if self.Q < 1 or self.D < 1 or self.I < 1 or self.T < 0:
            raise ValueError("Q, D, I must be >= 1 and T >= 0")
        if self.L < 2 or self.L % 2:
            raise ValueError(f"L must be an even integer >= 2, got {self.L}")
        if self.lr <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("need lr > 0 and betas in [0, 1)")
        if self.window < 1 or self.n_feature_draws < 1 or self.threads < 1:
            raise ValueError("window, n_feature_draws and threads must be >= 1")
        return self


@dataclass
class ModelState:
    """All trainable quantities plus the bookkeeping needed to resume or predict.

    ``theta`` is the flat unconstrained parameter vector described by ``layout``.
    ``stats`` holds the per-view standardisation applied before training.
    """

    layout: ParamLayout
    theta: np.ndarray
    config: TrainConfig
    stats: list
    view_dims: list
    view_keys: list
    elbo_history: list = field(default_factory=list)
    adam: AdamState | None = None
    n_iter: int = 0

    @property
    def N(self) -> int:
        return self.layout.unflatten(self.theta)["latent.mean"].shape[0]

    @property
    def V(self) -> int:
        return len(self.view_dims)

    def constrained(self) -> dict:
        return self.layout.transform(self.theta)

    def view_params(self, v: int):
        """``(SpectralMixtureParams, noise variance)`` of view ``v``."""
        return view_params(self.constrained(), v)

    def variational(self) -> VariationalParams:
        P = self.constrained()
        return VariationalParams(P["latent.mean"], P["latent.var"])

    def set_constrained(self, name: str, value):
        """Overwrite one parameter, given in constrained coordinates."""
        P = self.constrained()
        P[name] = np.broadcast_to(np.asarray(value, dtype=float), P[name].shape).copy()
        self.theta = self.layout.inverse_transform(P)

    def check_data(self, data: MultiViewDataset):
        if data.N != self.N or data.dims != list(self.view_dims):
            raise ValueError(f"data has N={data.N}, dims={data.dims}; model expects "
                             f"N={self.N}, dims={list(self.view_dims)}")

    def objective_data(self, data: MultiViewDataset) -> ObjectiveData:
        self.check_data(data)
        return ObjectiveData.from_arrays(data.standardized(self.stats), data.masks)

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        P = self.constrained()
        return {
            "schema": MODEL_SCHEMA,
            # thread count is an execution detail and must not change the file
            "config": {k: v for k, v in asdict(self.config).items() if k != "threads"},
            "seed": self.config.seed,
            "layout": self.layout.to_list(),
            "theta": self.theta.tolist(),
            "constrained": {k: np.asarray(v).tolist() for k, v in P.items()},
            "standardization": [{"mean": s["mean"].tolist(), "scale": s["scale"].tolist()}
                                for s in self.stats],
            "view_dims": list(self.view_dims),
            "view_keys": list(self.view_keys),
            "n_iter": self.n_iter,
            "elbo_history": list(self.elbo_history),
            "adam": None if self.adam is None else {
                "m": self.adam.m.tolist(), "v": self.adam.v.tolist(), "t": self.adam.t,
                "lr": self.adam.lr, "beta1": self.adam.beta1, "beta2": self.adam.beta2,
                "eps": self.adam.eps,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "ModelState":
        if d.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"expected model schema {MODEL_SCHEMA!r}, got {d.get('schema')!r}")
        adam = d.get("adam")
        if adam is not None:
            adam = AdamState(np.asarray(adam["m"], float), np.asarray(adam["v"], float),
                             adam["t"], adam["lr"], adam["beta1"], adam["beta2"], adam["eps"])
        return cls(
            layout=ParamLayout.from_list(d["layout"]),
            theta=np.asarray(d["theta"], dtype=float),
            config=TrainConfig(**d["config"]),
            stats=[{"mean": np.asarray(s["mean"], float), "scale": np.asarray(s["scale"], float)}
                   for s in d["standardization"]],
            view_dims=list(d["view_dims"]),
            view_keys=list(d["view_keys"]),
            elbo_history=list(d["elbo_history"]),
            adam=adam,
            n_iter=d["n_iter"],
        )

    @classmethod
    def load(cls, path) -> "ModelState":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _pca_init(Z: np.ndarray, D: int, rng: np.random.Generator) -> np.ndarray:
    """Top-``D`` principal scores of ``Z`` with unit variance and a fixed sign convention."""
    N = Z.shape[0]
    out = np.zeros((N, D))
    if Z.shape[1]:
        Zc = Z - Z.mean(axis=0)
        U, S, Vt = np.linalg.svd(Zc, full_matrices=False)
        k = min(D, int(np.sum(S > 1e-10 * max(S[0], 1e-300))))
        for d in range(k):
            sign = np.sign(Vt[d, np.argmax(np.abs(Vt[d]))]) or 1.0
            score = sign * U[:, d] * S[d]
            out[:, d] = score / score.std()
    else:
        k = 0
    if k < D:
        out[:, k:] = 0.1 * rng.standard_normal((N, D - k))
    return out


def initialize(data: MultiViewDataset, config: TrainConfig | None = None,
               view_keys=None) -> ModelState:
    """Build an untrained model state for ``data``.

    Latent means start at standardised PCA scores, latent variances at 0.01,
    mixture weights at ``1/Q``, frequency means at ``N(0, 0.5^2)``, frequency
    variances at 1, correlations at 0 and noise variances at a tenth of each
    standardised view's variance.
    """
    config = (config or TrainConfig()).validate()
    if data.N < 2:
        raise ValueError("training needs at least two data points")
    if not any(m >= 1 for m in data.dims):
        raise ValueError("at least one view needs one or more columns")
    view_keys = list(range(data.V)) if view_keys is None else [int(k) for k in view_keys]
    if len(view_keys) != data.V:
        raise ValueError("need one stream key per view")
    stats = data.standardization()
    Z = data.standardized(stats)
    N, D, Q, V = data.N, config.D, config.Q, data.V
    layout = build_layout(N, D, Q, V)

    P = {}
    for v, key in enumerate(view_keys):
        rng = np.random.default_rng([config.seed, 3, key])
        p = f"view{v}."
        P[p + "alpha"] = np.full(Q, 1.0 / Q)
        P[p + "mu1"] = rng.normal(0.0, 0.5, (Q, D))
        P[p + "mu2"] = rng.normal(0.0, 0.5, (Q, D))
        P[p + "sigma1sq"] = np.ones((Q, D))
        P[p + "sigma2sq"] = np.ones((Q, D))
        P[p + "rho"] = np.zeros(Q)
        obs = Z[v] if data.masks[v] is None else Z[v][~data.masks[v]]
        var = float(np.var(obs)) if obs.size else 1.0
        P[p + "noise_var"] = np.array([0.1 * var if var > 0 else 0.1])
    P["latent.mean"] = _pca_init(np.concatenate(Z, axis=1), D,
                                 np.random.default_rng([config.seed, 4]))
    P["latent.var"] = np.full((N, D), 0.01)
    theta = layout.inverse_transform(P)
    return ModelState(layout=layout, theta=theta, config=config, stats=stats,
                      view_dims=list(data.dims), view_keys=view_keys)


def _converged(history, window: int, tol: float) -> bool:
    if len(history) < 2 * window:
        return False
    prev = float(np.mean(history[-2 * window:-window]))
    cur = float(np.mean(history[-window:]))
    return (cur - prev) / abs(prev) < tol


def train(data: MultiViewDataset, config: TrainConfig | None = None, *, state=None,
          noise_fn=None, callback=None):
    """Fit the model by stochastic maximisation of the ELBO with Adam.

    Each iteration draws fresh latent and frequency noise (``noise_fn(t)`` may
    supply an :class:`~ngmvlvm.elbo.MCNoise` instead), evaluates the ELBO and
    its gradient, and takes one Adam step. Stops after ``config.T`` iterations
    or when the mean ELBO over the last ``window`` iterations improves on the
    preceding window by less than ``tol`` (relative).

    Returns ``(state, elbo_history)``.
    """
    model = state if state is not None else initialize(data, config)
    cfg = model.config
    obj = model.objective_data(data)
    if model.adam is None:
        model.adam = AdamState.zeros(model.layout.size, cfg.lr, cfg.beta1, cfg.beta2,
                                     cfg.adam_eps)
    theta, adam = model.theta, model.adam
    history = model.elbo_history
    N, D, Q, L = model.N, cfg.D, cfg.Q, cfg.L
    for t in range(model.n_iter, cfg.T):
        noise = noise_fn(t) if noise_fn is not None else draw_mc_noise(
            cfg.seed, t, cfg.I, N, D, Q, L, model.view_keys)
        value, _, _, grad = objective(theta, model.layout, obj, noise, L,
                                      threads=cfg.threads)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            model.theta, model.adam = theta, adam
            raise NumericalError(f"non-finite ELBO or gradient at iteration {t}")
        history.append(float(value))
        theta, adam = adam_step(theta, -grad, adam)
        model.n_iter = t + 1
        if callback is not None:
            callback(t, value)
        if t % 500 == 0:
            log.debug("iteration %d  elbo %.4f", t, value)
        if _converged(history, cfg.window, cfg.tol):
            log.info("converged at iteration %d", t)
            break
    model.theta, model.adam = theta, adam
    return model, history


def latent_mean(model: ModelState) -> np.ndarray:
    """The unified latent representation: posterior means, shape ``(N, D)``."""
    return model.constrained()["latent.mean"].copy()


def _smoother(Phi_fit, Phi_pred, Y, s2):
    """``Phi_pred (Phi_fit' Phi_fit + s2 I)^-1 Phi_fit' Y`` using the smaller system."""
    n, R = Phi_fit.shape
    if n < R:
        K = Phi_fit @ Phi_fit.T
        K[np.diag_indices(n)] += s2
        alpha = linalg.cho_solve(linalg.cho_factor(K, lower=True), Y)
        return Phi_pred @ (Phi_fit.T @ alpha)
    B = Phi_fit.T @ Phi_fit
    B[np.diag_indices(R)] += s2
    return Phi_pred @ linalg.cho_solve(linalg.cho_factor(B, lower=True), Phi_fit.T @ Y)


def _feature_draws(model: ModelState, v: int, n_draws: int, seed: int):
    params, _ = model.view_params(v)
    rng = np.random.default_rng([seed, 5, model.view_keys[v]])
    X = latent_mean(model)
    for _ in range(n_draws):
        sample = sample_spectral_points(params, model.config.L,
                                        draw_noise(rng, params.Q, model.config.L, params.D))
        yield feature_matrix(X, sample, params)


def _require_trained(model: ModelState):
    if model.n_iter < 1:
        raise RuntimeError("model has not been trained")


def reconstruct(model: ModelState, data: MultiViewDataset, n_feature_draws: int | None = None,
                seed: int | None = None) -> list:
    """Posterior-mean reconstruction of every view, in original units.

    For each of ``n_feature_draws`` frequency draws at the latent means,
    ``Y_hat = K_hat (K_hat + s2 I)^-1 Y`` in low-rank form; missing entries of
    ``Y`` are treated as zeros in standardised units.
    """
    _require_trained(model)
    model.check_data(data)
    n_draws = n_feature_draws or model.config.n_feature_draws
    seed = model.config.seed if seed is None else seed
    Z = data.standardized(model.stats)
    out = []
    for v in range(model.V):
        _, s2 = model.view_params(v)
        acc = np.zeros_like(Z[v])
        for Phi in _feature_draws(model, v, n_draws, seed):
            acc += _smoother(Phi, Phi, Z[v], s2)
        st = model.stats[v]
        out.append(acc / n_draws * st["scale"] + st["mean"])
    return out


def impute(model: ModelState, data: MultiViewDataset, n_feature_draws: int | None = None,
           seed: int | None = None) -> list:
    """Fill missing entries with ``E[y_missing | X, y_observed]``.

    Per column, the prediction at missing rows is
    ``K_hat[u, o] (K_hat[o, o] + s2 I)^-1 y[o]``, averaged over frequency draws.
    Observed entries are returned unchanged.
    """
    _require_trained(model)
    model.check_data(data)
    n_draws = n_feature_draws or model.config.n_feature_draws
    seed = model.config.seed if seed is None else seed
    Z = data.standardized(model.stats)
    filled = []
    for v in range(model.V):
        Y = data.views[v].copy()
        mask = data.masks[v]
        if mask is None:
            filled.append(Y)
            continue
        empty = np.flatnonzero(mask.all(axis=0))
        if empty.size:
            raise ValueError(f"view {v}: column {int(empty[0])} has no observed entries")
        patterns: dict = {}
        for j in np.flatnonzero(mask.any(axis=0)):
            patterns.setdefault(mask[:, j].tobytes(), []).append(j)
        _, s2 = model.view_params(v)
        pred = np.zeros_like(Y)
        for Phi in _feature_draws(model, v, n_draws, seed):
            for cols in patterns.values():
                miss = mask[:, cols[0]]
                obs = ~miss
                pred[np.ix_(miss, cols)] += _smoother(Phi[obs], Phi[miss],
                                                      Z[v][np.ix_(obs, cols)], s2)
        st = model.stats[v]
        pred = pred / n_draws * st["scale"] + st["mean"]
        Y[mask] = pred[mask]
        filled.append(Y)
    return filled
