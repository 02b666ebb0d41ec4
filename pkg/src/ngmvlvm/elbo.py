"""Evidence lower bound for the multi-view RFF latent variable model.

The reconstruction term is a Monte-Carlo average of low-rank Gaussian
log-likelihoods ``log N(y | 0, Phi Phi' + s2 I)``, each evaluated through the
determinant lemma and the Woodbury identity in ``O(N R^2)``. The KL term is
closed form. Gradients are derived by hand and pushed back through the feature
map, the two-step frequency sampler and the latent reparameterisation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .kernels import SpectralMixtureParams
from .optim import ParamLayout
from .rff import feature_matrix, sample_spectral_points

__all__ = [
    "NumericalError",
    "VariationalParams",
    "MCNoise",
    "ObjectiveData",
    "lowrank_gaussian_loglik",
    "dense_gaussian_loglik",
    "kl_to_standard_normal",
    "build_layout",
    "view_params",
    "draw_mc_noise",
    "objective",
    "elbo_estimate",
    "elbo_gradient",
]

LOG_2PI = np.log(2.0 * np.pi)
JITTER = 1e-10
VIEW_FIELDS = ("alpha", "mu1", "mu2", "sigma1sq", "sigma2sq", "rho")


class NumericalError(ArithmeticError):
    """A factorisation or evaluation produced an unusable result."""


@dataclass
class VariationalParams:
    """Diagonal Gaussian posterior ``q(x_n) = N(mu[n], diag(s[n]))``."""

    mu: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.s = np.atleast_2d(np.asarray(self.s, dtype=float))
        if self.mu.shape != self.s.shape:
            raise ValueError(f"mu {self.mu.shape} and s {self.s.shape} differ in shape")
        if np.any(self.s <= 0):
            raise ValueError("posterior variances s must be strictly positive")


# --------------------------------------------------------------------------
# Gaussian log-likelihood


def _loglik_block(Y, Phi, s2, need_grad):
    """Sum over columns of ``Y`` of ``log N(y | 0, Phi Phi' + s2 I)``."""
    n, R = Phi.shape
    m = Y.shape[1]
    B = Phi.T @ Phi
    B[np.diag_indices(R)] += s2 * (1.0 + JITTER)
    try:
        cho = linalg.cho_factor(B, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(
            f"Cholesky of the {R}x{R} inner matrix failed (s2={s2:.3g})"
        ) from exc
    b = Phi.T @ Y
    beta = linalg.cho_solve(cho, b, check_finite=False)
    logdet_B = 2.0 * np.sum(np.log(np.diag(cho[0])))
    resid_sq = np.sum(Y * Y) - np.sum(b * beta)
    value = (-0.5 * m * n * LOG_2PI - 0.5 * m * (n - R) * np.log(s2)
             - 0.5 * m * logdet_B - 0.5 * resid_sq / s2)
    if not need_grad:
        return value, None, None
    B_inv = linalg.cho_solve(cho, np.eye(R), check_finite=False)
    d_phi = -m * (Phi @ B_inv) + ((Y - Phi @ beta) @ beta.T) / s2
    d_s2 = (-0.5 * m * (n - R) / s2 - 0.5 * m * (1.0 + JITTER) * np.trace(B_inv)
            + 0.5 * resid_sq / s2 ** 2 - 0.5 * (1.0 + JITTER) * np.sum(beta * beta) / s2)
    return value, d_phi, d_s2


def lowrank_gaussian_loglik(y, Phi, sigma_sq: float) -> float:
    """``log N(y | 0, Phi Phi' + sigma_sq I)`` via the Woodbury identity.

    ``y`` may be a vector or an ``(N, M)`` matrix, in which case the column
    log-likelihoods are summed.
    """
    y = np.asarray(y, dtype=float)
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    Y = y[:, None] if y.ndim == 1 else y
    if Phi.shape[0] != Y.shape[0] or Phi.shape[1] < 1:
        raise ValueError(f"shape mismatch: y {y.shape}, Phi {Phi.shape}")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be strictly positive")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Phi)) and np.isfinite(sigma_sq)):
        raise NumericalError("non-finite input to lowrank_gaussian_loglik")
    value, _, _ = _loglik_block(Y, Phi.copy(), float(sigma_sq), need_grad=False)
    return float(value)


def dense_gaussian_loglik(y, Phi, sigma_sq: float) -> float:
    """Reference ``O(N^3)`` evaluation with an explicit ``N x N`` covariance."""
    y = np.asarray(y, dtype=float)
    Y = y[:, None] if y.ndim == 1 else y
    C = Phi @ Phi.T + sigma_sq * np.eye(Phi.shape[0])
    Lc = np.linalg.cholesky(C)
    z = linalg.solve_triangular(Lc, Y, lower=True)
    n, m = Y.shape
    return float(-0.5 * m * n * LOG_2PI - m * np.sum(np.log(np.diag(Lc))) - 0.5 * np.sum(z * z))


# --------------------------------------------------------------------------
# KL regulariser


def kl_to_standard_normal(vp: VariationalParams) -> float:
    """``sum_n KL(N(mu_n, diag(s_n)) || N(0, I))`` in closed form."""
    if np.any(vp.s <= 0):
        raise ValueError("posterior variances s must be strictly positive")
    return float(0.5 * np.sum(vp.s + vp.mu * vp.mu - np.log(vp.s) - 1.0))


# --------------------------------------------------------------------------
# Parameter registry and Monte-Carlo noise


def build_layout(N: int, D: int, Q: int, V: int) -> ParamLayout:
    """Unconstrained layout: per-view kernel and noise parameters, then latents."""
    layout = ParamLayout()
    for v in range(V):
        p = f"view{v}."
        layout.add(p + "alpha", (Q,), "positive")
        layout.add(p + "mu1", (Q, D), "identity")
        layout.add(p + "mu2", (Q, D), "identity")
        layout.add(p + "sigma1sq", (Q, D), "positive")
        layout.add(p + "sigma2sq", (Q, D), "positive")
        layout.add(p + "rho", (Q,), "correlation")
        layout.add(p + "noise_var", (1,), "positive")
    layout.add("latent.mean", (N, D), "identity")
    layout.add("latent.var", (N, D), "positive")
    return layout


def view_params(constrained: dict, v: int) -> tuple[SpectralMixtureParams, float]:
    p = f"view{v}."
    params = SpectralMixtureParams(*(constrained[p + k] for k in VIEW_FIELDS))
    return params, float(constrained[p + "noise_var"][0])


@dataclass
class MCNoise:
    """Standard-normal draws for ``I`` joint samples.

    ``latent`` has shape ``(I, N, D)``; ``spectral[i][v]`` is an
    ``(eps1, eps2)`` pair of ``(Q, L // 2, D)`` arrays.
    """

    latent: np.ndarray
    spectral: list

    @property
    def I(self) -> int:
        return self.latent.shape[0]


def draw_mc_noise(seed: int, iteration: int, I: int, N: int, D: int, Q: int, L: int,
                  view_keys) -> MCNoise:
    """Noise for one iteration from independent substreams.

    The latent draws come from stream ``(seed, iteration, 0)`` and view ``v``'s
    frequency draws from ``(seed, iteration, 1, view_keys[v])``, so results do
    not depend on evaluation order.
    """
    if I < 1:
        raise ValueError("number of Monte-Carlo samples I must be >= 1")
    latent = np.random.default_rng([seed, iteration, 0]).standard_normal((I, N, D))
    per_view = []
    for key in view_keys:
        rng = np.random.default_rng([seed, iteration, 1, int(key)])
        per_view.append([(rng.standard_normal((Q, L // 2, D)),
                          rng.standard_normal((Q, L // 2, D))) for _ in range(I)])
    spectral = [[per_view[v][i] for v in range(len(per_view))] for i in range(I)]
    return MCNoise(latent=latent, spectral=spectral)


# --------------------------------------------------------------------------
# Objective


@dataclass
class ObjectiveData:
    """Standardised views with missing entries zeroed, plus column groups.

    ``groups[v]`` lists ``(rows, cols)`` pairs; columns in one group share the
    same observed row set (``rows is None`` means fully observed).
    """

    views: list
    groups: list

    @property
    def V(self) -> int:
        return len(self.views)

    @property
    def N(self) -> int:
        return self.views[0].shape[0]

    @classmethod
    def from_arrays(cls, views, masks=None) -> "ObjectiveData":
        views = [np.asarray(Y, dtype=float) for Y in views]
        masks = masks or [None] * len(views)
        groups = []
        for Y, mask in zip(views, masks):
            if mask is None or not np.any(mask):
                groups.append([(None, np.arange(Y.shape[1]))] if Y.shape[1] else [])
                continue
            observed = ~np.asarray(mask, dtype=bool)
            patterns: dict = {}
            for j in range(Y.shape[1]):
                patterns.setdefault(observed[:, j].tobytes(), []).append(j)
            vg = []
            for cols in patterns.values():
                rows = np.flatnonzero(observed[:, cols[0]])
                if rows.size == 0:
                    raise ValueError(f"column {cols[0]} has no observed entries")
                vg.append((None if rows.size == Y.shape[0] else rows, np.asarray(cols)))
            groups.append(vg)
        return cls(views=views, groups=groups)


def _view_term(Y, groups, params: SpectralMixtureParams, s2, X, eps, L, need_grad):
    sample = sample_spectral_points(params, L, eps)
    Phi = feature_matrix(X, sample, params)
    value = 0.0
    d_phi = np.zeros_like(Phi) if need_grad else None
    d_s2 = 0.0
    for rows, cols in groups:
        Yg = Y[:, cols] if rows is None else Y[np.ix_(rows, cols)]
        Pg = Phi if rows is None else Phi[rows]
        val, dp, ds = _loglik_block(Yg, Pg, s2, need_grad)
        value += val
        if need_grad:
            if rows is None:
                d_phi += dp
            else:
                d_phi[rows] += dp
            d_s2 += ds
    if not np.isfinite(value):
        raise NumericalError("non-finite log-likelihood term")
    if not need_grad:
        return value, None, None

    Q, D = params.Q, params.D
    h = L // 2
    eps1, eps2 = sample.eps1, sample.eps2
    sig1 = np.sqrt(params.sigma1sq)
    sig2 = np.sqrt(params.sigma2sq)
    grads = {k: np.zeros_like(getattr(params, k)) for k in VIEW_FIELDS}
    d_x = np.zeros_like(X)
    scale = np.sqrt(1.0 / (2 * L))
    for q in range(Q):
        blk = slice(q * L, (q + 1) * L)
        G = d_phi[:, blk]
        Gc, Gs = G[:, :h], G[:, h:]
        grads["alpha"][q] = np.sum(G * Phi[:, blk]) / (2.0 * params.alpha[q])
        c = scale * np.sqrt(params.alpha[q])
        W1, W2 = sample.W1[q], sample.W2[q]
        A1, A2 = X @ W1.T, X @ W2.T
        H1 = c * (Gs * np.cos(A1) - Gc * np.sin(A1))
        H2 = c * (Gs * np.cos(A2) - Gc * np.sin(A2))
        d_x += H1 @ W1 + H2 @ W2
        dW1 = H1.T @ X
        dW2 = H2.T @ X
        r = params.rho[q]
        resid = np.sqrt(max(1.0 - r * r, 0.0))
        grads["mu1"][q] = dW1.sum(axis=0)
        grads["mu2"][q] = dW2.sum(axis=0)
        grads["sigma1sq"][q] = np.sum(dW1 * eps1[q], axis=0) / (2.0 * sig1[q])
        grads["sigma2sq"][q] = (np.sum(dW2 * (r * eps1[q] + resid * eps2[q]), axis=0)
                                / (2.0 * sig2[q]))
        ratio = r / resid if resid > 0 else 0.0
        grads["rho"][q] = np.sum(dW2 * sig2[q] * (eps1[q] - ratio * eps2[q]))
    return value, (grads, d_s2), d_x


def objective(theta, layout: ParamLayout, data: ObjectiveData, noise: MCNoise, L: int,
              need_grad: bool = True, threads: int = 1):
    """ELBO value and (optionally) its gradient w.r.t. the flat unconstrained vector.

    Returns ``(elbo, reconstruction, kl, grad)``; ``grad`` is ``None`` when not
    requested. Per-view work may run on ``threads`` workers; reductions happen
    in fixed view order so the result does not depend on the thread count.
    """
    P = layout.transform(theta)
    mu, s = P["latent.mean"], P["latent.var"]
    V, I = data.V, noise.I
    per_view = [view_params(P, v) for v in range(V)]
    sq = np.sqrt(s)

    recon = 0.0
    g_con = {name: np.zeros(shape) for name, shape, _ in layout.entries} if need_grad else None
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 and V > 1 else None
    try:
        for i in range(I):
            E = noise.latent[i]
            X = mu + sq * E

            def run(v, X=X, i=i):
                params, s2 = per_view[v]
                return _view_term(data.views[v], data.groups[v], params, s2, X,
                                  noise.spectral[i][v], L, need_grad)

            results = list(pool.map(run, range(V))) if pool else [run(v) for v in range(V)]
            d_x = np.zeros_like(X)
            for v, (val, g, dx) in enumerate(results):
                recon += val / I
                if need_grad:
                    grads, d_s2 = g
                    for k in VIEW_FIELDS:
                        g_con[f"view{v}.{k}"] += grads[k] / I
                    g_con[f"view{v}.noise_var"] += d_s2 / I
                    d_x += dx
            if need_grad:
                g_con["latent.mean"] += d_x / I
                g_con["latent.var"] += d_x * E / (2.0 * sq) / I
    finally:
        if pool:
            pool.shutdown()

    kl = kl_to_standard_normal(VariationalParams(mu, s))
    value = recon - kl
    if not need_grad:
        return value, recon, kl, None
    g_con["latent.mean"] -= mu
    g_con["latent.var"] -= 0.5 * (1.0 - 1.0 / s)
    return value, recon, kl, layout.chain(theta, g_con)


def _resolve_noise(model, data_obj: ObjectiveData, I, noise):
    if isinstance(noise, MCNoise):
        if noise.I != I:
            raise ValueError(f"noise holds {noise.I} samples but I={I}")
        return noise
    seed = model.config.seed if noise is None else int(noise)
    return draw_mc_noise(seed, 0, I, data_obj.N, model.config.D, model.config.Q,
                         model.config.L, model.view_keys)


def elbo_estimate(model, data, I: int = 1, noise=None) -> float:
    """Monte-Carlo ELBO of ``model`` on ``data``.

    ``noise`` is an :class:`MCNoise`, an integer seed, or ``None`` (model seed).
    """
    if I < 1:
        raise ValueError("number of Monte-Carlo samples I must be >= 1")
    obj = model.objective_data(data)
    noise = _resolve_noise(model, obj, I, noise)
    value, _, _, _ = objective(model.theta, model.layout, obj, noise, model.config.L,
                               need_grad=False)
    return float(value)


def elbo_gradient(model, data, I: int = 1, noise=None) -> dict:
    """Gradient of :func:`elbo_estimate` (same noise) per unconstrained parameter."""
    if I < 1:
        raise ValueError("number of Monte-Carlo samples I must be >= 1")
    obj = model.objective_data(data)
    noise = _resolve_noise(model, obj, I, noise)
    _, _, _, grad = objective(model.theta, model.layout, obj, noise, model.config.L)
    return model.layout.unflatten(grad)
