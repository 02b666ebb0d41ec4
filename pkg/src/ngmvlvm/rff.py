"""Random Fourier features for the NG-SM kernel.

Frequency pairs are drawn with the two-step reparameterisation: ``w1`` from its
diagonal Gaussian marginal, then ``w2`` from the conditional given ``w1``. The
standard-normal noise is kept alongside the draw so the same sample can be
re-evaluated under perturbed hyperparameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import SpectralMixtureParams

__all__ = [
    "SpectralSample",
    "draw_noise",
    "sample_spectral_points",
    "feature_map",
    "stacked_feature_map",
    "feature_matrix",
    "error_bound",
    "error_bound_epsilon",
]


@dataclass
class SpectralSample:
    """Paired frequency draws for every mixture component.

    ``W1``, ``W2``, ``eps1`` and ``eps2`` all have shape ``(Q, L // 2, D)``.
    """

    W1: np.ndarray
    W2: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    L: int

    @property
    def Q(self) -> int:
        return self.W1.shape[0]


def _check_L(L: int) -> int:
    if int(L) != L or L < 2 or L % 2:
        raise ValueError(f"L must be an even integer >= 2, got {L}")
    return int(L)


def draw_noise(rng: np.random.Generator, Q: int, L: int, D: int):
    """Standard-normal noise ``(eps1, eps2)`` of shape ``(Q, L // 2, D)`` each."""
    L = _check_L(L)
    eps1 = rng.standard_normal((Q, L // 2, D))
    eps2 = rng.standard_normal((Q, L // 2, D))
    return eps1, eps2


def sample_spectral_points(params: SpectralMixtureParams, L: int, noise=None) -> SpectralSample:
    """Draw ``L // 2`` correlated frequency pairs per component.

    ``noise`` is either a ``(eps1, eps2)`` tuple of standard-normal arrays, an
    integer seed, a ``numpy.random.Generator``, or ``None`` (fresh entropy).
    The result is a deterministic, smooth function of ``params`` given the noise.
    """
    L = _check_L(L)
    Q, D = params.Q, params.D
    if noise is None or isinstance(noise, (int, np.integer, np.random.Generator)):
        rng = noise if isinstance(noise, np.random.Generator) else np.random.default_rng(noise)
        eps1, eps2 = draw_noise(rng, Q, L, D)
    else:
        eps1, eps2 = (np.asarray(e, dtype=float) for e in noise)
        if eps1.shape != (Q, L // 2, D) or eps2.shape != (Q, L // 2, D):
            raise ValueError(
                f"noise must have shape {(Q, L // 2, D)}, got {eps1.shape} and {eps2.shape}"
            )
    if np.any(params.sigma1sq <= 0) or np.any(params.sigma2sq <= 0):
        raise ValueError("frequency variances must be strictly positive")

    mu1 = params.mu1[:, None, :]
    mu2 = params.mu2[:, None, :]
    sig1 = np.sqrt(params.sigma1sq)[:, None, :]
    sig2 = np.sqrt(params.sigma2sq)[:, None, :]
    rho = params.rho[:, None, None]
    resid = np.sqrt(np.maximum(1.0 - rho * rho, 0.0))

    W1 = mu1 + sig1 * eps1
    W2 = mu2 + rho * (sig2 / sig1) * (W1 - mu1) + resid * sig2 * eps2
    return SpectralSample(W1=W1, W2=W2, eps1=eps1, eps2=eps2, L=L)


def feature_map(x, W1: np.ndarray, W2: np.ndarray) -> np.ndarray:
    """Single-component feature map of length ``L = 2 * W1.shape[0]``.

    The first half holds ``cos(W1 x) + cos(W2 x)``, the second half
    ``sin(W1 x) + sin(W2 x)``, both scaled by ``sqrt(1 / (2L))``.
    """
    x = np.asarray(x, dtype=float)
    W1 = np.asarray(W1, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    if W1.shape != W2.shape or W1.ndim != 2 or x.shape[-1] != W1.shape[1]:
        raise ValueError(
            f"inconsistent shapes: x {x.shape}, W1 {W1.shape}, W2 {W2.shape}"
        )
    L = 2 * W1.shape[0]
    a1 = x @ W1.T
    a2 = x @ W2.T
    scale = np.sqrt(1.0 / (2 * L))
    return scale * np.concatenate([np.cos(a1) + np.cos(a2), np.sin(a1) + np.sin(a2)], axis=-1)


def feature_matrix(X: np.ndarray, sample: SpectralSample,
                   params: SpectralMixtureParams) -> np.ndarray:
    """Stacked feature matrix ``Phi`` of shape ``(N, Q * L)``.

    Block ``q`` is ``sqrt(alpha_q)`` times the feature map built from that
    component's frequency pairs, so ``Phi @ Phi.T`` estimates the NG-SM Gram.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if sample.Q != params.Q:
        raise ValueError(f"sample has {sample.Q} components, params have {params.Q}")
    if X.shape[1] != sample.W1.shape[2]:
        raise ValueError(f"X has dimension {X.shape[1]}, sample has {sample.W1.shape[2]}")
    blocks = [np.sqrt(params.alpha[q]) * feature_map(X, sample.W1[q], sample.W2[q])
              for q in range(params.Q)]
    return np.concatenate(blocks, axis=1)


def stacked_feature_map(x, sample: SpectralSample, params: SpectralMixtureParams) -> np.ndarray:
    """Concatenated per-component feature vector of length ``Q * L``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("stacked_feature_map expects a single input vector")
    return feature_matrix(x[None], sample, params)[0]


def _bound_scale(N, Q, alphas, K_norm):
    C = float(np.sqrt(np.sum(np.asarray(alphas, dtype=float) ** 2)))
    return C, 6.0 * K_norm + 3.0 * N * C * np.sqrt(Q)


def error_bound(N: int, L: int, Q: int, alphas, K_norm: float, eps: float) -> float:
    """Upper bound on ``P(||K_hat - K||_2 >= eps)`` for the stacked RFF Gram.

    Returned unclamped: values above one carry no information.
    """
    if eps <= 0:
        raise ValueError("eps must be strictly positive")
    if N <= 0 or L <= 0 or Q <= 0 or K_norm < 0:
        raise ValueError("N, L, Q must be positive and K_norm nonnegative")
    C, base = _bound_scale(N, Q, alphas, K_norm)
    exponent = -3.0 * eps ** 2 * L / (2.0 * N * C * (base + 8.0 * eps))
    return float(N * np.exp(exponent))


def error_bound_epsilon(N: int, L: int, Q: int, alphas, K_norm: float, prob: float) -> float:
    """The ``eps`` at which :func:`error_bound` equals ``prob`` (``0 < prob < N``)."""
    if not 0 < prob < N:
        raise ValueError("prob must lie strictly between 0 and N")
    C, base = _bound_scale(N, Q, alphas, K_norm)
    # 3 L eps^2 - 8 a eps - a * base = 0 with a = 2 N C log(N / prob)
    a = 2.0 * N * C * np.log(N / prob)
    A, B, Cq = 3.0 * L, -8.0 * a, -a * base
    return float((-B + np.sqrt(B * B - 4.0 * A * Cq)) / (2.0 * A))
