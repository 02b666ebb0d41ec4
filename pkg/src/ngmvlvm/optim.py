"""Parameter transforms, the flat unconstrained parameter registry, and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

__all__ = [
    "softplus",
    "softplus_inv",
    "to_correlation",
    "from_correlation",
    "TRANSFORMS",
    "ParamLayout",
    "AdamState",
    "adam_step",
]


def _finite(u):
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("transform input contains non-finite values")
    return u


def softplus(u):
    """``log(1 + exp(u))`` without overflow."""
    return np.logaddexp(0.0, _finite(u))


def softplus_inv(x):
    x = _finite(x)
    if np.any(x <= 0):
        raise ValueError("softplus inverse needs strictly positive input")
    return x + np.log(-np.expm1(-x))


def to_correlation(u):
    """Scaled sigmoid ``2 * sigmoid(u) - 1`` onto the open interval (-1, 1)."""
    return np.tanh(0.5 * _finite(u))


def from_correlation(r):
    r = _finite(r)
    if np.any(np.abs(r) >= 1):
        raise ValueError("correlation must lie strictly inside (-1, 1)")
    return 2.0 * np.arctanh(r)


# name -> (forward, inverse, d forward / du evaluated from u)
TRANSFORMS = {
    "identity": (lambda u: _finite(u).copy(), lambda x: _finite(x).copy(),
                 lambda u: np.ones_like(u)),
    "positive": (softplus, softplus_inv, lambda u: expit(u)),
    "correlation": (to_correlation, from_correlation,
                    lambda u: 0.5 * (1.0 - np.tanh(0.5 * u) ** 2)),
}


@dataclass
class ParamLayout:
    """Registry mapping segments of a flat vector to named, transformed parameters.

    ``entries`` is an ordered list of ``(name, shape, transform)`` tuples.
    """

    entries: list = field(default_factory=list)

    def add(self, name: str, shape, transform: str):
        if transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {transform!r}")
        if any(e[0] == name for e in self.entries):
            raise ValueError(f"duplicate parameter name {name!r}")
        self.entries.append((name, tuple(int(s) for s in shape), transform))
        return self

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for _, s, _ in self.entries)

    def slices(self) -> dict:
        out, start = {}, 0
        for name, shape, _ in self.entries:
            n = int(np.prod(shape))
            out[name] = slice(start, start + n)
            start += n
        return out

    def names(self):
        return [e[0] for e in self.entries]

    def _check(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ValueError(f"expected flat vector of length {self.size}, got {vec.shape}")
        return vec

    def unflatten(self, vec) -> dict:
        """Split a flat vector into named arrays without transforming."""
        vec = self._check(vec)
        sl = self.slices()
        return {name: vec[sl[name]].reshape(shape) for name, shape, _ in self.entries}

    def flatten(self, arrays: dict) -> np.ndarray:
        parts = []
        for name, shape, _ in self.entries:
            a = np.asarray(arrays[name], dtype=float)
            if a.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {a.shape}")
            parts.append(a.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def transform(self, theta) -> dict:
        """Unconstrained flat vector to a dict of constrained arrays."""
        raw = self.unflatten(theta)
        return {name: TRANSFORMS[t][0](raw[name]) for name, _, t in self.entries}

    def inverse_transform(self, constrained: dict) -> np.ndarray:
        raw = {name: TRANSFORMS[t][1](np.asarray(constrained[name], dtype=float))
               for name, _, t in self.entries}
        return self.flatten(raw)

    def chain(self, theta, grad_constrained: dict) -> np.ndarray:
        """Pull a gradient w.r.t. constrained values back to the flat vector."""
        raw = self.unflatten(theta)
        out = {}
        for name, shape, t in self.entries:
            g = grad_constrained.get(name)
            out[name] = np.zeros(shape) if g is None else np.asarray(g) * TRANSFORMS[t][2](raw[name])
        return self.flatten(out)

    def to_list(self):
        return [[n, list(s), t] for n, s, t in self.entries]

    @classmethod
    def from_list(cls, items):
        layout = cls()
        for n, s, t in items:
            layout.add(n, s, t)
        return layout


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, lr=0.01, beta1=0.9, beta2=0.99, eps=1e-8) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState):
    """One bias-corrected Adam step minimising the objective whose gradient is ``grad``.

    Returns new ``(params, state)``; inputs are not modified. Callers maximising
    an objective pass the negated gradient.
    """
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)
