"""Small fixtures shared by the test modules."""

import numpy as np

from ngmvlvm.elbo import ObjectiveData, build_layout, draw_mc_noise, objective
from ngmvlvm.kernels import random_params


def random_theta(layout, N, D, Q, V, rng):
    P = {}
    for v in range(V):
        p = random_params(rng, Q, D, mean_scale=0.8)
        for k in ("alpha", "mu1", "mu2", "sigma1sq", "sigma2sq", "rho"):
            P[f"view{v}.{k}"] = getattr(p, k)
        P[f"view{v}.noise_var"] = rng.uniform(0.2, 0.8, 1)
    P["latent.mean"] = rng.normal(size=(N, D))
    P["latent.var"] = rng.uniform(0.05, 0.5, (N, D))
    return layout.inverse_transform(P)


def fd_check(seed=0, N=6, D=2, V=2, Q=2, L=4, I=1, M=3, masked=True):
    """Max relative error between the analytic and central-difference gradient."""
    rng = np.random.default_rng(seed)
    views = [rng.normal(size=(N, M)) for _ in range(V)]
    masks = None
    if masked:
        masks = [np.zeros((N, M), bool) for _ in range(V)]
        masks[0][1, 0] = masks[0][4, 2] = True
    data = ObjectiveData.from_arrays(views, masks)
    layout = build_layout(N, D, Q, V)
    theta = random_theta(layout, N, D, Q, V, rng)
    noise = draw_mc_noise(seed, 0, I, N, D, Q, L, range(V))
    _, _, _, grad = objective(theta, layout, data, noise, L)
    worst, worst_name = 0.0, None
    names = np.concatenate([[n] * int(np.prod(s)) for n, s, _ in layout.entries])
    for i in range(theta.size):
        h = 1e-5 * (1.0 + abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        fd = (objective(up, layout, data, noise, L, need_grad=False)[0]
              - objective(dn, layout, data, noise, L, need_grad=False)[0]) / (2 * h)
        rel = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-8)
        if rel > worst:
            worst, worst_name = rel, names[i]
    return worst, worst_name
