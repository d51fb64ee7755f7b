"""Pure numpy implementations of the per-cell kernels.

Used when the compiled extension is unavailable or ``LSIRM_PURE_PYTHON`` is set.
Signatures match :mod:`lsirm._ckernels` exactly.
"""

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


def distance_matrix(z, w):
    diff = z[:, None, :] - w[None, :, :]
    return np.sqrt(np.einsum("kid,kid->ki", diff, diff))


def cell_loglik(y, weight, theta, alpha, beta, gamma, dist, binary, sigma_eps_sq):
    """N x P matrix of cell log-likelihoods; cells with zero weight are 0."""
    eta = np.outer(theta, alpha)
    eta += beta
    eta -= gamma * dist
    if binary:
        # log p(y) = -softplus(-eta) for y = 1, -softplus(eta) for y = 0
        s = np.where(y > 0.5, -eta, eta)
        out = -(np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s))))
    else:
        r = y - eta
        out = -0.5 * (LOG_2PI + np.log(sigma_eps_sq)) - 0.5 * r * r / sigma_eps_sq
    out *= weight
    return out
