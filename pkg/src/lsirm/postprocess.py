"""Post-processing of posterior draws.

Latent positions are identified only up to rigid motions, so draws are
Procrustes-aligned to a reference configuration before averaging. Also
provides posterior-mean point estimates, oblimin rotation of the estimated
interaction map, and a few summary tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import Family, GammaMode, MissingMode, ModelSpec, ResponseMatrix
from .sampler import PosteriorSamples


@dataclass
class AlignedSamples:
    z_aligned: np.ndarray
    w_aligned: np.ndarray
    reference_index: int


def procrustes_rotation(x: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Orthogonal Q minimizing ||x @ Q - target||_F (both already centered)."""
    u, _, vt = np.linalg.svd(x.T @ target)
    return u @ vt


def procrustes_align(samples: PosteriorSamples,
                     reference_index: Optional[int] = None) -> AlignedSamples:
    """Align every draw's stacked (z, w) configuration to a reference draw.

    The reference defaults to the draw with the largest unnormalized log
    posterior. Each draw is centered, rotated/reflected onto the centered
    reference and moved to the reference centroid; no scaling is applied.
    """
    z, w = samples.z, samples.w
    n = z.shape[1]
    if reference_index is None:
        reference_index = int(np.argmax(samples.log_posterior))
    ref = np.concatenate([z[reference_index], w[reference_index]], axis=0)
    ref_center = ref.mean(axis=0)
    ref_c = ref - ref_center
    z_out = np.empty_like(z)
    w_out = np.empty_like(w)
    for s in range(z.shape[0]):
        x = np.concatenate([z[s], w[s]], axis=0)
        xc = x - x.mean(axis=0)
        aligned = xc @ procrustes_rotation(xc, ref_c) + ref_center
        z_out[s] = aligned[:n]
        w_out[s] = aligned[n:]
    return AlignedSamples(z_out, w_out, int(reference_index))


@dataclass
class FitSummary:
    beta_estimate: np.ndarray
    theta_estimate: np.ndarray
    gamma_estimate: float
    sigma_theta_estimate: float
    z_estimate: np.ndarray
    w_estimate: np.ndarray
    accept_theta: np.ndarray
    accept_beta: np.ndarray
    accept_z: np.ndarray
    accept_w: np.ndarray
    accept_gamma: float
    alpha_estimate: Optional[np.ndarray] = None
    sigma_eps_estimate: Optional[float] = None
    pi_estimate: Optional[float] = None
    imp_estimate: Optional[np.ndarray] = None
    accept_alpha: Optional[np.ndarray] = None
    reference_index: Optional[int] = None

    def to_dict(self) -> dict:
        out = {}
        for name, value in self.__dict__.items():
            if value is None:
                continue
            out[name] = value.tolist() if isinstance(value, np.ndarray) else value
        return out


def point_estimates(samples: PosteriorSamples, aligned: AlignedSamples,
                    spec: Optional[ModelSpec] = None) -> FitSummary:
    """Posterior means of every parameter; positions from the aligned draws."""
    spec = spec or samples.spec
    extras = {}
    if spec.item_params.value == "2pl":
        extras["alpha_estimate"] = samples.alpha.mean(axis=0)
        extras["accept_alpha"] = samples.accept_alpha
    if spec.family is Family.CONTINUOUS:
        extras["sigma_eps_estimate"] = float(np.sqrt(samples.sigma_eps_sq).mean())
    if spec.gamma_mode is GammaMode.SPIKE_SLAB:
        extras["pi_estimate"] = float(samples.slab.mean())
    if spec.missing_mode is MissingMode.MAR:
        extras["imp_estimate"] = samples.imputed.mean(axis=0)
    return FitSummary(
        beta_estimate=samples.beta.mean(axis=0),
        theta_estimate=samples.theta.mean(axis=0),
        gamma_estimate=float(samples.gamma.mean()),
        sigma_theta_estimate=float(np.sqrt(samples.sigma_sq).mean()),
        z_estimate=aligned.z_aligned.mean(axis=0),
        w_estimate=aligned.w_aligned.mean(axis=0),
        accept_theta=samples.accept_theta, accept_beta=samples.accept_beta,
        accept_z=samples.accept_z, accept_w=samples.accept_w,
        accept_gamma=samples.accept_gamma,
        reference_index=aligned.reference_index,
        **extras,
    )


def oblimin_criterion(loadings: np.ndarray, gamma: float = 0.0):
    """Oblimin simplicity criterion and its gradient with respect to the loadings."""
    p, m = loadings.shape
    l2 = loadings ** 2
    x = l2 @ (np.ones((m, m)) - np.eye(m))
    if gamma != 0:
        x = (np.eye(p) - gamma / p) @ x
    return float(np.sum(l2 * x) / 4.0), loadings * x


@dataclass
class ObliminResult:
    z: np.ndarray
    w: np.ndarray
    transform: np.ndarray
    converged: bool
    n_iter: int
    criterion: list = field(default_factory=list)


def oblimin_rotate(z_est: np.ndarray, w_est: np.ndarray, gamma: float = 0.0,
                   tol: float = 1e-6, max_iter: int = 500) -> ObliminResult:
    """Oblique gradient-projection oblimin rotation of the item configuration.

    The item coordinates play the role of a loading matrix. The resulting
    transform ``M`` (``w_rot = w_est @ M``) is applied to respondents as well.
    Iteration stops when the projected gradient norm drops below ``tol``;
    otherwise the best iterate is returned with ``converged=False``.
    """
    a = np.asarray(w_est, dtype=float)
    m = a.shape[1]
    if m < 2:
        raise ValueError("oblimin rotation needs at least two dimensions")
    t = np.eye(m)
    t_inv = np.eye(m)
    lam = a.copy()
    f, gq = oblimin_criterion(lam, gamma)
    g = -(lam.T @ gq @ t_inv).T
    step = 1.0
    trace = [f]
    converged = False
    it = 0
    for it in range(max_iter + 1):
        gp = g - t @ np.diag(np.sum(t * g, axis=0))
        s = np.linalg.norm(gp)
        if s < tol:
            converged = True
            break
        if it == max_iter:
            break
        step *= 2.0
        improved = False
        for _ in range(11):
            x = t - step * gp
            t_new = x / np.sqrt(np.sum(x ** 2, axis=0))
            t_new_inv = np.linalg.inv(t_new)
            lam_new = a @ t_new_inv.T
            f_new, gq_new = oblimin_criterion(lam_new, gamma)
            if f_new < f - 0.5 * s ** 2 * step:
                improved = True
                break
            step /= 2.0
        if not improved:
            if f_new < f:
                t, t_inv, lam, f, gq = t_new, t_new_inv, lam_new, f_new, gq_new
                trace.append(f)
            break
        t, t_inv, lam, f, gq = t_new, t_new_inv, lam_new, f_new, gq_new
        g = -(lam.T @ gq @ t_inv).T
        trace.append(f)
    transform = t_inv.T
    return ObliminResult(z=np.asarray(z_est) @ transform, w=lam, transform=transform,
                         converged=converged, n_iter=it, criterion=trace)


def _box_stats(values: np.ndarray) -> dict:
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"count": int(values.size), "min": float(q[0]), "q1": float(q[1]),
            "median": float(q[2]), "q3": float(q[3]), "max": float(q[4])}


def theta_by_score_summary(data: ResponseMatrix, theta_estimate: np.ndarray,
                           n_bins: int = 10) -> list[dict]:
    """Box statistics of theta estimates grouped by total score.

    Binary data are grouped by integer sum score over observed cells;
    continuous totals are cut into ``n_bins`` equal-width bins. Only
    non-empty groups are reported.
    """
    theta_estimate = np.asarray(theta_estimate)
    totals = np.where(data.observed, data.values, 0.0).sum(axis=1)
    rows = []
    if data.family is Family.BINARY:
        scores = np.rint(totals).astype(int)
        for score in range(data.n_items + 1):
            sel = scores == score
            if sel.any():
                rows.append({"group": score, "score_low": float(score), "score_high": float(score),
                             **_box_stats(theta_estimate[sel])})
        return rows
    lo, hi = float(totals.min()), float(totals.max())
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, totals, side="right") - 1, 0, n_bins - 1)
    for b in range(n_bins):
        sel = idx == b
        if sel.any():
            rows.append({"group": b, "score_low": float(edges[b]), "score_high": float(edges[b + 1]),
                         **_box_stats(theta_estimate[sel])})
    return rows


def draw_quantiles(draws: np.ndarray, probs: Sequence[float]) -> np.ndarray:
    """Per-column empirical quantiles (linear interpolation between order statistics)."""
    probs = np.atleast_1d(np.asarray(probs, dtype=float))
    if probs.size == 0 or np.any((probs <= 0) | (probs >= 1)):
        raise ValueError("probabilities must be nonempty and lie strictly inside (0, 1)")
    return np.quantile(draws, probs, axis=0, method="linear").T


def beta_quantiles(samples: PosteriorSamples, probs: Sequence[float] = (0.25, 0.5, 0.75)) -> np.ndarray:
    return draw_quantiles(samples.beta, probs)
