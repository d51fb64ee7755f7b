"""Metropolis-Hastings within Gibbs sampler for latent space IRT models.

One sweep updates, in this fixed order: MAR imputations, theta, beta,
alpha (2PL), the spike-and-slab indicator (spike-and-slab only), log gamma,
sigma^2, sigma_eps^2 (continuous), z, w. Respondent-indexed blocks (theta, z)
are conditionally independent across respondents given the item parameters,
so each block is proposed and accepted for all rows at once; item-indexed
blocks are handled likewise by column.

The update functions mutate ``state`` in place and return acceptance flags.
They optionally take a :class:`Workspace`, a cache of the distance and
cell log-likelihood matrices that ``run_chain`` keeps in sync across updates.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from . import kernels
from .model import (ChainState, Family, GammaMode, Hyperparameters, InvalidStateError,
                    JumpingRules, MissingMode, ModelSpec, ResponseMatrix, effective_gamma,
                    log_prior, normal_logpdf, working_responses)
from .rng import Block, Substreams


@dataclass
class McmcConfig:
    niter: int = 15000
    nburn: int = 2500
    nthin: int = 5
    nprint: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.niter < 1 or self.nthin < 1 or self.nprint < 1 or self.nburn < 0:
            raise ValueError("niter, nthin, nprint must be positive and nburn nonnegative")
        if self.nburn >= self.niter:
            raise ValueError("nburn must be smaller than niter")
        if self.n_stored < 1:
            raise ValueError("(niter - nburn) // nthin must leave at least one stored draw")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_stored(self) -> int:
        return (self.niter - self.nburn) // self.nthin


@dataclass
class PosteriorSamples:
    """Thinned post-burn-in draws plus acceptance ratios.

    Acceptance ratios are accepted / proposed over all post-burn-in sweeps
    (``accept_scope``). ``gamma`` holds the effective distance weight, so
    draws with the slab switched off contribute 0.
    """

    spec: ModelSpec
    theta: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    sigma_sq: np.ndarray
    z: np.ndarray
    w: np.ndarray
    log_posterior: np.ndarray
    accept_theta: np.ndarray
    accept_beta: np.ndarray
    accept_z: np.ndarray
    accept_w: np.ndarray
    accept_gamma: float
    alpha: Optional[np.ndarray] = None
    sigma_eps_sq: Optional[np.ndarray] = None
    slab: Optional[np.ndarray] = None
    imputed: Optional[np.ndarray] = None
    accept_alpha: Optional[np.ndarray] = None
    accept_scope: str = "post_burnin"
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.theta.shape[0]


class Workspace:
    """Cached working responses, distances and cell log-likelihoods."""

    def __init__(self, state: ChainState, spec: ModelSpec, data: ResponseMatrix):
        self.spec = spec
        self.binary = spec.family is Family.BINARY
        self.y, self.weight = working_responses(state, spec, data)
        self.rows, self.cols = data.missing_cells()
        self.dist = kernels.distance_matrix(state.z, state.w)
        self.ll = self.cell_ll(state)

    def cell_ll(self, state: ChainState, theta=None, alpha=None, beta=None,
                gamma=None, dist=None, sigma_eps_sq=None) -> np.ndarray:
        if alpha is None:
            alpha = state.alpha if self.spec.two_pl else np.ones_like(state.beta)
        return kernels.cell_loglik(
            self.y, self.weight,
            state.theta if theta is None else theta,
            alpha,
            state.beta if beta is None else beta,
            effective_gamma(state, self.spec) if gamma is None else gamma,
            self.dist if dist is None else dist,
            self.binary,
            state.sigma_eps_sq if sigma_eps_sq is None else sigma_eps_sq,
        )

    def refresh(self, state: ChainState) -> None:
        self.ll = self.cell_ll(state)


def _workspace(work, state, spec, data):
    return Workspace(state, spec, data) if work is None else work


def _accept(rng: np.random.Generator, delta: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):  # u == 0 gives -inf, i.e. always accept
        log_u = np.log(rng.random(np.shape(delta)))
    return log_u < delta


def mh_update_theta(state, spec, data, hp, jr, rng, work=None) -> np.ndarray:
    work = _workspace(work, state, spec, data)
    prop = state.theta + jr.jump_theta * rng.standard_normal(state.theta.shape)
    ll_new = work.cell_ll(state, theta=prop)
    delta = (ll_new.sum(axis=1) - work.ll.sum(axis=1)
             + normal_logpdf(prop, hp.pr_mean_theta, state.sigma_sq)
             - normal_logpdf(state.theta, hp.pr_mean_theta, state.sigma_sq))
    acc = _accept(rng, delta)
    state.theta[acc] = prop[acc]
    work.ll[acc] = ll_new[acc]
    return acc


def mh_update_beta(state, spec, data, hp, jr, rng, work=None) -> np.ndarray:
    work = _workspace(work, state, spec, data)
    prop = state.beta + jr.jump_beta * rng.standard_normal(state.beta.shape)
    ll_new = work.cell_ll(state, beta=prop)
    var = hp.pr_sd_beta ** 2
    delta = (ll_new.sum(axis=0) - work.ll.sum(axis=0)
             + normal_logpdf(prop, hp.pr_mean_beta, var)
             - normal_logpdf(state.beta, hp.pr_mean_beta, var))
    acc = _accept(rng, delta)
    state.beta[acc] = prop[acc]
    work.ll[:, acc] = ll_new[:, acc]
    return acc


def _log_alpha_target(alpha, hp):
    # log-normal prior density of alpha plus the log Jacobian of alpha = exp(u)
    log_a = np.log(alpha)
    lognormal = normal_logpdf(log_a, hp.pr_mean_alpha, hp.pr_sd_alpha ** 2) - log_a
    return lognormal + log_a


def mh_update_alpha(state, spec, data, hp, jr, rng, work=None) -> np.ndarray:
    if not spec.two_pl or state.alpha is None:
        raise InvalidStateError("alpha is only sampled for 2PL models")
    work = _workspace(work, state, spec, data)
    prop = np.exp(np.log(state.alpha) + jr.jump_alpha * rng.standard_normal(state.alpha.shape))
    ll_new = work.cell_ll(state, alpha=prop)
    delta = (ll_new.sum(axis=0) - work.ll.sum(axis=0)
             + _log_alpha_target(prop, hp) - _log_alpha_target(state.alpha, hp))
    acc = _accept(rng, delta)
    state.alpha[acc] = prop[acc]
    work.ll[:, acc] = ll_new[:, acc]
    return acc


def mh_update_gamma(state, spec, data, hp, jr, rng, work=None) -> bool:
    if spec.gamma_mode is GammaMode.FIXED_AT_ONE:
        raise InvalidStateError("gamma is fixed at one")
    if spec.gamma_mode is GammaMode.SPIKE_SLAB and not state.slab:
        raise InvalidStateError("gamma is not sampled while the slab indicator is off")
    work = _workspace(work, state, spec, data)
    prop = state.log_gamma + jr.jump_gamma * rng.standard_normal()
    ll_new = work.cell_ll(state, gamma=math.exp(prop))
    var = hp.pr_sd_gamma ** 2
    delta = (ll_new.sum() - work.ll.sum()
             + float(normal_logpdf(prop, hp.pr_mean_gamma, var))
             - float(normal_logpdf(state.log_gamma, hp.pr_mean_gamma, var)))
    acc = bool(_accept(rng, np.float64(delta)))
    if acc:
        state.log_gamma = float(prop)
        work.ll = ll_new
    return acc


def _positions_delta(prop, cur):
    return -0.5 * (np.sum(prop ** 2, axis=1) - np.sum(cur ** 2, axis=1))


def mh_update_z(state, spec, data, hp, jr, rng, work=None) -> np.ndarray:
    work = _workspace(work, state, spec, data)
    prop = state.z + jr.jump_z * rng.standard_normal(state.z.shape)
    dist_new = kernels.distance_matrix(prop, state.w)
    ll_new = work.cell_ll(state, dist=dist_new)
    delta = ll_new.sum(axis=1) - work.ll.sum(axis=1) + _positions_delta(prop, state.z)
    acc = _accept(rng, delta)
    state.z[acc] = prop[acc]
    work.dist[acc] = dist_new[acc]
    work.ll[acc] = ll_new[acc]
    return acc


def mh_update_w(state, spec, data, hp, jr, rng, work=None) -> np.ndarray:
    work = _workspace(work, state, spec, data)
    prop = state.w + jr.jump_w * rng.standard_normal(state.w.shape)
    dist_new = kernels.distance_matrix(state.z, prop)
    ll_new = work.cell_ll(state, dist=dist_new)
    delta = ll_new.sum(axis=0) - work.ll.sum(axis=0) + _positions_delta(prop, state.w)
    acc = _accept(rng, delta)
    state.w[acc] = prop[acc]
    work.dist[:, acc] = dist_new[:, acc]
    work.ll[:, acc] = ll_new[:, acc]
    return acc


def mh_update_positions(state, spec, data, hp, jr, rng, work=None):
    """Respondent positions, then item positions against the updated z."""
    work = _workspace(work, state, spec, data)
    acc_z = mh_update_z(state, spec, data, hp, jr, rng, work)
    acc_w = mh_update_w(state, spec, data, hp, jr, rng, work)
    return acc_z, acc_w


def sigma_sq_conditional(state: ChainState, hp: Hyperparameters) -> tuple[float, float]:
    """Shape and scale of the inverse-gamma full conditional of sigma^2."""
    n = state.theta.shape[0]
    ss = float(np.sum((state.theta - hp.pr_mean_theta) ** 2))
    return n / 2.0 + hp.pr_a_theta, 0.5 * ss + hp.pr_b_theta


def gibbs_update_sigma_sq(state, hp, rng) -> None:
    shape, scale = sigma_sq_conditional(state, hp)
    state.sigma_sq = float(scale / rng.gamma(shape))


def sigma_eps_sq_conditional(state, spec, data, hp, work=None) -> tuple[float, float]:
    """Shape and scale of the inverse-gamma full conditional of sigma_eps^2.

    The residual sum runs over every cell entering the likelihood: observed
    cells, plus imputed ones under MAR.
    """
    if spec.family is not Family.CONTINUOUS:
        raise InvalidStateError("sigma_eps^2 exists only for continuous responses")
    work = _workspace(work, state, spec, data)
    alpha = state.alpha if spec.two_pl else np.ones_like(state.beta)
    eta = np.outer(state.theta, alpha) + state.beta - effective_gamma(state, spec) * work.dist
    resid = (work.y - eta) * work.weight
    count = float(work.weight.sum())
    return count / 2.0 + hp.pr_a_eps, 0.5 * float(np.sum(resid ** 2)) + hp.pr_b_eps


def gibbs_update_sigma_eps_sq(state, spec, data, hp, rng, work=None) -> None:
    if spec.family is not Family.CONTINUOUS:
        raise InvalidStateError("sigma_eps^2 exists only for continuous responses")
    work = _workspace(work, state, spec, data)
    shape, scale = sigma_eps_sq_conditional(state, spec, data, hp, work)
    state.sigma_eps_sq = float(scale / rng.gamma(shape))
    work.refresh(state)


def update_slab_indicator(state, spec, data, hp, rng, work=None) -> bool:
    """Gibbs draw of the slab indicator given everything else.

    The prior probability of the slab is fixed at 1/2, so the conditional
    odds of the slab equal the likelihood ratio between the current gamma
    and gamma = 0. When the spike is chosen, log gamma is refreshed from its
    slab prior.
    """
    if spec.gamma_mode is not GammaMode.SPIKE_SLAB:
        raise InvalidStateError("the slab indicator exists only under the spike-and-slab prior")
    work = _workspace(work, state, spec, data)
    ll_slab = work.ll if state.slab else work.cell_ll(state, gamma=math.exp(state.log_gamma))
    ll_spike = work.ll if not state.slab else work.cell_ll(state, gamma=0.0)
    log_odds = float(ll_slab.sum() - ll_spike.sum())
    # P(slab) = logistic(log_odds), written to avoid overflow
    u = rng.random()
    state.slab = bool(math.log(u) < -np.logaddexp(0.0, -log_odds)) if u > 0 else True
    if state.slab:
        work.ll = ll_slab
    else:
        state.log_gamma = float(hp.pr_mean_gamma + hp.pr_sd_gamma * rng.standard_normal())
        work.ll = ll_spike
    return state.slab


def impute_missing(state, spec, data, rng, work=None) -> None:
    """Data-augmentation draw of every missing cell from its predictive distribution."""
    if spec.missing_mode is not MissingMode.MAR:
        raise InvalidStateError("imputation applies only to the MAR missing mode")
    work = _workspace(work, state, spec, data)
    rows, cols = work.rows, work.cols
    if rows.size == 0:
        return
    alpha = state.alpha[cols] if spec.two_pl else 1.0
    eta = (alpha * state.theta[rows] + state.beta[cols]
           - effective_gamma(state, spec) * work.dist[rows, cols])
    if spec.family is Family.BINARY:
        p = 0.5 * (1.0 + np.tanh(0.5 * eta))
        draw = (rng.random(rows.size) < p).astype(float)
    else:
        draw = eta + math.sqrt(state.sigma_eps_sq) * rng.standard_normal(rows.size)
    state.imputed = draw
    work.y[rows, cols] = draw
    work.refresh(state)


def initial_state(data: ResponseMatrix, spec: ModelSpec, hp: Hyperparameters,
                  rng: np.random.Generator) -> ChainState:
    """Random starting point: parameters from their priors, sigma^2 = 1."""
    n, p, d = data.n_respondents, data.n_items, spec.latent_dim
    theta = hp.pr_mean_theta + rng.standard_normal(n)
    beta = hp.pr_mean_beta + hp.pr_sd_beta * rng.standard_normal(p)
    alpha = None
    if spec.two_pl:
        alpha = np.exp(hp.pr_mean_alpha + hp.pr_sd_alpha * rng.standard_normal(p))
    log_gamma = float(hp.pr_mean_gamma + hp.pr_sd_gamma * rng.standard_normal())
    if spec.gamma_mode is GammaMode.FIXED_AT_ONE:
        log_gamma = 0.0
    z = rng.standard_normal((n, d))
    w = rng.standard_normal((p, d))
    imputed = np.zeros(0)
    if spec.missing_mode is MissingMode.MAR and data.n_missing:
        counts = data.observed.sum(axis=0)
        sums = (data.values * data.observed).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            item_mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        rows, cols = data.missing_cells()
        if spec.family is Family.BINARY:
            prop = np.nan_to_num(item_mean, nan=0.5)[cols]
            imputed = (rng.random(rows.size) < prop).astype(float)
        else:
            imputed = np.nan_to_num(item_mean, nan=0.0)[cols]
    return ChainState(theta=theta, beta=beta, z=z, w=w, log_gamma=log_gamma, sigma_sq=1.0,
                      alpha=alpha, sigma_eps_sq=1.0 if spec.continuous else None,
                      slab=True, imputed=imputed)


def _check_inputs(data: ResponseMatrix, spec: ModelSpec) -> None:
    spec.check_data(data)
    if spec.family is Family.BINARY:
        obs = np.where(data.observed, data.values, np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            means = np.nanmean(obs, axis=0)
        degenerate = np.nonzero((means == 0) | (means == 1))[0]
        if degenerate.size:
            warnings.warn(f"items {degenerate.tolist()} have constant responses; "
                          "their beta posteriors are prior-dominated", stacklevel=3)
    if spec.missing_mode is MissingMode.MCAR:
        empty = (~data.observed.any(axis=1)).sum() + (~data.observed.any(axis=0)).sum()
        if empty:
            warnings.warn(f"{empty} rows/columns carry no observed cells", stacklevel=3)


def run_chain(data: ResponseMatrix, spec: ModelSpec, hp: Optional[Hyperparameters] = None,
              jr: Optional[JumpingRules] = None, cfg: Optional[McmcConfig] = None,
              chain: int = 0, progress: Optional[TextIO] = None,
              init: Optional[ChainState] = None) -> PosteriorSamples:
    """Run one chain and return its thinned post-burn-in draws.

    Progress lines ``iter=<n> loglik=<value> accept_gamma=<ratio>`` go to
    ``progress`` (stdout by default) every ``cfg.nprint`` sweeps; pass
    ``progress=False`` to silence them.
    """
    hp = hp or Hyperparameters()
    jr = jr or JumpingRules()
    cfg = cfg or McmcConfig()
    if progress is None:
        progress = sys.stdout
    _check_inputs(data, spec)
    n, p, d = data.n_respondents, data.n_items, spec.latent_dim
    streams = Substreams(cfg.seed, chain)
    state = init.copy() if init is not None else initial_state(
        data, spec, hp, streams.block(0, Block.INIT))
    work = Workspace(state, spec, data)

    s_total = cfg.n_stored
    out = {
        "theta": np.empty((s_total, n)), "beta": np.empty((s_total, p)),
        "gamma": np.empty(s_total), "sigma_sq": np.empty(s_total),
        "z": np.empty((s_total, n, d)), "w": np.empty((s_total, p, d)),
        "log_posterior": np.empty(s_total),
    }
    if spec.two_pl:
        out["alpha"] = np.empty((s_total, p))
    if spec.continuous:
        out["sigma_eps_sq"] = np.empty(s_total)
    if spec.gamma_mode is GammaMode.SPIKE_SLAB:
        out["slab"] = np.empty(s_total, dtype=bool)
    mar = spec.missing_mode is MissingMode.MAR
    if mar:
        out["imputed"] = np.empty((s_total, data.n_missing))

    acc = {"theta": np.zeros(n, dtype=np.int64), "beta": np.zeros(p, dtype=np.int64),
           "alpha": np.zeros(p, dtype=np.int64), "z": np.zeros(n, dtype=np.int64),
           "w": np.zeros(p, dtype=np.int64)}
    gamma_acc = gamma_tries = 0
    gamma_acc_all = gamma_tries_all = 0
    n_post = 0
    stored = 0
    sample_gamma = spec.gamma_mode is not GammaMode.FIXED_AT_ONE

    for sweep in range(1, cfg.niter + 1):
        if mar:
            impute_missing(state, spec, data, streams.block(sweep, Block.IMPUTE), work)
        a_theta = mh_update_theta(state, spec, data, hp, jr, streams.block(sweep, Block.THETA), work)
        a_beta = mh_update_beta(state, spec, data, hp, jr, streams.block(sweep, Block.BETA), work)
        if spec.two_pl:
            a_alpha = mh_update_alpha(state, spec, data, hp, jr, streams.block(sweep, Block.ALPHA), work)
        if spec.gamma_mode is GammaMode.SPIKE_SLAB:
            update_slab_indicator(state, spec, data, hp, streams.block(sweep, Block.SLAB), work)
        tried_gamma = sample_gamma and state.slab
        if tried_gamma:
            a_gamma = mh_update_gamma(state, spec, data, hp, jr, streams.block(sweep, Block.GAMMA), work)
            gamma_tries_all += 1
            gamma_acc_all += a_gamma
        gibbs_update_sigma_sq(state, hp, streams.block(sweep, Block.SIGMA))
        if spec.continuous:
            gibbs_update_sigma_eps_sq(state, spec, data, hp, streams.block(sweep, Block.SIGMA_EPS), work)
        a_z = mh_update_z(state, spec, data, hp, jr, streams.block(sweep, Block.Z), work)
        a_w = mh_update_w(state, spec, data, hp, jr, streams.block(sweep, Block.W), work)

        if sweep > cfg.nburn:
            n_post += 1
            acc["theta"] += a_theta
            acc["beta"] += a_beta
            acc["z"] += a_z
            acc["w"] += a_w
            if spec.two_pl:
                acc["alpha"] += a_alpha
            if tried_gamma:
                gamma_tries += 1
                gamma_acc += a_gamma
            if (sweep - cfg.nburn) % cfg.nthin == 0 and stored < s_total:
                j = stored
                out["theta"][j] = state.theta
                out["beta"][j] = state.beta
                out["gamma"][j] = effective_gamma(state, spec)
                out["sigma_sq"][j] = state.sigma_sq
                out["z"][j] = state.z
                out["w"][j] = state.w
                out["log_posterior"][j] = float(work.ll.sum()) + log_prior(state, spec, hp)
                if spec.two_pl:
                    out["alpha"][j] = state.alpha
                if spec.continuous:
                    out["sigma_eps_sq"][j] = state.sigma_eps_sq
                if spec.gamma_mode is GammaMode.SPIKE_SLAB:
                    out["slab"][j] = state.slab
                if mar:
                    out["imputed"][j] = state.imputed
                stored += 1

        if progress and sweep % cfg.nprint == 0:
            ratio = gamma_acc_all / gamma_tries_all if gamma_tries_all else 0.0
            print(f"iter={sweep} loglik={float(work.ll.sum()):.6f} accept_gamma={ratio:.4f}",
                  file=progress, flush=True)

    return PosteriorSamples(
        spec=spec,
        accept_theta=acc["theta"] / n_post, accept_beta=acc["beta"] / n_post,
        accept_z=acc["z"] / n_post, accept_w=acc["w"] / n_post,
        accept_alpha=acc["alpha"] / n_post if spec.two_pl else None,
        accept_gamma=gamma_acc / gamma_tries if gamma_tries else 0.0,
        meta={"n_post_burnin": n_post, "gamma_proposals": gamma_tries,
              "seed": int(cfg.seed), "chain": int(chain), "kernel_backend": kernels.BACKEND},
        **out,
    )
