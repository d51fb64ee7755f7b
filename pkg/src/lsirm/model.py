"""Domain types, link functions, likelihoods and priors for latent space IRT models.

Four variants are covered: 1PL/2PL item parameters crossed with binary
(logistic link) or continuous (normal identity link) responses. All share the
linear predictor

    eta[k, i] = alpha[i] * theta[k] + beta[i] - gamma * ||z[k] - w[i]||

with ``alpha == 1`` for the 1PL models.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class Family(str, enum.Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


class ItemParams(str, enum.Enum):
    ONE_PL = "1pl"
    TWO_PL = "2pl"


class GammaMode(str, enum.Enum):
    FREE = "free"
    FIXED_AT_ONE = "fixed"
    SPIKE_SLAB = "spikeslab"


class MissingMode(str, enum.Enum):
    COMPLETE = "complete"
    MCAR = "mcar"
    MAR = "mar"


class InvalidStateError(RuntimeError):
    """An operation was called for a model variant it does not apply to."""


@dataclass
class ResponseMatrix:
    """N x P responses with an observation mask.

    Unobserved cells keep whatever is stored in ``values`` but no likelihood
    computation ever reads them.
    """

    values: np.ndarray
    observed: np.ndarray
    family: Family = Family.BINARY

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        self.observed = np.array(self.observed, dtype=bool)
        self.family = Family(self.family)
        if self.values.ndim != 2 or self.values.shape != self.observed.shape:
            raise ValueError("values and observed must be 2-d arrays of equal shape")
        n, p = self.values.shape
        if n < 2 or p < 2:
            raise ValueError(f"response matrix must be at least 2x2, got {n}x{p}")
        obs = self.values[self.observed]
        if not np.all(np.isfinite(obs)):
            raise ValueError("observed cells must be finite")
        if self.family is Family.BINARY and not np.all((obs == 0) | (obs == 1)):
            raise ValueError("binary responses must be 0 or 1")
        # canonical filler so that stored junk never leaks into arithmetic
        self.values[~self.observed] = 0.0

    @classmethod
    def from_array(cls, y, family=Family.BINARY) -> "ResponseMatrix":
        """Build from an array in which NaN marks a missing cell."""
        y = np.asarray(y, dtype=float)
        observed = ~np.isnan(y)
        return cls(np.where(observed, y, 0.0), observed, family)

    @property
    def n_respondents(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]

    @property
    def n_missing(self) -> int:
        return int((~self.observed).sum())

    def missing_cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column indices of missing cells, respondent-major."""
        return np.nonzero(~self.observed)

    def to_array(self) -> np.ndarray:
        return np.where(self.observed, self.values, np.nan)


@dataclass(frozen=True)
class ModelSpec:
    item_params: ItemParams = ItemParams.ONE_PL
    family: Family = Family.BINARY
    gamma_mode: GammaMode = GammaMode.FREE
    missing_mode: MissingMode = MissingMode.COMPLETE
    latent_dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "item_params", ItemParams(self.item_params))
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "gamma_mode", GammaMode(self.gamma_mode))
        object.__setattr__(self, "missing_mode", MissingMode(self.missing_mode))
        if int(self.latent_dim) < 1:
            raise ValueError("latent_dim must be a positive integer")

    @property
    def two_pl(self) -> bool:
        return self.item_params is ItemParams.TWO_PL

    @property
    def continuous(self) -> bool:
        return self.family is Family.CONTINUOUS

    def check_data(self, data: ResponseMatrix) -> None:
        if data.family is not self.family:
            raise ValueError(f"data family {data.family.value} does not match model {self.family.value}")
        if self.missing_mode is MissingMode.COMPLETE and data.n_missing:
            raise ValueError(
                f"{data.n_missing} missing cells with missing mode 'complete'; use mcar or mar")


def _check_positive(obj, names):
    for name in names:
        value = getattr(obj, name)
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{name} must be strictly positive, got {value!r}")


@dataclass
class Hyperparameters:
    pr_mean_theta: float = 0.0
    pr_mean_beta: float = 0.0
    pr_sd_beta: float = 1.0
    pr_mean_alpha: float = 0.5
    pr_sd_alpha: float = 1.0
    pr_mean_gamma: float = 0.5
    pr_sd_gamma: float = 1.0
    pr_a_theta: float = 0.001
    pr_b_theta: float = 0.001
    pr_a_eps: float = 0.001
    pr_b_eps: float = 0.001

    def __post_init__(self):
        _check_positive(self, ["pr_sd_beta", "pr_sd_alpha", "pr_sd_gamma",
                               "pr_a_theta", "pr_b_theta", "pr_a_eps", "pr_b_eps"])


@dataclass
class JumpingRules:
    """Standard deviations of the Gaussian random-walk proposals."""

    jump_theta: float = 1.0
    jump_beta: float = 0.4
    jump_alpha: float = 1.0
    jump_gamma: float = 0.025
    jump_z: float = 0.5
    jump_w: float = 0.5

    def __post_init__(self):
        _check_positive(self, ["jump_theta", "jump_beta", "jump_alpha",
                               "jump_gamma", "jump_z", "jump_w"])


@dataclass
class ChainState:
    """One full parameter configuration of the chain.

    ``alpha`` is None for 1PL models, ``sigma_eps_sq`` is None for binary
    data, ``imputed`` holds the current values of the missing cells in
    respondent-major order (empty unless the missing mode is MAR).
    """

    theta: np.ndarray
    beta: np.ndarray
    z: np.ndarray
    w: np.ndarray
    log_gamma: float = 0.0
    sigma_sq: float = 1.0
    alpha: Optional[np.ndarray] = None
    sigma_eps_sq: Optional[float] = None
    slab: bool = True
    imputed: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def copy(self) -> "ChainState":
        return ChainState(
            theta=self.theta.copy(), beta=self.beta.copy(), z=self.z.copy(), w=self.w.copy(),
            log_gamma=self.log_gamma, sigma_sq=self.sigma_sq,
            alpha=None if self.alpha is None else self.alpha.copy(),
            sigma_eps_sq=self.sigma_eps_sq, slab=self.slab, imputed=self.imputed.copy())

    def alpha_or_ones(self) -> np.ndarray:
        if self.alpha is None:
            return np.ones_like(self.beta)
        return self.alpha


def effective_gamma(state: ChainState, spec: ModelSpec) -> float:
    if spec.gamma_mode is GammaMode.FIXED_AT_ONE:
        return 1.0
    if spec.gamma_mode is GammaMode.SPIKE_SLAB and not state.slab:
        return 0.0
    return math.exp(state.log_gamma)


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def log_logistic(x):
    """log(1 / (1 + exp(-x))), overflow-free for any finite x."""
    x = np.asarray(x, dtype=float)
    return -(np.maximum(-x, 0.0) + np.log1p(np.exp(-np.abs(x))))


def logistic(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def linear_predictor(state: ChainState, spec: ModelSpec, k: int, i: int) -> float:
    a = 1.0 if state.alpha is None or not spec.two_pl else state.alpha[i]
    d = euclidean_distance(state.z[k], state.w[i])
    return float(a * state.theta[k] + state.beta[i] - effective_gamma(state, spec) * d)


def cell_density(y, eta, family: Family, sigma_eps_sq=None):
    """Elementwise log density of response(s) ``y`` at linear predictor ``eta``."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if Family(family) is Family.BINARY:
        # y=1 -> log p, y=0 -> log(1-p) = log_logistic(-eta)
        return np.where(y == 1.0, log_logistic(eta), log_logistic(-eta))
    return -0.5 * (LOG_2PI + np.log(sigma_eps_sq)) - 0.5 * (y - eta) ** 2 / sigma_eps_sq


def cell_log_likelihood(state: ChainState, spec: ModelSpec, k: int, i: int, y: float) -> float:
    if spec.family is Family.BINARY and y not in (0, 1):
        raise ValueError(f"binary response must be 0 or 1, got {y!r}")
    eta = linear_predictor(state, spec, k, i)
    return float(cell_density(y, eta, spec.family, state.sigma_eps_sq))


def distance_matrix(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    diff = z[:, None, :] - w[None, :, :]
    return np.sqrt(np.einsum("kid,kid->ki", diff, diff))


def eta_matrix(state: ChainState, spec: ModelSpec, gamma: Optional[float] = None) -> np.ndarray:
    g = effective_gamma(state, spec) if gamma is None else gamma
    a = state.alpha_or_ones() if spec.two_pl else np.ones_like(state.beta)
    return (np.outer(state.theta, a) + state.beta[None, :]
            - g * distance_matrix(state.z, state.w))


def working_responses(state: ChainState, spec: ModelSpec, data: ResponseMatrix):
    """Response matrix and 0/1 weights seen by the likelihood.

    Under MAR the missing cells are filled with the current imputations and
    weighted in; otherwise only observed cells carry weight.
    """
    y = data.values.copy()
    if spec.missing_mode is MissingMode.MAR:
        rows, cols = data.missing_cells()
        if rows.size:
            y[rows, cols] = state.imputed
        weight = np.ones_like(y)
    else:
        weight = data.observed.astype(float)
    return y, weight


def total_log_likelihood(state: ChainState, spec: ModelSpec, data: ResponseMatrix,
                         gamma: Optional[float] = None) -> float:
    y, weight = working_responses(state, spec, data)
    dens = cell_density(y, eta_matrix(state, spec, gamma), spec.family, state.sigma_eps_sq)
    return float(np.sum(np.where(weight > 0, dens, 0.0)))


def normal_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var


def inv_gamma_logpdf(x, shape, scale):
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - scale / x


def log_prior(state: ChainState, spec: ModelSpec, hp: Hyperparameters) -> float:
    d = spec.latent_dim
    lp = float(np.sum(normal_logpdf(state.theta, hp.pr_mean_theta, state.sigma_sq)))
    lp += float(np.sum(normal_logpdf(state.beta, hp.pr_mean_beta, hp.pr_sd_beta ** 2)))
    if spec.two_pl:
        log_a = np.log(state.alpha)
        # log-normal density of alpha: normal density of log(alpha) minus log(alpha)
        lp += float(np.sum(normal_logpdf(log_a, hp.pr_mean_alpha, hp.pr_sd_alpha ** 2) - log_a))
    if spec.gamma_mode is GammaMode.FREE or (spec.gamma_mode is GammaMode.SPIKE_SLAB and state.slab):
        lp += float(normal_logpdf(state.log_gamma, hp.pr_mean_gamma, hp.pr_sd_gamma ** 2))
    lp += inv_gamma_logpdf(state.sigma_sq, hp.pr_a_theta, hp.pr_b_theta)
    if spec.continuous:
        lp += inv_gamma_logpdf(state.sigma_eps_sq, hp.pr_a_eps, hp.pr_b_eps)
    npos = state.z.shape[0] + state.w.shape[0]
    lp += -0.5 * d * LOG_2PI * npos - 0.5 * (float(np.sum(state.z ** 2)) + float(np.sum(state.w ** 2)))
    return lp


def log_posterior(state: ChainState, spec: ModelSpec, data: ResponseMatrix,
                  hp: Hyperparameters) -> float:
    """Unnormalized log posterior."""
    return total_log_likelihood(state, spec, data) + log_prior(state, spec, hp)
