"""Synthetic response matrices with known generating parameters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ChainState, Family, ModelSpec, ResponseMatrix, distance_matrix


@dataclass
class GenSpec:
    """What to simulate.

    Parameters not fixed through ``true_params`` are drawn: theta from
    N(0, sigma_sq), beta from N(0, 1), 2PL discriminations from
    LogNormal(0, 0.3^2), respondent positions from N(0, I). Item positions
    follow ``layout``: ``"prior"`` draws them from N(0, I), ``"clustered"``
    scatters them with sd ``cluster_sd`` around ``centers`` (items assigned
    round-robin). ``gamma = 0`` generates from the plain Rasch/2PL model.
    """

    spec: ModelSpec
    n: int
    p: int
    gamma: float = 1.0
    sigma_sq: float = 1.0
    sigma_eps_sq: float = 1.0
    layout: str = "prior"
    centers: Optional[np.ndarray] = None
    cluster_sd: float = 0.25
    missing_rate: float = 0.0
    missing_mechanism: str = "none"
    true_params: Optional[ChainState] = None

    def __post_init__(self):
        if self.n < 2 or self.p < 2:
            raise ValueError("need at least 2 respondents and 2 items")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing_rate must lie in [0, 1)")
        if self.missing_rate > 0 and self.missing_mechanism == "none":
            self.missing_mechanism = "uniform"
        if self.missing_mechanism not in ("none", "uniform"):
            raise ValueError(f"unknown missing mechanism {self.missing_mechanism!r}")
        if self.layout not in ("prior", "clustered"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.gamma < 0 or self.sigma_sq <= 0 or self.sigma_eps_sq < 0:
            raise ValueError("gamma and sigma_eps_sq must be nonnegative, sigma_sq positive")

    def item_centers(self) -> np.ndarray:
        if self.centers is not None:
            return np.atleast_2d(np.asarray(self.centers, dtype=float))
        d = self.spec.latent_dim
        if d < 2:
            return np.array([[-1.5], [1.5]])
        # three centers on a circle of radius 1.5 in the first two coordinates
        ang = 2 * np.pi * np.arange(3) / 3
        c = np.zeros((3, d))
        c[:, 0] = 1.5 * np.cos(ang)
        c[:, 1] = 1.5 * np.sin(ang)
        return c

    def cluster_labels(self) -> np.ndarray:
        return np.arange(self.p) % len(self.item_centers())


def _sample_truth(gen: GenSpec, rng: np.random.Generator) -> ChainState:
    spec = gen.spec
    d = spec.latent_dim
    theta = math.sqrt(gen.sigma_sq) * rng.standard_normal(gen.n)
    beta = rng.standard_normal(gen.p)
    alpha = np.exp(0.3 * rng.standard_normal(gen.p)) if spec.two_pl else None
    z = rng.standard_normal((gen.n, d))
    if gen.layout == "clustered":
        centers = gen.item_centers()
        if centers.shape[1] != d:
            raise ValueError("cluster centers must have latent_dim columns")
        w = centers[gen.cluster_labels()] + gen.cluster_sd * rng.standard_normal((gen.p, d))
    else:
        w = rng.standard_normal((gen.p, d))
    return ChainState(
        theta=theta, beta=beta, z=z, w=w,
        log_gamma=math.log(gen.gamma) if gen.gamma > 0 else 0.0,
        slab=gen.gamma > 0, sigma_sq=gen.sigma_sq, alpha=alpha,
        sigma_eps_sq=gen.sigma_eps_sq if spec.continuous else None)


def generating_eta(state: ChainState, spec: ModelSpec) -> np.ndarray:
    """Linear predictor of the generating model; slab=False means gamma = 0."""
    g = math.exp(state.log_gamma) if state.slab else 0.0
    a = state.alpha if spec.two_pl else np.ones_like(state.beta)
    return np.outer(state.theta, a) + state.beta - g * distance_matrix(state.z, state.w)


def _mask(gen: GenSpec, rng: np.random.Generator) -> np.ndarray:
    if gen.missing_mechanism == "none" or gen.missing_rate == 0:
        return np.ones((gen.n, gen.p), dtype=bool)
    for _ in range(100):
        observed = rng.random((gen.n, gen.p)) >= gen.missing_rate
        if observed.any(axis=1).all() and observed.any(axis=0).all():
            return observed
    raise ValueError("could not draw a missingness mask without an empty row or column "
                     "in 100 attempts; lower missing_rate")


def generate(gen: GenSpec, seed: int) -> tuple[ResponseMatrix, ChainState]:
    rng = np.random.default_rng(seed)
    state = gen.true_params.copy() if gen.true_params is not None else _sample_truth(gen, rng)
    eta = generating_eta(state, gen.spec)
    if gen.spec.family is Family.BINARY:
        p = 0.5 * (1.0 + np.tanh(0.5 * eta))
        y = (rng.random(eta.shape) < p).astype(float)
    else:
        sd = math.sqrt(state.sigma_eps_sq if state.sigma_eps_sq is not None else gen.sigma_eps_sq)
        y = eta + sd * rng.standard_normal(eta.shape)
    observed = _mask(gen, rng)
    return ResponseMatrix(np.where(observed, y, 0.0), observed, gen.spec.family), state


def truth_dict(gen: GenSpec, state: ChainState) -> dict:
    out = {
        "n": gen.n, "p": gen.p,
        "model": gen.spec.item_params.value, "family": gen.spec.family.value,
        "ndim": gen.spec.latent_dim, "layout": gen.layout,
        "gamma": math.exp(state.log_gamma) if state.slab else 0.0,
        "sigma_sq": state.sigma_sq,
        "theta": state.theta.tolist(), "beta": state.beta.tolist(),
        "z": state.z.tolist(), "w": state.w.tolist(),
        "missing_rate": gen.missing_rate,
    }
    if state.alpha is not None:
        out["alpha"] = state.alpha.tolist()
    if state.sigma_eps_sq is not None:
        out["sigma_eps_sq"] = state.sigma_eps_sq
    if gen.layout == "clustered":
        out["item_cluster"] = gen.cluster_labels().tolist()
        out["centers"] = gen.item_centers().tolist()
    return out


def write_truth(path, gen: GenSpec, state: ChainState) -> None:
    with open(path, "w") as fh:
        json.dump(truth_dict(gen, state), fh, indent=2)
