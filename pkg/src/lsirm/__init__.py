"""Bayesian latent space item response models fitted by MCMC."""

from .kernels import BACKEND as KERNEL_BACKEND
from .model import (ChainState, Family, GammaMode, Hyperparameters, ItemParams, JumpingRules,
                    MissingMode, ModelSpec, ResponseMatrix, log_prior, total_log_likelihood)
from .postprocess import (FitSummary, beta_quantiles, oblimin_rotate, point_estimates,
                          procrustes_align)
from .sampler import McmcConfig, PosteriorSamples, run_chain


def fit(data, spec=None, hp=None, jr=None, cfg=None, chain=0, progress=False):
    """Run a chain and return ``(samples, summary)`` with Procrustes-aligned positions."""
    spec = spec or ModelSpec(family=data.family)
    samples = run_chain(data, spec, hp, jr, cfg, chain=chain, progress=progress)
    summary = point_estimates(samples, procrustes_align(samples), spec)
    return samples, summary


__version__ = "0.1.0"
