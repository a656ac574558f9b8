"""Gaussian model-X knockoffs from a (known or estimated) covariance.

Given Sigma and a feasibility vector s, knockoffs are drawn from the exact
conditional law: each row gets mean x (I - Sigma^{-1} D) and the shared
conditional covariance V = 2D - D Sigma^{-1} D, D = diag(s), so that the
stacked vector (X, X_tilde) has covariance [[Sigma, Sigma - D],
[Sigma - D, Sigma]]. The equi-correlated rule s_j = min(2 lambda_min(Sigma),
tr(Sigma)/p) keeps V inside the PSD cone.

All inverses go through Cholesky solves; V passes through assert_psd with a
jitter budget of 1e-6 times its mean diagonal before factorization, and any
jitter actually spent is reported on the warning channel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._rng import NS_GAUSSIAN, resolve_seed, substream
from .covariance import assert_psd
from .errors import ContractViolationError, NonPsdError, PsdRepairWarning

__all__ = [
    "GaussianKnockoffSampler",
    "equicorrelated_s",
    "build_sampler",
    "sample_knockoffs",
]

V_JITTER_SCALE = 1e-6  # of mean diagonal, total factorization budget
LAMBDA_MIN_CLAMP = 1e-10


@dataclass(frozen=True)
class GaussianKnockoffSampler:
    """Frozen sampling plan: everything precomputed except the Gaussian draw.

    conditional_cov_cholesky is lower-triangular with L L^T equal to the
    conditional covariance V (plus any jitter recorded in jitter_used).
    """

    sigma: np.ndarray
    sigma_inv: np.ndarray
    s: np.ndarray
    mean: np.ndarray
    shift: np.ndarray  # I - Sigma^{-1} D, applied to centered rows
    conditional_cov: np.ndarray
    conditional_cov_cholesky: np.ndarray
    jitter_used: float

    @property
    def p(self):
        return self.sigma.shape[0]


def _validate_sigma(sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] < 1:
        raise ContractViolationError(f"sigma must be square, got {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise ContractViolationError("sigma contains non-finite values")
    return sigma


def equicorrelated_s(sigma):
    """Equi-correlated feasibility vector: min(2 lambda_min, tr/p) everywhere.

    lambda_min is clamped below at 1e-10 so nearly singular covariances
    degrade into near-copy knockoffs instead of failing.
    """
    sigma = _validate_sigma(sigma)
    p = sigma.shape[0]
    lam_min = max(float(np.linalg.eigvalsh(sigma)[0]), LAMBDA_MIN_CLAMP)
    s_val = min(2.0 * lam_min, float(np.trace(sigma)) / p)
    return np.full(p, s_val)


def _cholesky_with_ladder(m, budget, already_spent):
    """Lower Cholesky factor, escalating diagonal jitter within the budget."""
    scale = max(float(np.trace(m)) / m.shape[0], 1e-300)
    eps = 0.0
    for _ in range(40):
        try:
            return np.linalg.cholesky(m + eps * np.eye(m.shape[0])), eps
        except np.linalg.LinAlgError:
            eps = max(eps * 10.0, scale * 1e-15)
            if already_spent + eps > budget:
                raise NonPsdError(
                    f"Cholesky needs jitter beyond the budget {budget:.3e}"
                ) from None
    raise NonPsdError("Cholesky failed to stabilize within the jitter ladder")


def build_sampler(sigma, s=None, mean=None):
    """Precompute the knockoff sampling plan for ``sigma``.

    Parameters
    ----------
    sigma : ndarray of shape (p, p)
        Target covariance, symmetric positive definite (PSD repairable
        within the jitter budget).
    s : ndarray, optional
        Feasibility vector; defaults to the equi-correlated rule.
    mean : ndarray, optional
        Column means of the modeled Gaussian; defaults to zero, matching
        data generated as centered rows.
    """
    sigma = _validate_sigma(sigma)
    p = sigma.shape[0]
    sigma, _ = assert_psd(sigma, jitter_max=V_JITTER_SCALE * max(np.trace(sigma) / p, 1e-300))
    if s is None:
        s = equicorrelated_s(sigma)
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (p,):
        raise ContractViolationError(f"s must have shape ({p},), got {s.shape}")
    if np.any(s < 0):
        raise ContractViolationError("s must be nonnegative")
    if mean is None:
        mean = np.zeros(p)
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != (p,):
        raise ContractViolationError(f"mean must have shape ({p},), got {mean.shape}")

    chol_sigma, eps_sigma = _cholesky_with_ladder(
        sigma, budget=V_JITTER_SCALE * float(np.trace(sigma)) / p, already_spent=0.0
    )
    if eps_sigma > 0:
        warnings.warn(
            f"sigma needed diagonal jitter {eps_sigma:.3e} to factorize",
            PsdRepairWarning,
            stacklevel=2,
        )
    ident = np.eye(p)
    sigma_inv = linalg.cho_solve((chol_sigma, True), ident)
    sigma_inv = (sigma_inv + sigma_inv.T) / 2.0
    b = sigma_inv * s[None, :]  # Sigma^{-1} D
    v = 2.0 * np.diag(s) - s[:, None] * b
    v = (v + v.T) / 2.0
    budget = V_JITTER_SCALE * max(float(np.trace(v)) / p, 1e-300)
    v_fixed, eps_psd = assert_psd(v, jitter_max=budget)
    chol_v, eps_chol = _cholesky_with_ladder(v_fixed, budget=budget, already_spent=eps_psd)
    if eps_chol > 0:
        warnings.warn(
            f"conditional covariance needed extra jitter {eps_chol:.3e} to factorize",
            PsdRepairWarning,
            stacklevel=2,
        )
    return GaussianKnockoffSampler(
        sigma=sigma,
        sigma_inv=sigma_inv,
        s=s,
        mean=mean,
        shift=ident - b,
        conditional_cov=v,
        conditional_cov_cholesky=chol_v,
        jitter_used=float(eps_psd + eps_chol),
    )


def sample_knockoffs(sampler, x, seed=None, strict=False):
    """Draw one knockoff copy of ``x`` under the sampler's Gaussian model.

    Deterministic for a fixed seed: the Gaussian block is drawn from the
    (seed, module) substream in one shot, so the result does not depend on
    how callers schedule work.
    """
    seed = resolve_seed(seed, strict=strict)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != sampler.p:
        raise ContractViolationError(
            f"x must be 2-d with {sampler.p} columns, got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ContractViolationError("x contains non-finite values")
    rng = substream(seed, NS_GAUSSIAN)
    z = rng.standard_normal(x.shape)
    mu = sampler.mean + (x - sampler.mean) @ sampler.shift
    return mu + z @ sampler.conditional_cov_cholesky.T
