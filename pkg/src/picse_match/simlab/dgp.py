"""Data-generating processes with a logistic treatment index.

Outcomes depend on covariates only through the true index, so treatment
assignment is strongly ignorable given ``x beta_true`` and the effect is the
constant ``tau``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg as sla
from scipy.special import expit

from picse_match.data.dataset import Sample
from picse_match.errors import DimensionError, GenerationWarning

CovariateFamily = Literal["gaussian_iid", "gaussian_correlated", "scaled_t"]
BetaRule = Literal["equal", "alternating", "zero"]


def replicate_rng(master_seed: int, *counters: int) -> Generator:
    """Counter-based stream keyed by (master seed, counters); independent of scheduling."""
    return Generator(Philox(SeedSequence([int(master_seed), *(int(c) for c in counters)])))


class DGPConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(gt=0)
    p: int = Field(ge=2)
    covariate_family: CovariateFamily = "gaussian_iid"
    rho: float = Field(default=0.5, gt=-1.0, lt=1.0)
    df: float = Field(default=4.0, gt=2.0)
    beta_rule: BetaRule = "equal"
    index_sd: float = Field(default=1.0, ge=0.0)
    intercept: float = 0.0
    tau: float = 1.0
    kappa: float = 1.0
    noise_sd: float = Field(default=1.0, ge=0.0)
    seed: int = Field(default=20240601, ge=0, lt=2**64)

    def sigma(self) -> np.ndarray:
        if self.covariate_family == "gaussian_correlated":
            lags = np.abs(np.subtract.outer(np.arange(self.p), np.arange(self.p)))
            return self.rho**lags
        return np.eye(self.p)

    def beta_true(self) -> np.ndarray:
        if self.beta_rule == "zero" or self.index_sd == 0:
            return np.zeros(self.p)
        beta = np.ones(self.p)
        if self.beta_rule == "alternating":
            beta[1::2] = -1.0
        scale = math.sqrt(float(beta @ self.sigma() @ beta))
        return beta * (self.index_sd / scale)


@dataclass(frozen=True)
class Truth:
    beta_true: np.ndarray
    intercept: float
    theta: np.ndarray
    tau: float
    gamma: np.ndarray
    sigma: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray


def _covariates(cfg: DGPConfig, rng: Generator) -> np.ndarray:
    if cfg.covariate_family == "scaled_t":
        return rng.standard_t(cfg.df, size=(cfg.n, cfg.p)) * math.sqrt((cfg.df - 2.0) / cfg.df)
    raw = rng.standard_normal((cfg.n, cfg.p))
    if cfg.covariate_family == "gaussian_iid":
        return raw
    return raw @ sla.cholesky(cfg.sigma(), lower=False)


def generate(cfg: DGPConfig, rng: Generator | None = None) -> tuple[Sample, Truth]:
    if cfg.p >= cfg.n:
        raise DimensionError(f"degenerate design: p={cfg.p} >= n={cfg.n}")
    rng = rng if rng is not None else replicate_rng(cfg.seed, 0)
    x = _covariates(cfg, rng)
    beta = cfg.beta_true()
    index = x @ beta
    theta = cfg.intercept + index
    z = (rng.random(cfg.n) < expit(theta)).astype(np.int8)
    gamma = cfg.kappa * beta
    mu0 = x @ gamma
    mu1 = mu0 + cfg.tau
    y = mu0 + cfg.tau * z + cfg.noise_sd * rng.standard_normal(cfg.n)

    if cfg.index_sd > 0:
        s2 = float(np.var(index, ddof=1))
        target = cfg.index_sd**2
        if not 0.25 * target <= s2 <= 4.0 * target:
            warnings.warn(
                f"generated index variance {s2:.3g} is outside [0.25, 4] x target {target:.3g}",
                GenerationWarning,
                stacklevel=2,
            )

    sample = Sample(x=x, z=z, y=y)
    truth = Truth(
        beta_true=beta,
        intercept=cfg.intercept,
        theta=theta,
        tau=cfg.tau,
        gamma=gamma,
        sigma=cfg.sigma(),
        mu0=mu0,
        mu1=mu1,
    )
    return sample, truth
