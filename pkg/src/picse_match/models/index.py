"""Index models fit as roots of estimating equations.

The parameter vector ``theta`` stacks one intercept per stratum (a single
intercept without strata) ahead of the p slopes. ``a_hat`` is the mean
derivative of the score and is negative definite for both shipped families;
covariances are formed from ``-a_hat`` so that they come out PSD.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import linalg as sla

from picse_match.data.dataset import CenteredSample
from picse_match.errors import (
    ConditioningError,
    ConvergenceError,
    InvalidArgumentError,
    PenaltyWarning,
    SchemaError,
    SeparationError,
)
from picse_match.linalg import clamp_psd, condition_number, symmetrize
from picse_match.logs import get_logger
from picse_match.models.families import ScoreFamily, resolve_family

log = get_logger("index_model")

Response = Literal["treatment", "outcome"]
Estimator = Literal["inverse_information", "sandwich"]

_ESTIMATOR_ALIASES = {
    "info": "inverse_information",
    "inverse_information": "inverse_information",
    "sandwich": "sandwich",
}


@dataclass(frozen=True)
class Design:
    """Covariates, response and stratum codes in the layout the solver uses."""

    x: np.ndarray
    r: np.ndarray
    codes: np.ndarray
    n_strata: int

    @classmethod
    def from_sample(cls, s: CenteredSample, response: Response = "treatment") -> "Design":
        if response == "treatment":
            r = s.z.astype(float)
        else:
            if s.y is None:
                raise SchemaError("outcome response requested but the sample has no outcome")
            missing = np.flatnonzero(np.isnan(s.y))
            if missing.size:
                raise SchemaError("outcome missing for index-model fit", row=int(missing[0]))
            r = np.asarray(s.y, dtype=float)
        return cls(x=s.x, r=r, codes=s.codes, n_strata=s.L)

    @classmethod
    def from_arrays(cls, x: np.ndarray, r: np.ndarray, codes: np.ndarray | None = None) -> "Design":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if codes is None:
            codes = np.zeros(x.shape[0], dtype=np.intp)
        _, codes = np.unique(np.asarray(codes), return_inverse=True)
        return cls(x=x, r=np.asarray(r, dtype=float), codes=codes.astype(np.intp), n_strata=int(codes.max()) + 1)

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    @property
    def k(self) -> int:
        return self.n_strata + self.p

    def matrix(self) -> np.ndarray:
        """The (n, L + p) matrix of stratum indicators followed by covariates."""
        ind = np.zeros((self.n, self.n_strata))
        ind[np.arange(self.n), self.codes] = 1.0
        return np.hstack([ind, self.x])

    def eta(self, theta: np.ndarray) -> np.ndarray:
        return theta[: self.n_strata][self.codes] + self.x @ theta[self.n_strata :]


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 50
    tol: float = 1e-10
    separation_cap: float = 30.0
    condition_limit: float = 1e12
    response: Response = "treatment"
    max_halvings: int = 30
    penalty_warn_fraction: float = 0.1


@dataclass(frozen=True)
class IndexFit:
    beta0: np.ndarray
    beta: np.ndarray
    family: ScoreFamily
    converged: bool
    score_norm: float
    n_iter: int
    n: int
    a_hat: np.ndarray
    b_hat: np.ndarray
    dispersion: float
    cond_a: float
    cond_b: float
    c_inv_info: np.ndarray | None = None
    c_sandwich: np.ndarray | None = None
    response: Response = "treatment"
    labels: tuple[str, ...] = field(default=())

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.beta0, self.beta])

    @property
    def n_strata(self) -> int:
        return int(self.beta0.shape[0])


@dataclass(frozen=True)
class Linearization:
    beta_tilde: np.ndarray
    beta_true: np.ndarray


def _as_design(s: CenteredSample | Design, response: Response) -> Design:
    return s if isinstance(s, Design) else Design.from_sample(s, response)


def score_terms(d: Design, fam: ScoreFamily, theta: np.ndarray) -> np.ndarray:
    """Per-observation scores psi(r_i, x_i; theta), shape (n, L + p)."""
    eta = d.eta(theta)
    scale = fam.psi_c(d.r, eta) * fam.weight(d.x)
    return d.matrix() * scale[:, None]


def score_sum(d: Design, fam: ScoreFamily, theta: np.ndarray) -> np.ndarray:
    return score_terms(d, fam, theta).sum(axis=0) + fam.penalty.gradient(theta)


def mean_score(s: CenteredSample | Design, fam: ScoreFamily, theta: np.ndarray, response: Response = "treatment") -> np.ndarray:
    d = _as_design(s, response)
    return score_sum(d, fam, np.asarray(theta, dtype=float)) / d.n


def a_hat(s: CenteredSample | Design, fam: ScoreFamily, theta: np.ndarray, response: Response = "treatment") -> np.ndarray:
    d = _as_design(s, response)
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError("parameter vector must be finite")
    xt = d.matrix()
    curv = fam.dpsi_c(d.eta(theta)) * fam.weight(d.x)
    a = xt.T @ (xt * curv[:, None]) + fam.penalty.jacobian(theta)
    return symmetrize(a / d.n)


def b_hat(s: CenteredSample | Design, fam: ScoreFamily, theta: np.ndarray, response: Response = "treatment") -> np.ndarray:
    d = _as_design(s, response)
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError("parameter vector must be finite")
    psi = score_terms(d, fam, theta)
    return symmetrize(psi.T @ psi / d.n)


def _check_conditioning(a: np.ndarray, limit: float) -> float:
    cond = condition_number(a)
    if not math.isfinite(cond) or cond > limit:
        raise ConditioningError(
            f"A-hat is singular or ill-conditioned (condition number {cond:.3e}); "
            "trim explanatory variables that contribute relatively little to the index model",
            assumption="A3",
        )
    return cond


def _full_covariance(a: np.ndarray, b: np.ndarray, n: int, dispersion: float, estimator: str, limit: float) -> np.ndarray:
    _check_conditioning(a, limit)
    if estimator == "inverse_information":
        cov = dispersion * sla.inv(-a) / n
    else:
        a_inv = sla.inv(a)
        cov = a_inv @ b @ a_inv.T / n
    return clamp_psd(cov, what=f"{estimator} covariance")


def cov_beta(fit: IndexFit, estimator: str = "inverse_information", *, condition_limit: float = 1e12) -> np.ndarray:
    """Slope-block covariance estimate; intercepts never enter a PIC."""
    try:
        estimator = _ESTIMATOR_ALIASES[estimator]
    except KeyError as exc:
        raise InvalidArgumentError(f"unknown covariance estimator {estimator!r}") from exc
    cached = fit.c_inv_info if estimator == "inverse_information" else fit.c_sandwich
    if cached is not None:
        return cached
    full = _full_covariance(fit.a_hat, fit.b_hat, fit.n, fit.dispersion, estimator, condition_limit)
    k0 = fit.n_strata
    return full[k0:, k0:]


def _score_limit(d: Design, fam: ScoreFamily, tol: float) -> float:
    """Convergence bar on the summed score, relative to the size of its terms."""
    magnitude = np.abs(d.matrix()).T @ np.abs(d.r * fam.weight(d.x))
    return tol * max(math.sqrt(d.n), float(np.linalg.norm(magnitude)))


def fit(
    s: CenteredSample | Design,
    fam: ScoreFamily | str = "logistic",
    opts: FitOptions | None = None,
) -> IndexFit:
    opts = opts or FitOptions()
    fam = resolve_family(fam)
    d = _as_design(s, opts.response)
    labels = s.labels if isinstance(s, CenteredSample) else tuple(str(i) for i in range(d.n_strata))

    xt = d.matrix()
    cond_x = condition_number(xt * np.sqrt(np.abs(fam.weight(d.x)))[:, None])
    if not math.isfinite(cond_x) or cond_x**2 > opts.condition_limit:
        raise ConditioningError(
            f"design (intercepts + covariates) is rank deficient or ill-conditioned "
            f"(condition number {cond_x:.3e})",
            assumption="A3/A11",
        )

    theta = np.zeros(d.k)
    if fam.one_step:
        w = np.sqrt(fam.weight(d.x))
        theta = sla.lstsq(xt * w[:, None], d.r * w)[0]

    limit = _score_limit(d, fam, opts.tol)
    g = score_sum(d, fam, theta)
    norm = float(np.linalg.norm(g))
    n_iter = 0
    # least squares is already the exact root; what is left is rounding
    while not fam.one_step and norm > limit:
        if n_iter >= opts.max_iter:
            raise ConvergenceError(
                f"no root after {opts.max_iter} Newton iterations (score norm {norm:.3e})",
                last_iterate=theta,
                score_norm=norm,
            )
        n_iter += 1
        jac = d.n * a_hat(d, fam, theta)
        try:
            step = sla.solve(jac, -g, assume_a="sym")
        except (sla.LinAlgError, ValueError) as exc:
            raise ConditioningError("score Jacobian is singular during Newton iteration", assumption="A3") from exc

        t = 1.0
        for _ in range(opts.max_halvings):
            candidate = theta + t * step
            g_new = score_sum(d, fam, candidate)
            norm_new = float(np.linalg.norm(g_new))
            if np.isfinite(norm_new) and norm_new < norm:
                break
            t *= 0.5
        else:
            raise ConvergenceError(
                f"step-halving failed to reduce the score norm {norm:.3e}",
                last_iterate=theta,
                score_norm=norm,
            )
        theta, g, norm = candidate, g_new, norm_new
        log.debug("newton iter=%d step=%.3g score_norm=%.3e", n_iter, t, norm)

        if fam.kind == "logistic" and np.max(np.abs(theta)) > opts.separation_cap and norm > limit:
            raise SeparationError(
                f"coefficients exceed {opts.separation_cap:g} with score norm {norm:.3e}; "
                "treatment is (quasi-)perfectly separated by the covariates",
                last_iterate=theta,
                score_norm=norm,
            )

    alpha = fam.penalty.gradient(theta)
    if np.linalg.norm(alpha) > opts.penalty_warn_fraction * math.sqrt(d.n):
        warnings.warn(
            f"penalty gradient norm {np.linalg.norm(alpha):.3g} is not small relative to sqrt(n)",
            PenaltyWarning,
            stacklevel=2,
        )

    a = a_hat(d, fam, theta)
    b = b_hat(d, fam, theta)
    dispersion = fam.dispersion(d.r, d.eta(theta), d.k)
    cond_a = condition_number(a)
    cond_b = condition_number(b)
    covs: dict[str, np.ndarray | None] = {}
    for estimator in ("inverse_information", "sandwich"):
        try:
            full = _full_covariance(a, b, d.n, dispersion, estimator, opts.condition_limit)
            covs[estimator] = full[d.n_strata :, d.n_strata :]
        except ConditioningError as exc:
            log.warning("%s covariance unavailable: %s", estimator, exc)
            covs[estimator] = None

    log.info(
        "fit %s: n=%d p=%d iterations=%d score_norm=%.3e cond(A)=%.3e cond(B)=%.3e",
        fam.kind, d.n, d.p, n_iter, norm, cond_a, cond_b,
    )
    return IndexFit(
        beta0=theta[: d.n_strata].copy(),
        beta=theta[d.n_strata :].copy(),
        family=fam,
        converged=True,
        score_norm=norm,
        n_iter=n_iter,
        n=d.n,
        a_hat=a,
        b_hat=b,
        dispersion=dispersion,
        cond_a=cond_a,
        cond_b=cond_b,
        c_inv_info=covs["inverse_information"],
        c_sandwich=covs["sandwich"],
        response=opts.response,
        labels=labels,
    )


def true_parameter(s: CenteredSample, intercept: float, beta: np.ndarray) -> np.ndarray:
    """Map a raw-scale truth (intercept + x beta) onto centered coordinates."""
    beta = np.asarray(beta, dtype=float)
    return np.concatenate([intercept + s.means @ beta, beta])


def linearize(
    s: CenteredSample | Design,
    fam: ScoreFamily | str,
    beta_true: np.ndarray,
    response: Response = "treatment",
    *,
    condition_limit: float = 1e12,
) -> Linearization:
    fam = resolve_family(fam)
    d = _as_design(s, response)
    theta = np.asarray(beta_true, dtype=float)
    if theta.shape != (d.k,):
        raise InvalidArgumentError(f"beta_true must have length {d.k} (intercepts + slopes)")
    a = a_hat(d, fam, theta)
    _check_conditioning(a, condition_limit)
    g = score_sum(d, fam, theta) / d.n
    tilde = theta - sla.solve(a, g)
    return Linearization(beta_tilde=tilde, beta_true=theta)


def index_values(fit: IndexFit, s: CenteredSample) -> np.ndarray:
    return s.x @ fit.beta + fit.beta0[s.codes]
