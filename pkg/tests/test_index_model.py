from dataclasses import dataclass

import numpy as np
import pytest
from scipy import linalg as sla

from picse_match.data.dataset import Sample, center
from picse_match.errors import ConditioningError, ConvergenceError, InvalidArgumentError, PenaltyWarning, SchemaError
from picse_match.models.families import LinearFamily, LogisticFamily, resolve_family
from picse_match.models.index import (
    Design,
    FitOptions,
    a_hat,
    b_hat,
    cov_beta,
    fit,
    index_values,
    linearize,
    mean_score,
    true_parameter,
)
from picse_match.simlab.dgp import DGPConfig, generate
from picse_match.simlab.identities import check_jacobian, check_linear_self_linearization


def test_resolve_family():
    assert isinstance(resolve_family("logistic"), LogisticFamily)
    assert isinstance(resolve_family("linear"), LinearFamily)
    with pytest.raises(InvalidArgumentError):
        resolve_family("probit")


def test_logistic_fit_solves_score_equation(toy_centered):
    fitted = fit(toy_centered)
    assert fitted.converged
    assert fitted.n_iter > 0
    g = mean_score(toy_centered, fitted.family, fitted.theta)
    assert np.max(np.abs(g)) < 1e-9


def test_logistic_fit_recovers_truth():
    sample, truth = generate(DGPConfig(n=5000, p=3, seed=7))
    cs = center(sample)
    fitted = fit(cs)
    se = np.sqrt(np.diag(cov_beta(fitted)))
    assert np.all(np.abs(fitted.beta - truth.beta_true) < 4 * se)


def test_a_hat_is_negative_definite(toy_centered):
    fitted = fit(toy_centered)
    vals = np.linalg.eigvalsh(a_hat(toy_centered, fitted.family, fitted.theta))
    assert vals.max() < 0


def test_jacobian_matches_finite_differences():
    verdict = check_jacobian(3)
    assert verdict.passed, verdict.detail


def test_linear_family_is_least_squares(rng):
    x = rng.normal(size=(200, 3))
    y = 1.0 + x @ np.array([0.5, -1.0, 2.0]) + rng.normal(size=200)
    d = Design.from_arrays(x - x.mean(axis=0), y)
    fitted = fit(d, "linear")
    coef = sla.lstsq(d.matrix(), y)[0]
    assert fitted.n_iter == 0
    assert np.allclose(fitted.theta, coef, atol=1e-10)


def test_linear_information_covariance_is_classical(rng):
    n = 150
    x = rng.normal(size=(n, 2))
    xc = x - x.mean(axis=0)
    y = xc @ np.array([1.0, 2.0]) + rng.normal(size=n)
    fitted = fit(Design.from_arrays(xc, y), "linear")
    resid = y - fitted.beta0[0] - xc @ fitted.beta
    sigma2 = resid @ resid / (n - 3)
    expected = sigma2 * np.linalg.inv(xc.T @ xc)
    assert np.allclose(cov_beta(fitted, "info"), expected, rtol=1e-8)


def test_sandwich_close_to_information_when_model_is_right():
    sample, _ = generate(DGPConfig(n=4000, p=3, seed=11))
    fitted = fit(center(sample))
    info = cov_beta(fitted, "inverse_information")
    sand = cov_beta(fitted, "sandwich")
    assert np.linalg.norm(info - sand) / np.linalg.norm(info) < 0.3


def test_cov_beta_rejects_unknown_estimator(toy_centered):
    with pytest.raises(InvalidArgumentError):
        cov_beta(fit(toy_centered), "jackknife")


def test_linear_self_linearization():
    verdict = check_linear_self_linearization(10)
    assert verdict.passed, verdict.detail


def test_linearize_checks_length(toy_centered):
    with pytest.raises(InvalidArgumentError):
        linearize(toy_centered, "logistic", np.zeros(2))


def test_separation_is_reported(rng):
    t = rng.normal(size=200)
    x = np.column_stack([t, rng.normal(size=200)])
    z = (t > 0).astype(int)
    with pytest.raises(ConvergenceError):
        fit(center(Sample(x=x, z=z)))


def test_collinear_design_names_assumption(rng):
    t = rng.normal(size=100)
    x = np.column_stack([t, 2.0 * t])
    z = np.tile([0, 1], 50)
    with pytest.raises(ConditioningError) as info:
        fit(center(Sample(x=x, z=z)))
    assert info.value.assumption == "A3/A11"


def test_outcome_response_needs_outcome(rng):
    cs = center(Sample(x=rng.normal(size=(20, 2)), z=np.tile([0, 1], 10)))
    with pytest.raises(SchemaError):
        Design.from_sample(cs, "outcome")


def test_true_parameter_and_index_values(dgp_draw):
    sample, truth = dgp_draw
    cs = center(sample)
    theta = true_parameter(cs, truth.intercept, truth.beta_true)
    d = Design.from_sample(cs)
    assert np.allclose(d.eta(theta), truth.theta)
    fitted = fit(cs)
    assert np.allclose(index_values(fitted, cs), d.eta(fitted.theta))


def test_stratified_fit_has_one_intercept_per_stratum(rng):
    n = 400
    x = rng.normal(size=(n, 2))
    stratum = np.repeat(["north", "south"], n // 2)
    shift = np.where(stratum == "north", -0.5, 0.5)
    z = (rng.random(n) < 1 / (1 + np.exp(-(shift + x @ np.array([0.8, -0.4]))))).astype(int)
    fitted = fit(center(Sample(x=x, z=z, stratum=stratum)))
    assert fitted.n_strata == 2
    assert fitted.labels == ("north", "south")
    assert fitted.beta0[0] < fitted.beta0[1]


@dataclass(frozen=True)
class Ridge:
    lam: float

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return -self.lam * theta

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        return -self.lam * np.eye(theta.shape[0])


def test_large_penalty_warns_and_shrinks(toy_centered):
    plain = fit(toy_centered)
    with pytest.warns(PenaltyWarning):
        ridged = fit(toy_centered, resolve_family("logistic", penalty=Ridge(50.0)))
    assert ridged.converged
    assert np.linalg.norm(ridged.beta) < np.linalg.norm(plain.beta)


def test_b_hat_is_psd_and_close_to_information(toy_centered):
    fitted = fit(toy_centered)
    b = b_hat(toy_centered, fitted.family, fitted.theta)
    assert np.allclose(b, b.T)
    assert np.linalg.eigvalsh(b).min() >= 0
    a = a_hat(toy_centered, fitted.family, fitted.theta)
    assert np.linalg.norm(b + a) / np.linalg.norm(a) < 0.5


def test_linear_fit_at_large_scale(rng):
    n = 2000
    x = np.column_stack([rng.normal(scale=1e3, size=n), rng.normal(size=n)])
    y = 1e5 + 50.0 * x[:, 0] + 1e4 * x[:, 1] + rng.normal(scale=1e4, size=n)
    fitted = fit(center(Sample(x=x, z=np.tile([0, 1], n // 2), y=y)), "linear", FitOptions(response="outcome"))
    assert fitted.converged
    assert fitted.n_iter == 0
    se = np.sqrt(np.diag(cov_beta(fitted)))
    assert np.all(np.abs(fitted.beta - [50.0, 1e4]) < 5 * se)


def test_logistic_fit_at_large_scale(rng):
    n = 2000
    x = np.column_stack([rng.normal(scale=1e3, size=n), rng.normal(scale=1e-2, size=n)])
    eta = 1e-3 * x[:, 0] + 50.0 * x[:, 1]
    z = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(int)
    fitted = fit(center(Sample(x=x, z=z)))
    assert fitted.converged
    se = np.sqrt(np.diag(cov_beta(fitted)))
    assert np.all(np.abs(fitted.beta - [1e-3, 50.0]) < 5 * se)


EIGHT_X = np.array(
    [[-1.5, 0.3], [-0.7, -1.1], [-0.2, 0.8], [0.1, 0.5], [0.4, -0.6], [0.9, 1.2], [1.3, -0.4], [-0.3, 0.2]]
)
EIGHT_Z = np.array([0, 0, 1, 0, 1, 0, 1, 1])


def _irls(xt: np.ndarray, z: np.ndarray, iters: int = 100) -> np.ndarray:
    coef = np.zeros(xt.shape[1])
    for _ in range(iters):
        mu = 1 / (1 + np.exp(-xt @ coef))
        w = mu * (1 - mu)
        coef = coef + np.linalg.solve(xt.T @ (xt * w[:, None]), xt.T @ (z - mu))
    return coef


def test_logistic_fit_matches_irls_on_eight_rows():
    xc = EIGHT_X - EIGHT_X.mean(axis=0)
    fitted = fit(Design.from_arrays(xc, EIGHT_Z))
    expected = _irls(np.column_stack([np.ones(8), xc]), EIGHT_Z)
    assert np.allclose(fitted.theta, expected, atol=1e-8)
