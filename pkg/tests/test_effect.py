import math

import numpy as np
import pytest

from picse_match.effect.estimate import FineStratification, WeightScheme, psi_value, tau_hat
from picse_match.effect.oracle import (
    assignment_distribution,
    assignment_probs,
    discrepancy_bound,
    max_matched_spread,
    msps_err_check,
    oracle_root,
    psi_tilde_value,
)
from picse_match.errors import EstimateUndefinedError, FineStratumError, InvalidArgumentError, SchemaError
from picse_match.pipeline import run_pipeline
from picse_match.simlab.identities import check_assignment_probs, check_effect_regression, check_msps

PAIRS = FineStratification(np.array([0, 0, 1, 1, -1]))
PAIRS_Z = np.array([1, 0, 0, 1, 1])
PAIRS_Y = np.array([3.0, 1.0, 2.0, 5.0, 9.0])


def test_tau_hat_on_pairs_is_mean_difference():
    est = tau_hat(PAIRS, PAIRS_Y, PAIRS_Z)
    assert est.tau_hat == pytest.approx(2.5)
    assert est.n_sets == 2
    assert est.n_informative == 2
    assert est.denominator == pytest.approx(1.0)


def test_tau_hat_is_root_with_unit_slope():
    est = tau_hat(PAIRS, PAIRS_Y, PAIRS_Z)
    assert psi_value(PAIRS, PAIRS_Y, PAIRS_Z, "uniform", est.tau_hat) == pytest.approx(0.0, abs=1e-12)
    assert psi_value(PAIRS, PAIRS_Y, PAIRS_Z, "uniform", est.tau_hat + 2.0) == pytest.approx(-2.0)


def test_effect_matches_set_indicator_regression():
    verdict = check_effect_regression(20)
    assert verdict.passed, verdict.detail


def test_att_weights_give_each_treated_unit_equal_say():
    strat = FineStratification(np.array([0, 0, 0, 1, 1]))
    z = np.array([1, 0, 0, 1, 0])
    y = np.array([4.0, 1.0, 3.0, 10.0, 4.0])
    assert tau_hat(strat, y, z, "att").tau_hat == pytest.approx(4.0)
    assert tau_hat(strat, y, z, "uniform").tau_hat == pytest.approx(26.0 / 7.0)


def test_contributions_sum_to_estimate():
    strat = FineStratification(np.array([0, 0, 0, 1, 1, 2, 2, -1]))
    z = np.array([1, 0, 0, 1, 0, 0, 1, 0])
    y = np.array([4.0, 1.0, 3.0, 10.0, 4.0, 0.5, 0.0, 7.0])
    est = tau_hat(strat, y, z, "att")
    frame = est.to_frame()
    assert list(frame["size"]) == [3, 2, 2]
    assert frame["contribution"].sum() == pytest.approx(est.tau_hat)


def test_uninformative_sets_are_ignored():
    strat = FineStratification(np.array([0, 0, 1, 1]))
    z = np.array([1, 1, 1, 0])
    y = np.array([100.0, -50.0, 3.0, 1.0])
    est = tau_hat(strat, y, z)
    assert est.tau_hat == pytest.approx(2.0)
    assert est.n_informative == 1


def test_all_singletons_is_undefined():
    strat = FineStratification(np.full(4, -1))
    with pytest.raises(EstimateUndefinedError):
        tau_hat(strat, np.zeros(4), np.array([1, 0, 1, 0]))
    with pytest.raises(EstimateUndefinedError):
        psi_value(strat, np.zeros(4), np.array([1, 0, 1, 0]), "uniform", 0.0)


def test_missing_outcome_in_matched_set():
    y = PAIRS_Y.copy()
    y[3] = np.nan
    with pytest.raises(SchemaError) as info:
        tau_hat(PAIRS, y, PAIRS_Z)
    assert info.value.row == 3
    y = PAIRS_Y.copy()
    y[4] = np.nan
    assert tau_hat(PAIRS, y, PAIRS_Z).tau_hat == pytest.approx(2.5)


def test_unknown_weight_scheme():
    with pytest.raises(InvalidArgumentError):
        WeightScheme("ipw")  # type: ignore[arg-type]


def test_assignment_probs_small_cases():
    assert assignment_probs(np.array([0.0, math.log(2.0)]), np.array([0, 1])) == pytest.approx(2.0 / 3.0)
    assert assignment_probs(np.zeros(3), np.array([1, 1, 0])) == pytest.approx(1.0 / 3.0)
    assert assignment_probs(np.array([0.4, -1.0]), np.array([0, 0])) == 1.0
    with pytest.raises(FineStratumError):
        assignment_probs(np.zeros(4), np.array([1, 1, 0, 0]))
    with pytest.raises(InvalidArgumentError):
        assignment_probs(np.zeros(3), np.array([1, 0]))


def test_assignment_probs_match_brute_force():
    verdict = check_assignment_probs(500)
    assert verdict.passed, verdict.detail


def test_assignment_distribution_sums_to_one():
    patterns, probs = assignment_distribution(np.array([0.2, -0.5, 1.1, 0.0]), 3)
    assert patterns.shape == (4, 4)
    assert np.all(patterns.sum(axis=1) == 3)
    assert probs.sum() == pytest.approx(1.0)


def test_msps_inequalities_hold():
    verdict = check_msps(500)
    assert verdict.passed, verdict.detail


def test_msps_rejects_spread_above_delta():
    with pytest.raises(InvalidArgumentError):
        msps_err_check([np.array([0.0, 0.5])], 0.1)
    with pytest.raises(InvalidArgumentError):
        msps_err_check([np.array([0.0, 0.0])], -1.0)
    res = msps_err_check([np.array([0.0, 0.0, 0.0])], 0.0)
    assert res.eq46_ok and res.eq80_ok
    assert res.max_lhs46 == pytest.approx(0.0, abs=1e-12)


def test_oracle_equation_equals_observed_for_flat_index():
    theta = np.array([0.3, 0.3, -1.0, -1.0, 2.0])
    for eta in (0.0, 1.7):
        oracle = psi_tilde_value(PAIRS, PAIRS_Y, PAIRS_Z, "uniform", theta, eta)
        observed = psi_value(PAIRS, PAIRS_Y, PAIRS_Z, "uniform", eta)
        assert oracle == pytest.approx(observed)
    assert max_matched_spread(PAIRS, theta) == 0.0


def test_discrepancy_bound_scales_with_spread():
    v_abs = np.ones(2)
    assert discrepancy_bound(0.0, PAIRS, PAIRS_Z, "uniform", v_abs) == 0.0
    assert discrepancy_bound(0.1, PAIRS, PAIRS_Z, "uniform", v_abs) == pytest.approx(math.expm1(0.4))
    with pytest.raises(InvalidArgumentError):
        discrepancy_bound(0.1, PAIRS, PAIRS_Z, "uniform", np.ones(3))


def test_oracle_root_recovers_constant_effect(dgp_draw):
    sample, truth = dgp_draw
    match = run_pipeline(sample).match
    for scheme in ("uniform", "att"):
        root = oracle_root(match, sample.z, scheme, truth.mu1, truth.mu0)
        assert root == pytest.approx(truth.tau)


def test_pipeline_estimate_is_near_truth(dgp_draw):
    sample, truth = dgp_draw
    match = run_pipeline(sample, method="optimal").match
    est = tau_hat(match, sample.y, sample.z)
    assert abs(est.tau_hat - truth.tau) < 0.5
