import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picse_match.errors import DegenerateIndexWarning, InvalidArgumentError
from picse_match.matching.caliper import (
    CaliperPolicy,
    PairVerdict,
    caliper_quantities,
    chaos_bound,
    eligible,
    excess,
    hard_limit,
    index_error_distance,
    index_error_distances,
    intrinsic_dimension,
    make_policy,
    nominal_sup,
    normalize_policy,
    pic_se,
    rr_caliper,
    s_perp,
    z_star,
)
from picse_match.models.index import fit
from picse_match.simlab.identities import check_s_perp_closed_form, check_u_statistic


def test_z_star_values():
    assert z_star(1) == pytest.approx(1.17741, abs=1e-5)
    assert z_star(500) == pytest.approx(math.sqrt(2 * math.log(1000)))
    with pytest.raises(InvalidArgumentError):
        z_star(0)


def test_s_perp_annihilates_index_direction(rng):
    a = rng.normal(size=(5, 5))
    S = a @ a.T + np.eye(5)
    beta = rng.normal(size=5)
    sp = s_perp(S, beta)
    assert np.allclose(sp @ beta, 0.0, atol=1e-10)
    assert np.linalg.eigvalsh(sp).min() > -1e-10


def test_s_perp_closed_form_identity():
    verdict = check_s_perp_closed_form(20)
    assert verdict.passed, verdict.detail


def test_s_perp_degenerate_index_warns():
    S = np.eye(3)
    with pytest.warns(DegenerateIndexWarning):
        out = s_perp(S, np.zeros(3))
    assert np.array_equal(out, S)


def test_pic_se_isotropic():
    assert pic_se(np.eye(4), 0.01 * np.eye(4)) == pytest.approx(math.sqrt(0.08))
    assert pic_se(np.eye(4), np.zeros((4, 4))) == 0.0
    with pytest.raises(InvalidArgumentError):
        pic_se(np.eye(3), np.eye(4))


def test_pic_se_is_u_statistic():
    verdict = check_u_statistic(4)
    assert verdict.passed, verdict.detail


def test_index_error_distances_match_pairwise(rng):
    C = np.diag([0.04, 0.01, 0.02])
    xt = rng.normal(size=(4, 3))
    xc = rng.normal(size=(6, 3))
    root = np.sqrt(C)
    grid = index_error_distances(xt @ root, xc @ root)
    assert grid.shape == (4, 6)
    assert grid[2, 5] == pytest.approx(index_error_distance(xt[2], xc[5], C))


def test_nominal_sup_and_hard_limit():
    factor = math.sqrt(math.log(100) / 4)
    assert nominal_sup(0.1, 100, 250, 5) == pytest.approx(0.1 * (1 + factor))
    assert hard_limit(0.1, 100, 250, 5) == pytest.approx(0.1 * (2 + factor))
    assert hard_limit(0.1, 1, 9, 3) == pytest.approx(0.2)
    with pytest.raises(InvalidArgumentError):
        nominal_sup(0.1, 10, 10, 1)


def test_excess_is_clipped():
    assert excess(0.1, 0.3) == 0.0
    assert excess(0.5, 0.3) == pytest.approx(0.2)
    assert np.allclose(excess(np.array([0.1, 0.4]), 0.3), [0.0, 0.1])


def test_eligible_verdicts():
    picse, n0, n1, p = 0.1, 100, 100, 5
    ns = nominal_sup(picse, n0, n1, p)
    hl = hard_limit(picse, n0, n1, p)
    assert eligible(0.0, 0.0, picse, n0, n1, p) == PairVerdict.ELIGIBLE
    assert eligible(0.9 * z_star(100) * picse, ns, picse, n0, n1, p) == PairVerdict.ELIGIBLE
    assert eligible(1.1 * z_star(100) * picse, 0.0, picse, n0, n1, p) == PairVerdict.INELIGIBLE_PIC
    assert eligible(0.0, hl * (1 + 1e-12), picse, n0, n1, p) == PairVerdict.INELIGIBLE_SED
    assert eligible(0.0, hl + 1.0, picse, n0, n1, p) == PairVerdict.INELIGIBLE_SED
    # Halfway between the nominal supremum and the hard limit halves the allowance.
    mid = ns + 0.5 * picse
    assert eligible(0.49 * z_star(100) * picse, mid, picse, n0, n1, p) == PairVerdict.ELIGIBLE
    assert eligible(0.51 * z_star(100) * picse, mid, picse, n0, n1, p) == PairVerdict.INELIGIBLE_PIC


def test_eligible_exact_tie_when_picse_vanishes():
    assert eligible(0.0, 0.0, 0.0, 50, 50, 3) == PairVerdict.ELIGIBLE
    assert eligible(1e-9, 0.0, 0.0, 50, 50, 3) == PairVerdict.INELIGIBLE_PIC
    with pytest.raises(InvalidArgumentError):
        eligible(0.0, -1.0, 0.1, 50, 50, 3)


@settings(max_examples=200, deadline=None)
@given(
    pic=st.floats(min_value=-5, max_value=5, allow_nan=False),
    sed=st.floats(min_value=0, max_value=5, allow_nan=False),
    picse=st.floats(min_value=1e-6, max_value=2, allow_nan=False),
    n0=st.integers(min_value=1, max_value=5000),
    n1=st.integers(min_value=1, max_value=5000),
    p=st.integers(min_value=2, max_value=40),
)
def test_narrowed_caliper_is_inside_fixed_and_hard_limits(pic, sed, picse, n0, n1, p):
    verdict = eligible(pic, sed, picse, n0, n1, p)
    if verdict == PairVerdict.ELIGIBLE:
        c_n = z_star(min(n0, n1))
        assert abs(pic) <= c_n * picse * (1 + 1e-12)
        assert sed <= hard_limit(picse, n0, n1, p) * (1 + 1e-12)
        # Shrinking the index error distance never revokes eligibility.
        assert eligible(pic, 0.5 * sed, picse, n0, n1, p) == PairVerdict.ELIGIBLE


def test_intrinsic_dimension():
    assert intrinsic_dimension(np.eye(6)) == pytest.approx(6.0)
    v = np.array([1.0, 2.0, 2.0])
    assert intrinsic_dimension(np.outer(v, v)) == pytest.approx(1.0)
    assert intrinsic_dimension(np.zeros((3, 3))) == 0.0


def test_chaos_bound_single_pair_is_root_mean_square():
    sigma, C = np.eye(4), 0.01 * np.eye(4)
    assert chaos_bound(sigma, C, 1) == pytest.approx(math.sqrt(0.08))
    assert chaos_bound(sigma, C, 100) == pytest.approx(math.sqrt(0.08) * (1 + math.sqrt(math.log(100) / 4)))


def test_rr_caliper():
    assert rr_caliper(np.array([0.0, 1.0, 2.0])) == pytest.approx(0.2)
    assert rr_caliper(np.array([3.0])) == 0.0


def test_policy_names():
    assert normalize_policy("picse-narrowed") == "picse_narrowed"
    assert normalize_policy("hard66") == "picse_hard66"
    assert normalize_policy("hard24") == "picse_hard24"
    assert normalize_policy("rr02") == "rr02"
    with pytest.raises(InvalidArgumentError):
        normalize_policy("tight")
    with pytest.raises(InvalidArgumentError):
        make_policy("picse-fixed")
    assert make_policy("none").kind == "none"


def test_policy_classify_variants():
    pic = np.array([0.05, 0.05, 0.5])
    sed = np.array([0.0, 0.3, 0.0])
    base = dict(c_n=2.0, picse=0.1, nominal_sup=0.15, hard_limit=0.25, rr_width=0.1)
    assert CaliperPolicy("none").classify(pic, sed).tolist() == [0, 0, 0]
    assert CaliperPolicy("rr02", **base).classify(pic, sed).tolist() == [0, 0, 1]
    assert CaliperPolicy("picse_fixed", **base).classify(pic, sed).tolist() == [0, 0, 1]
    assert CaliperPolicy("picse_hard66", **base).classify(pic, sed).tolist() == [0, 2, 1]
    assert CaliperPolicy("picse_hard24", **base).classify(pic, sed).tolist() == [0, 2, 1]
    assert CaliperPolicy("picse_narrowed", **base).classify(pic, sed).tolist() == [0, 2, 1]


def test_euclidean_policy_needs_differences():
    policy = CaliperPolicy(
        "euclidean",
        c_n=2.0,
        picse=0.1,
        nominal_sup=0.15,
        hard_limit=0.25,
        euclid_global=1.0,
        euclid_per_dim=np.array([0.8, 0.8]),
    )
    with pytest.raises(InvalidArgumentError):
        policy.classify(np.array([0.0]), np.array([0.0]))
    dx = np.array([[0.1, 0.1], [0.9, 0.0], [0.75, 0.75]])
    codes = policy.classify(np.zeros(3), np.zeros(3), dx)
    assert codes.tolist() == [0, 3, 3]


def test_negative_width_rejected():
    with pytest.raises(InvalidArgumentError):
        CaliperPolicy("picse_fixed", c_n=-1.0)


def test_caliper_quantities(toy_centered):
    fitted = fit(toy_centered)
    q = caliper_quantities(toy_centered, fitted)
    assert q.m == min(toy_centered.n0, toy_centered.n1)
    assert q.c_n == pytest.approx(z_star(q.m))
    assert q.picse > 0
    assert q.nominal_sup < q.hard_limit
    assert q.hard_limit - q.nominal_sup == pytest.approx(q.picse)
    assert q.dim == toy_centered.p - 1
    overridden = caliper_quantities(toy_centered, fitted, "sandwich", 1.5, intrinsic=True)
    assert overridden.c_n == 1.5
    assert 1.0 <= overridden.dim <= toy_centered.p
