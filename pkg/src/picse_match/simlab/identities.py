"""Exact identities and brute-force oracles checked on random instances."""

from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np
from scipy.special import expit, logsumexp

from picse_match.data.dataset import center
from picse_match.effect.estimate import FineStratification, psi_value, tau_hat
from picse_match.effect.oracle import assignment_probs, msps_err_check
from picse_match.errors import PicseError
from picse_match.matching.assign import pair_match_optimal
from picse_match.matching.caliper import (
    CaliperPolicy,
    PairVerdict,
    eligible,
    pic_se,
    s_matrix,
    s_perp,
)
from picse_match.matching.graph import EligibilityGraph
from picse_match.models.families import resolve_family
from picse_match.models.index import Design, a_hat, cov_beta, fit, linearize, mean_score
from picse_match.pipeline import run_pipeline
from picse_match.simlab.dgp import DGPConfig, generate, replicate_rng
from picse_match.simlab.verify import Verdict

STREAM_IDENTITY = 10


def _rng(seed: int, check: int, r: int = 0) -> np.random.Generator:
    return replicate_rng(seed, STREAM_IDENTITY, check, r)


def residualize(x: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Residuals of each centered column after regression on the index x beta."""
    idx = x @ beta
    coef = (x.T @ idx) / (idx @ idx)
    return x - np.outer(idx, coef)


def check_u_statistic(datasets: int = 20, *, seed: int = 20240601) -> Verdict:
    """PIC SE squared equals the all-pairs mean of residualized index error variances."""
    worst = 0.0
    for r in range(datasets):
        rng = _rng(seed, 1, r)
        n = int(rng.integers(60, 301))
        p = int(rng.integers(2, 13))
        cfg = DGPConfig(n=n, p=p, index_sd=0.8, seed=seed)
        sample, _ = generate(cfg, rng)
        cs = center(sample)
        try:
            fitted = fit(cs)
        except PicseError:
            continue
        C = cov_beta(fitted)
        se = pic_se(s_perp(s_matrix(cs), fitted.beta), C)
        xp = residualize(cs.x, fitted.beta)
        total = 0.0
        for i in range(n - 1):
            d = xp[i] - xp[i + 1 :]
            total += float(np.einsum("ij,jk,ik->", d, C, d))
        mean_pairs = total / (n * (n - 1) / 2)
        worst = max(worst, abs(se**2 - mean_pairs) / max(mean_pairs, np.finfo(float).tiny))
    return Verdict("u_statistic", worst <= 1e-9, worst, 1e-9, "relative gap, PIC SE^2 vs all-pairs mean")


def check_s_perp_closed_form(instances: int = 100, *, seed: int = 20240601) -> Verdict:
    worst = 0.0
    for r in range(instances):
        rng = _rng(seed, 2, r)
        n = int(rng.integers(30, 201))
        p = int(rng.integers(2, 9))
        x = rng.standard_normal((n, p)) @ rng.standard_normal((p, p))
        x = x - x.mean(axis=0)
        beta = rng.standard_normal(p)
        S = x.T @ x / (n - 1)
        xp = residualize(x, beta)
        explicit = xp.T @ xp / (n - 1)
        gap = np.linalg.norm(s_perp(S, beta) - explicit) / max(np.linalg.norm(explicit), np.finfo(float).tiny)
        worst = max(worst, float(gap))
    return Verdict("s_perp_closed_form", worst <= 1e-10, worst, 1e-10, "Frobenius relative gap to residualization")


def check_linear_self_linearization(datasets: int = 50, *, seed: int = 20240601) -> Verdict:
    worst = 0.0
    for r in range(datasets):
        rng = _rng(seed, 3, r)
        n = int(rng.integers(30, 300))
        p = int(rng.integers(2, 8))
        x = rng.standard_normal((n, p))
        x = x - x.mean(axis=0)
        y = 0.5 + x @ rng.standard_normal(p) + rng.standard_normal(n)
        d = Design.from_arrays(x, y)
        fitted = fit(d, "linear")
        truth = rng.standard_normal(d.k)
        tilde = linearize(d, "linear", truth).beta_tilde
        worst = max(worst, float(np.max(np.abs(tilde - fitted.theta))))
    return Verdict("linear_self_linearization", worst <= 1e-9, worst, 1e-9, "max |beta_tilde - beta_hat|")


def check_jacobian(points: int = 5, *, seed: int = 20240601, h: float = 1e-6) -> Verdict:
    worst = 0.0
    rng = _rng(seed, 4)
    n, p = 200, 4
    x = rng.standard_normal((n, p))
    x = x - x.mean(axis=0)
    z = (rng.random(n) < 0.5).astype(float)
    y = x @ rng.standard_normal(p) + rng.standard_normal(n)
    for family, r in (("logistic", z), ("linear", y)):
        fam = resolve_family(family)
        d = Design.from_arrays(x, r)
        for _ in range(points):
            theta = 0.5 * rng.standard_normal(d.k)
            fd = np.empty((d.k, d.k))
            for j in range(d.k):
                step = np.zeros(d.k)
                step[j] = h
                fd[:, j] = (mean_score(d, fam, theta + step) - mean_score(d, fam, theta - step)) / (2 * h)
            a = a_hat(d, fam, theta)
            worst = max(worst, float(np.max(np.abs(a - fd)) / np.max(np.abs(a))))
    return Verdict("jacobian", worst <= 1e-5, worst, 1e-5, "max entrywise gap relative to max |A-hat|")


def brute_force_conditional(thetas: np.ndarray, n_treated: int) -> dict[tuple[int, ...], float]:
    """Conditional law of independent Bernoulli(expit theta) draws given their sum."""
    size = thetas.size
    logp1, logp0 = np.log(expit(thetas)), np.log(expit(-thetas))
    pats = [np.array(bits) for bits in product((0, 1), repeat=size) if sum(bits) == n_treated]
    logs = np.array([float(np.sum(np.where(b == 1, logp1, logp0))) for b in pats])
    probs = np.exp(logs - logsumexp(logs))
    return {tuple(int(v) for v in b): float(q) for b, q in zip(pats, probs)}


def check_assignment_probs(strata: int = 10_000, *, seed: int = 20240601) -> Verdict:
    rng = _rng(seed, 5)
    worst = 0.0
    for _ in range(strata):
        size = int(rng.integers(2, 7))
        thetas = rng.normal(0.0, 1.5, size)
        k = 1 if rng.random() < 0.5 else size - 1
        total = 0.0
        for pattern, prob in brute_force_conditional(thetas, k).items():
            got = assignment_probs(thetas, np.array(pattern))
            total += got
            worst = max(worst, abs(got - prob))
        worst = max(worst, abs(total - 1.0))
    return Verdict("assignment_probs", worst <= 1e-12, worst, 1e-12, "max |pi - brute-force conditional|")


def check_msps(strata: int = 10_000, *, seed: int = 20240601) -> Verdict:
    rng = _rng(seed, 6)
    thetas, deltas = [], []
    for _ in range(strata):
        size = int(rng.integers(2, 7))
        delta = float(rng.uniform(1e-6, 1.0))
        thetas.append(rng.normal() + delta * rng.random(size))
        deltas.append(delta)
    violations = 0
    worst = 0.0
    for t, delta in zip(thetas, deltas):
        res = msps_err_check([t], delta)
        violations += int(not res.eq46_ok) + int(not res.eq80_ok)
        worst = max(worst, res.max_lhs46 / res.rhs46 if res.rhs46 > 0 else 0.0)
    return Verdict("msps_err", violations == 0, float(violations), 0.0, f"violations; worst lhs/rhs ratio {worst:.4f}")


def _random_fine_sets(rng: np.random.Generator, n_sets: int) -> tuple[np.ndarray, np.ndarray]:
    set_id, z = [], []
    for s in range(n_sets):
        size = int(rng.integers(2, 5))
        one_treated = rng.random() < 0.5
        pattern = np.zeros(size, dtype=np.int8) if one_treated else np.ones(size, dtype=np.int8)
        pattern[int(rng.integers(size))] = 1 if one_treated else 0
        set_id.extend([s] * size)
        z.extend(pattern.tolist())
    singletons = int(rng.integers(0, 5))
    set_id.extend([-1] * singletons)
    z.extend(rng.integers(0, 2, singletons).tolist())
    return np.array(set_id), np.array(z, dtype=np.int8)


def check_effect_regression(datasets: int = 20, *, seed: int = 20240601) -> Verdict:
    """Uniform-weight tau-hat against OLS of y on z plus matched-set indicators."""
    worst_coef = worst_root = worst_slope = 0.0
    for r in range(datasets):
        rng = _rng(seed, 7, r)
        set_id, z = _random_fine_sets(rng, int(rng.integers(5, 40)))
        y = rng.normal(size=z.size) + 1.5 * z
        strat = FineStratification(set_id)
        est = tau_hat(strat, y, z, "uniform")
        codes = np.where(set_id >= 0, set_id, set_id.max() + 1 + np.arange(set_id.size))
        ols = fit(Design.from_arrays(z.astype(float)[:, None], y, codes), "linear")
        worst_coef = max(worst_coef, abs(float(ols.beta[0]) - est.tau_hat))
        worst_root = max(worst_root, abs(psi_value(strat, y, z, "uniform", est.tau_hat)))
        slope = psi_value(strat, y, z, "uniform", est.tau_hat + 1.0) - psi_value(strat, y, z, "uniform", est.tau_hat)
        worst_slope = max(worst_slope, abs(slope + 1.0))
    passed = worst_coef <= 1e-8 and worst_root <= 1e-10 and worst_slope <= 1e-10
    return Verdict(
        "effect_regression",
        passed,
        worst_coef,
        1e-8,
        f"root residual {worst_root:.2e}; slope error {worst_slope:.2e}",
        {"root": worst_root, "slope": worst_slope},
    )


def brute_force_matching(allowed: np.ndarray, cost: np.ndarray) -> tuple[int, float]:
    """Maximum cardinality, then minimum total cost, by DP over used-control bitmasks."""
    nt, nc = allowed.shape

    @lru_cache(maxsize=None)
    def best(i: int, used: int) -> tuple[int, float]:
        if i == nt:
            return 0, 0.0
        card, total = best(i + 1, used)
        for j in range(nc):
            if allowed[i, j] and not used >> j & 1:
                c2, t2 = best(i + 1, used | 1 << j)
                c2, t2 = c2 + 1, t2 + float(cost[i, j])
                if c2 > card or (c2 == card and t2 < total):
                    card, total = c2, t2
        return card, total

    return best(0, 0)


def toy_graph(allowed: np.ndarray, pic: np.ndarray) -> EligibilityGraph:
    """Graph over treated rows 0..nt-1 and control rows nt..nt+nc-1 under the 'none' policy."""
    nt, nc = allowed.shape
    ti, ci = np.nonzero(allowed)
    return EligibilityGraph(
        treated=ti.astype(np.intp),
        control=(ci + nt).astype(np.intp),
        pic=pic[ti, ci],
        sed=np.zeros(ti.size),
        stratum=np.zeros(ti.size, dtype=np.intp),
        treated_units=np.arange(nt),
        control_units=np.arange(nt, nt + nc),
        n=nt + nc,
        policy=CaliperPolicy(kind="none"),
        x=np.zeros((nt + nc, 1)),
    )


def check_matcher_optimality(graphs: int = 200, *, seed: int = 20240601) -> Verdict:
    worst_card = 0
    worst_cost = 0.0
    for r in range(graphs):
        rng = _rng(seed, 8, r)
        nt, nc = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        allowed = rng.random((nt, nc)) < rng.uniform(0.2, 0.9)
        pic = rng.normal(size=(nt, nc))
        card, total = brute_force_matching(allowed, np.abs(pic))
        m = pair_match_optimal(toy_graph(allowed, pic))
        worst_card = max(worst_card, abs(m.cardinality - card))
        got = float(np.abs(m.pic).sum())
        worst_cost = max(worst_cost, abs(got - total))
    passed = worst_card == 0 and worst_cost <= 1e-9
    return Verdict(
        "matcher_optimality",
        passed,
        worst_cost,
        1e-9,
        f"max cardinality shortfall {worst_card}",
        {"cardinality_gap": float(worst_card)},
    )


def check_caliper_enforcement(datasets: int = 50, *, seed: int = 20240601, n: int = 400, p: int = 5) -> Verdict:
    """Every pair from the narrowed and hard66 policies re-passes its rule, heavy tails included."""
    failures = 0
    checked = 0
    for r in range(datasets):
        family = "scaled_t" if r % 2 else "gaussian_iid"
        cfg = DGPConfig(n=n, p=p, covariate_family=family, seed=seed)
        sample, _ = generate(cfg, _rng(seed, 9, r))
        for policy in ("picse_narrowed", "picse_hard66"):
            try:
                res = run_pipeline(sample, policy=policy)
            except PicseError:
                continue
            q, m = res.quantities, res.match
            for pic, sed in zip(m.pic, m.sed):
                checked += 1
                if policy == "picse_narrowed":
                    ok = eligible(pic, sed, q.picse, q.n0, q.n1, q.p, q.c_n, dim=q.dim) == PairVerdict.ELIGIBLE
                else:
                    ok = abs(pic) <= q.c_n * q.picse and (sed < q.hard_limit or q.hard_limit == 0)
                if ok and q.hard_limit > 0:
                    ok = sed < q.hard_limit
                failures += int(not ok)
    return Verdict(
        "caliper_enforcement",
        failures == 0 and checked > 0,
        float(failures),
        0.0,
        f"{checked} matched pairs rechecked",
        {"checked": float(checked)},
    )
