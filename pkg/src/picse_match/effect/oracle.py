"""Oracle quantities that require the true index (simulation only)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import softmax

from picse_match.effect.estimate import Stratification, WeightScheme, _set_terms, set_table
from picse_match.errors import EstimateUndefinedError, FineStratumError, InvalidArgumentError

# Spread slack for the msPSerr premise; covers rounding in generated thetas.
_SPREAD_TOL = 1e-12


def assignment_probs(thetas: np.ndarray, z_pattern: np.ndarray) -> float:
    """Probability of the observed pattern given the number treated in the set."""
    thetas = np.asarray(thetas, dtype=float)
    z_pattern = np.asarray(z_pattern).astype(int)
    if thetas.shape != z_pattern.shape:
        raise InvalidArgumentError("thetas and pattern must align")
    size = thetas.size
    k = int(z_pattern.sum())
    if k in (0, size):
        return 1.0
    if k == 1:
        return float(softmax(thetas)[np.argmax(z_pattern == 1)])
    if k == size - 1:
        return float(softmax(-thetas)[np.argmax(z_pattern == 0)])
    raise FineStratumError(f"set of size {size} with {k} treated is not fine")


def assignment_distribution(thetas: np.ndarray, n_treated: int) -> tuple[np.ndarray, np.ndarray]:
    """All admissible patterns for a fine set and their conditional probabilities."""
    thetas = np.asarray(thetas, dtype=float)
    size = thetas.size
    if n_treated not in (0, 1, size - 1, size):
        raise FineStratumError(f"set of size {size} with {n_treated} treated is not fine")
    patterns = []
    for chosen in combinations(range(size), n_treated):
        zeta = np.zeros(size, dtype=np.int8)
        zeta[list(chosen)] = 1
        patterns.append(zeta)
    pats = np.array(patterns)
    probs = np.array([assignment_probs(thetas, p) for p in pats])
    return pats, probs


def psi_tilde_value(
    match: Stratification,
    y: np.ndarray,
    z: np.ndarray,
    w: WeightScheme | str,
    theta: np.ndarray,
    eta: float,
) -> float:
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    theta = np.asarray(theta, dtype=float)
    table = set_table(match, y, z, w)
    den = table.denominator
    if den <= 0:
        raise EstimateUndefinedError("no informative matched sets (zero denominator)")
    terms = _set_terms(table, y, z, eta)
    total = 0.0
    for j, m in enumerate(table.members):
        if table.wtilde[j] == 0:
            continue
        pi = assignment_probs(theta[m], z[m])
        if pi <= 0:
            raise EstimateUndefinedError("assignment probability underflowed to zero")
        total += terms[j] / (m.size * pi)
    return total / den


@dataclass(frozen=True)
class MspsCheck:
    eq46_ok: bool
    eq80_ok: bool
    max_lhs46: float
    max_lhs80: float
    rhs46: float
    rhs80: float
    n_sets: int


def msps_err_check(
    thetas_by_stratum: list[np.ndarray],
    delta: float,
    n_treated: list[int] | None = None,
) -> MspsCheck:
    """Check both probability-ratio inequalities on every admissible pattern.

    Without ``n_treated`` each set is checked with one treated unit and with
    one control unit.
    """
    if delta < 0:
        raise InvalidArgumentError("delta must be nonnegative")
    ok46 = ok80 = True
    max46 = max80 = 0.0
    rhs46_max = rhs80_max = 0.0
    for j, thetas in enumerate(thetas_by_stratum):
        thetas = np.asarray(thetas, dtype=float)
        size = thetas.size
        if size < 2:
            continue
        if np.ptp(thetas) > delta + _SPREAD_TOL:
            raise InvalidArgumentError(f"theta spread {np.ptp(thetas):.3g} exceeds delta {delta:.3g}")
        shrink = 1.0 - 1.0 / size
        rhs46 = shrink * math.expm1(2 * delta)
        rhs80 = shrink * math.expm1(4 * delta)
        rhs46_max, rhs80_max = max(rhs46_max, rhs46), max(rhs80_max, rhs80)
        counts = [n_treated[j]] if n_treated is not None else sorted({1, size - 1})
        for k in counts:
            _, probs = assignment_distribution(thetas, k)
            lhs46 = float(np.max(np.abs(probs * size - 1.0)))
            lhs80 = float(np.max(np.abs(1.0 / (size * probs) - 1.0)))
            max46, max80 = max(max46, lhs46), max(max80, lhs80)
            ok46 &= lhs46 <= rhs46 + 1e-12
            ok80 &= lhs80 <= rhs80 + 1e-12
    return MspsCheck(
        eq46_ok=bool(ok46),
        eq80_ok=bool(ok80),
        max_lhs46=max46,
        max_lhs80=max80,
        rhs46=rhs46_max,
        rhs80=rhs80_max,
        n_sets=len(thetas_by_stratum),
    )


def max_matched_spread(match: Stratification, theta: np.ndarray) -> float:
    theta = np.asarray(theta, dtype=float)
    spreads = [float(np.ptp(theta[m])) for m in match.members()]
    return max(spreads, default=0.0)


def discrepancy_bound(
    delta: float,
    match: Stratification,
    z: np.ndarray,
    w: WeightScheme | str,
    v_abs: np.ndarray,
) -> float:
    """Bound on |E(psi_tilde - psi)| given E|V| per matched set (in set order)."""
    table = set_table(match, None, z, w)
    den = table.denominator
    if den <= 0:
        raise EstimateUndefinedError("no informative matched sets (zero denominator)")
    v_abs = np.asarray(v_abs, dtype=float)
    if v_abs.shape != table.size.shape:
        raise InvalidArgumentError("need one E|V| value per matched set")
    return math.expm1(4 * delta) * float(np.sum(table.wtilde * table.size * v_abs)) / den


def oracle_root(
    match: Stratification,
    z: np.ndarray,
    w: WeightScheme | str,
    mu1: np.ndarray,
    mu0: np.ndarray,
) -> float:
    """Root of the expected oracle equation from known conditional mean functions."""
    table = set_table(match, None, z, w)
    den = table.denominator
    if den <= 0:
        raise EstimateUndefinedError("no informative matched sets (zero denominator)")
    gap = np.asarray(mu1, dtype=float) - np.asarray(mu0, dtype=float)
    num = sum(table.wtilde[j] * float(gap[m].sum()) for j, m in enumerate(table.members))
    return float(num / den)
