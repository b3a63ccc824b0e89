"""The acceptance battery behind ``picse-match verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from picse_match.logs import get_logger
from picse_match.simlab.dgp import DGPConfig
from picse_match.simlab.identities import (
    check_assignment_probs,
    check_caliper_enforcement,
    check_effect_regression,
    check_jacobian,
    check_linear_self_linearization,
    check_matcher_optimality,
    check_msps,
    check_s_perp_closed_form,
    check_u_statistic,
)
from picse_match.simlab.verify import (
    STREAM_CHAOS,
    Verdict,
    chaos_configs,
    rate_study,
    summarize,
    trend_verdict,
    verify_c_rate,
    verify_chaos,
    verify_discrepancy_bound,
    verify_prop3,
)

log = get_logger("battery")

FULL_GRID = [500, 1000, 2000, 4000]
QUICK_GRID = [500, 1000, 2000]
COMPARE_N = 2000
STREAM_HEAVY_TAIL = 5


@dataclass
class BatteryResult:
    verdicts: list[Verdict] = field(default_factory=list)
    frames: dict[str, pd.DataFrame] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failed(self) -> list[str]:
        return [v.name for v in self.verdicts if not v.passed]


def _compare_to_unrestricted(narrowed: pd.DataFrame, unrestricted: pd.DataFrame) -> Verdict:
    ok_n = narrowed.loc[(narrowed["n"] == COMPARE_N) & ~narrowed["failed"], "max_true_gap"]
    ok_u = unrestricted.loc[(unrestricted["n"] == COMPARE_N) & ~unrestricted["failed"], "max_true_gap"]
    med_n = float(ok_n.median()) if len(ok_n) else math.nan
    med_u = float(ok_u.median()) if len(ok_u) else math.nan
    return Verdict(
        "rate_vs_unrestricted",
        bool(np.isfinite(med_n) and np.isfinite(med_u) and med_n <= med_u),
        med_n,
        med_u,
        f"n={COMPARE_N}: narrowed median max gap {med_n:.5g}, unrestricted 1-NN {med_u:.5g}",
    )


def _heavy_tail_verdict(frame: pd.DataFrame) -> Verdict:
    ok = frame.loc[~frame["failed"]]
    violations = int((~ok["hard_limit_ok"].astype(bool)).sum())
    return Verdict(
        "heavy_tail_hard_limit",
        bool(len(ok) > 0 and violations == 0),
        float(violations),
        0.0,
        f"{violations} of {len(ok)} scaled-t replicates exceeded the hard limit on index error distance",
        {"replicates": float(len(ok))},
    )


def run_battery(quick: bool = False, seed: int = 20240601, threads: int = 1) -> BatteryResult:
    """Run the identity, Monte-Carlo and trend checks in a fixed order.

    Quick mode trims the identity counts and the rate grid; the Gaussian
    Monte-Carlo checks keep their full replicate counts since they are cheap.
    """
    out = BatteryResult()

    def record(v: Verdict) -> None:
        log.info("%-24s %s statistic=%.6g threshold=%.6g", v.name, "PASS" if v.passed else "FAIL", v.statistic, v.threshold)
        out.verdicts.append(v)

    scale = 4 if quick else 1
    record(check_u_statistic(20, seed=seed))
    record(check_s_perp_closed_form(100, seed=seed))
    record(check_linear_self_linearization(50, seed=seed))
    record(check_jacobian(5, seed=seed))

    record(verify_prop3(10, 500, 2000, sigma=np.eye(10), C=0.01 * np.eye(10), seed=seed, threads=threads))
    for k, (name, (sigma, c)) in enumerate(chaos_configs(10).items()):
        stream = STREAM_CHAOS * 100 + k
        record(verify_chaos(10, 500, 2000, sigma, c, name=f"chaos_{name}", seed=seed, threads=threads, stream=stream))

    record(check_assignment_probs(10_000 // scale, seed=seed))
    record(check_msps(10_000 // scale, seed=seed))
    record(check_effect_regression(20, seed=seed))
    record(check_matcher_optimality(200 // scale, seed=seed))
    record(check_caliper_enforcement(50 // scale, seed=seed))

    grid = QUICK_GRID if quick else FULL_GRID
    reps = 30 if quick else 50
    base = DGPConfig(n=max(grid), p=5, seed=seed)
    narrowed = rate_study("n^0.4", grid, reps, "picse_narrowed", base=base, seed=seed, threads=threads)
    unrestricted = rate_study("n^0.4", [COMPARE_N], reps, "none", base=base, seed=seed, threads=threads)
    out.frames["rate"] = pd.concat([narrowed, unrestricted], ignore_index=True)
    record(trend_verdict("rate_trend", narrowed.loc[~narrowed["failed"]], "max_true_gap"))
    record(_compare_to_unrestricted(narrowed, unrestricted))
    record(trend_verdict("effect_consistency", narrowed.loc[~narrowed["failed"]], "abs_tau_error"))
    out.frames["rate_summary"] = summarize(narrowed.loc[~narrowed["failed"]], "max_true_gap")

    heavy = base.model_copy(update={"covariate_family": "scaled_t", "df": 4.0})
    tails = rate_study(
        "fixed", [1000], 10 if quick else 50, "picse_narrowed",
        base=heavy, seed=seed, threads=threads, stream=STREAM_HEAVY_TAIL,
    )
    out.frames["heavy_tail"] = tails
    record(_heavy_tail_verdict(tails))

    if not quick:
        record(verify_discrepancy_bound(DGPConfig(n=1000, p=5, seed=seed), 2000, seed=seed, threads=threads))
        record(verify_c_rate(FULL_GRID, 5, 20, seed=seed, threads=threads))

    log.info("battery finished: %d/%d verdicts passed", sum(v.passed for v in out.verdicts), len(out.verdicts))
    return out
