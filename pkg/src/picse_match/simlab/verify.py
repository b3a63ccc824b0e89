"""Monte-Carlo checks of the caliper, PIC-error and effect-consistency claims.

Each check returns a ``Verdict`` carrying the measured statistic and the
threshold it was held to. Equality claims pass within three replicate-level
standard errors; inequality claims must hold outright and report their slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import pandas as pd

from picse_match.effect.estimate import WeightScheme, psi_value, set_table, tau_hat
from picse_match.effect.oracle import assignment_distribution, discrepancy_bound, max_matched_spread, psi_tilde_value
from picse_match.errors import InvalidArgumentError, PicseError
from picse_match.linalg import fip, op_norm, sqrt_psd
from picse_match.logs import get_logger
from picse_match.matching.caliper import chaos_bound, s_matrix, s_perp, z_star
from picse_match.matching.diagnostics import match_diagnostics
from picse_match.pipeline import fit_and_calipers, run_pipeline
from picse_match.simlab.dgp import DGPConfig, generate, replicate_rng
from picse_match.simlab.runner import run_replicates

log = get_logger("simlab")

PRule = Literal["fixed", "n^0.4", "n^0.6"]

STREAM_PROP3 = 1
STREAM_CHAOS = 2
STREAM_PICSE = 3
STREAM_RATE = 4
STREAM_DISCREPANCY = 6
STREAM_C_RATE = 7


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    statistic: float
    threshold: float
    detail: str = ""
    extras: dict[str, float] = field(default_factory=dict)
    table: pd.DataFrame | None = field(default=None, compare=False, repr=False)

    def as_record(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "detail": self.detail,
            "extras": dict(sorted(self.extras.items())),
        }


def _standard_error(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.inf


def verify_prop3(
    p: int = 10,
    n_pairs: int = 500,
    reps: int = 2000,
    *,
    sigma: np.ndarray | None = None,
    C: np.ndarray | None = None,
    mode: Literal["analytic", "plugin"] = "analytic",
    band: tuple[float, float] = (0.95, 1.05),
    cfg: DGPConfig | None = None,
    seed: int = 20240601,
    threads: int = 1,
) -> Verdict:
    """Mean-square PIC error equals <2 Sigma, C>; mean max error stays under z* times its root."""
    if mode == "plugin":
        if cfg is None:
            raise InvalidArgumentError("plugin mode needs a DGP config")
        sample, _ = generate(cfg, replicate_rng(seed, STREAM_PROP3, reps))
        _, _, q = fit_and_calipers(sample)
        sigma, C, p = q.summary.S_perp, q.C, sample.p
    sigma = np.eye(p) if sigma is None else np.asarray(sigma, dtype=float)
    C = 0.01 * np.eye(p) if C is None else np.asarray(C, dtype=float)
    target = 2.0 * fip(sigma, C)
    root_pair = sqrt_psd(2.0 * sigma)
    root_c = sqrt_psd(C)

    def one(_: int, rng: np.random.Generator) -> tuple[float, float]:
        e = rng.standard_normal(p) @ root_c
        d = rng.standard_normal((n_pairs, p)) @ root_pair
        err = d @ e
        return float(np.mean(err**2)), float(np.max(np.abs(err)))

    out = np.array(run_replicates(one, seed, reps, threads, stream=STREAM_PROP3))
    ms, mx = out[:, 0], out[:, 1]
    bound = z_star(n_pairs) * math.sqrt(max(target, 0.0))
    mean_max = float(mx.mean())
    if target == 0:
        passed = bool(np.all(ms == 0) and np.all(mx == 0))
        return Verdict("prop3", passed, 0.0, 0.0, "C = 0: every PIC error vanishes", {"mean_max": mean_max, "bound": 0.0})

    ratio = float(ms.mean() / target)
    se = _standard_error(ms) / target
    within_se = abs(ratio - 1.0) <= 3.0 * se
    in_band = band[0] <= ratio <= band[1]
    max_ok = mean_max <= bound
    detail = (
        f"mean-square ratio {ratio:.4f} (3se={3 * se:.4f}, band [{band[0]:g}, {band[1]:g}]); "
        f"mean max {mean_max:.4g} <= {bound:.4g}: {max_ok}"
    )
    return Verdict(
        name=f"prop3_{mode}",
        passed=bool(within_se and in_band and max_ok),
        statistic=ratio,
        threshold=3.0 * se,
        detail=detail,
        extras={"ratio": ratio, "se": se, "mean_max": mean_max, "bound": bound, "target": target, "in_band": float(in_band)},
    )


def chaos_configs(p: int) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    spiked = np.eye(p)
    spiked[0, 0] = float(p)
    deficient = 0.01 * np.diag([1.0] * (p - p // 2) + [0.0] * (p // 2))
    return {
        "isotropic": (np.eye(p), 0.01 * np.eye(p)),
        "spiked": (spiked, 0.01 * np.eye(p)),
        "rank_deficient": (np.eye(p), deficient),
    }


def verify_chaos(
    p: int,
    m_pairs: int,
    reps: int,
    sigma: np.ndarray,
    C: np.ndarray,
    *,
    name: str = "chaos",
    seed: int = 20240601,
    threads: int = 1,
    stream: int = STREAM_CHAOS,
) -> Verdict:
    """Root mean of the squared maximum index error distance against the chaos bound."""
    sigma = np.asarray(sigma, dtype=float)
    C = np.asarray(C, dtype=float)
    root_pair = sqrt_psd(2.0 * sigma)
    root_c = sqrt_psd(C)
    base = 2.0 * fip(sigma, C)

    def one(_: int, rng: np.random.Generator) -> float:
        d = rng.standard_normal((m_pairs, p)) @ root_pair
        sq = np.sum((d @ root_c) ** 2, axis=1)
        return float(sq.mean()) if m_pairs == 1 else float(sq.max())

    vals = np.array(run_replicates(one, seed, reps, threads, stream=stream))
    if m_pairs == 1:
        ratio = float(vals.mean() / base) if base > 0 else 1.0
        se = _standard_error(vals) / base if base > 0 else 0.0
        return Verdict(name, abs(ratio - 1.0) <= 3.0 * se, ratio, 3.0 * se, "single pair: mean-square check", {"se": se})
    stat = math.sqrt(float(vals.mean()))
    bound = chaos_bound(sigma, C, m_pairs)
    return Verdict(
        name,
        stat <= bound,
        stat,
        bound,
        f"(E max^2)^(1/2) = {stat:.4g} <= {bound:.4g} (slack {bound - stat:.4g})",
        {"slack": bound - stat},
    )


def verify_picse_consistency(
    cfg_grid: list[DGPConfig],
    reps: int = 200,
    *,
    seed: int = 20240601,
    threads: int = 1,
) -> Verdict:
    """Estimated <S_perp, C> against its Monte-Carlo analogue, scaled by p/n."""
    rows = []
    for k, cfg in enumerate(cfg_grid):

        def one(_: int, rng: np.random.Generator, cfg: DGPConfig = cfg) -> dict[str, Any] | None:
            sample, truth = generate(cfg, rng)
            try:
                cs, fitted, q = fit_and_calipers(sample)
            except PicseError as exc:
                log.debug("replicate skipped: %s", exc.describe())
                return None
            return {
                "est": fip(q.summary.S_perp, q.C),
                "beta": fitted.beta,
                "S_perp_true": s_perp(s_matrix(cs), truth.beta_true),
            }

        results = [r for r in run_replicates(one, seed, reps, threads, stream=STREAM_PICSE * 100 + k) if r is not None]
        if len(results) < 2:
            raise InvalidArgumentError(f"too few successful replicates at n={cfg.n}")
        c_mc = np.cov(np.array([r["beta"] for r in results]).T)
        err = np.array([abs(r["est"] - fip(r["S_perp_true"], c_mc)) for r in results])
        scale = cfg.p / cfg.n
        rows.append(
            {
                "n": cfg.n,
                "p": cfg.p,
                "replicates": len(results),
                "median_est": float(np.median([r["est"] for r in results])),
                "median_abs_error": float(np.median(err)),
                "ratio": float(np.median(err) / scale),
                # large-sample standard error of a median
                "ratio_se": float(math.sqrt(math.pi / 2.0) * _standard_error(err) / scale),
            }
        )
    table = pd.DataFrame(rows)
    ratios = table["ratio"].to_numpy()
    ses = table["ratio_se"].to_numpy()
    if ratios.size > 1:
        rises = (ratios[1:] - ratios[:-1]) / np.hypot(ses[1:], ses[:-1])
        worst = float(np.nan_to_num(rises, nan=0.0).max())
    else:
        worst = 0.0
    return Verdict(
        "picse_consistency",
        bool(worst <= 3.0),
        worst,
        3.0,
        "largest rise of median |error| / (p/n) between successive n, in standard errors",
        table=table,
    )


def p_for(rule: PRule, n: int, fixed: int = 5) -> int:
    if rule == "fixed":
        return fixed
    if rule == "n^0.4":
        return max(2, math.ceil(n**0.4))
    if rule == "n^0.6":
        return max(2, math.ceil(n**0.6))
    raise InvalidArgumentError(f"unknown p rule {rule!r}")


def _replicate_row(
    cfg: DGPConfig,
    rng: np.random.Generator,
    policy: str,
    method: str,
    weights: str,
) -> dict[str, Any]:
    sample, truth = generate(cfg, rng)
    row: dict[str, Any] = {"n": cfg.n, "p": cfg.p, "policy": policy, "method": method, "failed": False}
    try:
        res = run_pipeline(sample, policy=policy, method=method)
    except PicseError as exc:
        log.debug("replicate failed: %s", exc.describe())
        return row | {"failed": True}
    diag = match_diagnostics(res.match, res.fit, res.centered, truth.beta_true)
    q = res.quantities
    row |= {
        "cardinality": diag.cardinality,
        "picse": q.picse,
        "hard_limit": q.hard_limit,
        "max_sed": diag.max_sed,
        "max_abs_pic": diag.max_abs_pic,
        "max_true_gap": diag.max_true_gap,
        "max_pic_error": diag.max_pic_error,
        "hard_limit_ok": bool(diag.empty or diag.max_sed < q.hard_limit or q.hard_limit == 0),
    }
    try:
        est = tau_hat(res.match, sample.y, sample.z, weights)
        row |= {"tau_hat": est.tau_hat, "abs_tau_error": abs(est.tau_hat - truth.tau)}
    except PicseError:
        row |= {"tau_hat": math.nan, "abs_tau_error": math.nan}
    return row


def rate_study(
    p_rule: PRule,
    n_grid: list[int],
    reps: int,
    policy: str = "picse_narrowed",
    *,
    base: DGPConfig | None = None,
    method: str = "nn",
    weights: str = "uniform",
    seed: int = 20240601,
    threads: int = 1,
    stream: int = STREAM_RATE,
) -> pd.DataFrame:
    """One row per replicate: matched true-index gaps, PIC errors and effect errors.

    Streams are keyed by n, so two policies run on the same seed see the same samples.
    """
    base = base or DGPConfig(n=max(n_grid), p=5)
    frames = []
    for n in n_grid:
        cfg = base.model_copy(update={"n": n, "p": p_for(p_rule, n, base.p)})

        def one(r: int, rng: np.random.Generator, cfg: DGPConfig = cfg) -> dict[str, Any]:
            return _replicate_row(cfg, rng, policy, method, weights) | {"rep": r}

        rows = run_replicates(one, seed, reps, threads, stream=stream * 1_000_000 + n)
        frames.append(pd.DataFrame(rows))
        log.info("rate study n=%d p=%d policy=%s done", n, cfg.p, policy)
    frame = pd.concat(frames, ignore_index=True)
    leading = ["n", "p", "rep", "policy", "method", "failed"]
    return frame[leading + [c for c in frame.columns if c not in leading]]


def summarize(frame: pd.DataFrame, column: str) -> pd.DataFrame:
    if column not in frame.columns:
        # every replicate failed
        frame = frame.assign(**{column: math.nan})
    medians = frame.groupby("n", sort=True)[column].median()
    out = medians.rename("median").reset_index()
    if len(out) > 1 and np.all(out["median"] > 0):
        slope = float(np.polyfit(np.log(out["n"]), np.log(out["median"]), 1)[0])
    else:
        slope = math.nan
    return out.assign(log_slope=slope)


def trend_verdict(name: str, frame: pd.DataFrame, column: str) -> Verdict:
    """Medians of ``column`` must strictly decrease along the n-grid."""
    table = summarize(frame, column)
    med = table["median"].to_numpy()
    steps = np.diff(med)
    passed = bool(med.size > 1 and np.all(np.isfinite(med)) and np.all(steps < 0))
    worst = float(steps.max()) if steps.size else math.nan
    slope = float(table["log_slope"].iloc[0]) if len(table) else math.nan
    return Verdict(
        name,
        passed,
        worst,
        0.0,
        f"medians {np.array2string(med, precision=5)}; log-log slope {slope:.3f}",
        {"log_slope": slope},
        table=table,
    )


def verify_effect(
    cfg: DGPConfig,
    n_grid: list[int],
    reps: int,
    *,
    policy: str = "picse_narrowed",
    weights: str = "uniform",
    seed: int = 20240601,
    threads: int = 1,
) -> Verdict:
    frame = rate_study("fixed", n_grid, reps, policy, base=cfg, weights=weights, seed=seed, threads=threads)
    return trend_verdict("effect_consistency", frame, "abs_tau_error")


def verify_discrepancy_bound(
    cfg: DGPConfig,
    reps: int = 2000,
    *,
    weights: str = "uniform",
    policy: str = "picse_narrowed",
    eta: float | None = None,
    seed: int = 20240601,
    threads: int = 1,
) -> Verdict:
    """Re-randomize treatment within a fixed pair matching and bound |E(psi_tilde - psi)|."""
    sample, truth = generate(cfg, replicate_rng(seed, STREAM_DISCREPANCY))
    res = run_pipeline(sample, policy=policy, method="optimal")
    match = res.match
    w = WeightScheme(weights)  # type: ignore[arg-type]
    eta = truth.tau if eta is None else eta
    members = match.members()
    z0 = sample.z.astype(np.int8)
    designs = [assignment_distribution(truth.theta[m], int(z0[m].sum())) for m in members]
    delta = max_matched_spread(match, truth.theta)

    def one(_: int, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        z = z0.copy()
        for m, (patterns, probs) in zip(members, designs):
            z[m] = patterns[rng.choice(probs.size, p=probs)]
        y = truth.mu0 + cfg.noise_sd * rng.standard_normal(cfg.n) + truth.tau * z
        gap = psi_tilde_value(match, y, z, w, truth.theta, eta) - psi_value(match, y, z, w, eta)
        return gap, set_table(match, y, z, w).diff

    results = run_replicates(one, seed, reps, threads, stream=STREAM_DISCREPANCY)
    gaps = np.array([g for g, _ in results])
    diffs = np.array([d for _, d in results])
    v_abs = np.mean(np.abs(diffs - diffs.mean(axis=0)), axis=0)
    bound = discrepancy_bound(delta, match, z0, w, v_abs)
    mean_gap = float(abs(gaps.mean()))
    se = _standard_error(gaps)
    return Verdict(
        "discrepancy_bound",
        bool(mean_gap <= bound + 3.0 * se),
        mean_gap,
        bound + 3.0 * se,
        f"|mean(psi_tilde - psi)| = {mean_gap:.4g}; bound {bound:.4g} at delta={delta:.4g}",
        {"bound": bound, "se": se, "delta": delta},
    )


def verify_c_rate(
    n_grid: list[int],
    p: int = 5,
    reps: int = 20,
    *,
    base: DGPConfig | None = None,
    seed: int = 20240601,
    threads: int = 1,
    factor: float = 100.0,
) -> Verdict:
    """n times the operator norm of C-hat stays bounded along the n-grid."""
    base = base or DGPConfig(n=max(n_grid), p=p)
    rows = []
    for k, n in enumerate(n_grid):
        cfg = base.model_copy(update={"n": n, "p": p})

        def one(_: int, rng: np.random.Generator, cfg: DGPConfig = cfg) -> float:
            sample, _ = generate(cfg, rng)
            try:
                _, _, q = fit_and_calipers(sample)
            except PicseError:
                return math.nan
            return op_norm(q.C) * cfg.n

        vals = np.array(run_replicates(one, seed, reps, threads, stream=STREAM_C_RATE * 100 + k))
        rows.append({"n": n, "p": p, "median_scaled_norm": float(np.nanmedian(vals))})
    table = pd.DataFrame(rows)
    scaled = table["median_scaled_norm"].to_numpy()
    worst = float(np.max(scaled / scaled[0]))
    return Verdict("c_rate", bool(worst < factor), worst, factor, "max over n of median(n |C|_2) relative to the first n", table=table)
