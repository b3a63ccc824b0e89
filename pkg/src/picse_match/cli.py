from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any

import pandas as pd

from picse_match import reports
from picse_match.config import RunConfig, build_run_config, load_run_file, load_schema, load_settings
from picse_match.data.dataset import Sample, center, load_csv
from picse_match.effect.estimate import tau_hat
from picse_match.errors import PicseError
from picse_match.logs import configure, get_logger
from picse_match.matching.assign import MatchResult
from picse_match.matching.caliper import make_policy
from picse_match.models.index import FitOptions, fit
from picse_match.pipeline import PipelineResult, fit_and_calipers, run_pipeline
from picse_match.simlab.battery import run_battery
from picse_match.simlab.dgp import DGPConfig, generate, replicate_rng
from picse_match.simlab.verify import rate_study, trend_verdict, verify_picse_consistency

log = get_logger("cli")

SAMPLE_FILE = "sample.csv"
TRUTH_FILE = "truth.json"

# Flags that override the run file; argparse dests match RunConfig fields.
_OVERRIDES = (
    "input",
    "family",
    "response",
    "cov",
    "policy",
    "cn",
    "intrinsic_dimension",
    "objective",
    "method",
    "weights",
    "match_csv",
    "study",
    "n",
    "p",
    "covariate_family",
    "p_rule",
    "n_grid",
    "reps",
    "quick",
    "seed",
    "out",
    "threads",
)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML run file; flags override its values")
    parser.add_argument("--seed", type=int, help="Master seed (unsigned 64-bit)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--threads", type=int, help="Worker threads for replicates and graph blocks")


def _data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="Input CSV")
    parser.add_argument("--schema", help="TOML file declaring column roles")
    parser.add_argument("--treatment", help="Treatment column (when no --schema)")
    parser.add_argument("--covariates", help="Comma-separated covariate columns (default: all others)")
    parser.add_argument("--outcome", help="Outcome column")
    parser.add_argument("--stratum", help="Stratum column")
    parser.add_argument("--family", choices=("logistic", "linear"))
    parser.add_argument("--response", choices=("treatment", "outcome"))


def _calipers(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cov", choices=("info", "sandwich"), help="Covariance estimator for beta-hat")
    parser.add_argument(
        "--policy",
        choices=("picse-fixed", "picse-narrowed", "hard66", "hard24", "rr02", "euclidean", "none"),
    )
    parser.add_argument("--cn", type=float, help="Override the caliper multiplier c_n")
    parser.add_argument(
        "--intrinsic-dimension",
        action="store_true",
        default=None,
        help="Use the intrinsic dimension in place of p-1 in the nominal supremum",
    )


def _matching(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=("optimal", "nn"))
    parser.add_argument("--objective", choices=("sum", "minmax"))


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="picse-match: index-score matching with PIC SE calipers")
    subparsers = parser.add_subparsers(dest="command", required=True)

    fit_parser = subparsers.add_parser("fit", help="Fit the index model and write fit.json")
    _data(fit_parser)
    fit_parser.add_argument("--cov", choices=("info", "sandwich"))
    _common(fit_parser)

    caliper_parser = subparsers.add_parser("caliper", help="Fit and write caliper quantities")
    _data(caliper_parser)
    _calipers(caliper_parser)
    _common(caliper_parser)

    match_parser = subparsers.add_parser("match", help="Fit, build the eligibility graph and match")
    _data(match_parser)
    _calipers(match_parser)
    _matching(match_parser)
    _common(match_parser)

    estimate_parser = subparsers.add_parser("estimate", help="Estimate the treatment effect from matched sets")
    _data(estimate_parser)
    _calipers(estimate_parser)
    _matching(estimate_parser)
    estimate_parser.add_argument("--weights", choices=("uniform", "att"))
    estimate_parser.add_argument("--match-csv", help="Reuse a previous match.csv instead of matching again")
    _common(estimate_parser)

    simulate_parser = subparsers.add_parser("simulate", help="Draw a DGP sample or run a replicate study")
    simulate_parser.add_argument("--study", choices=("sample", "rate", "effect", "picse"))
    simulate_parser.add_argument("--n", type=int, help="Sample size for --study sample")
    simulate_parser.add_argument("--p", type=int, help="Covariate count (fixed rule)")
    simulate_parser.add_argument("--covariate-family", choices=("gaussian_iid", "gaussian_correlated", "scaled_t"))
    simulate_parser.add_argument("--p-rule", choices=("fixed", "n^0.4", "n^0.6"))
    simulate_parser.add_argument("--n-grid", type=_int_list, help="Comma-separated sample sizes")
    simulate_parser.add_argument("--reps", type=int, help="Replicates per grid point")
    simulate_parser.add_argument(
        "--policy",
        choices=("picse-fixed", "picse-narrowed", "hard66", "hard24", "rr02", "euclidean", "none"),
    )
    simulate_parser.add_argument("--weights", choices=("uniform", "att"))
    _matching(simulate_parser)
    _common(simulate_parser)

    verify_parser = subparsers.add_parser("verify", help="Run the acceptance battery")
    verify_parser.add_argument("--quick", action="store_true", default=None, help="Reduced counts and a shorter n-grid")
    _common(verify_parser)

    return parser.parse_args(argv)


def _schema_values(args: argparse.Namespace) -> dict[str, Any] | None:
    if getattr(args, "schema", None):
        return load_schema(args.schema).model_dump()
    if getattr(args, "treatment", None):
        covariates = [c.strip() for c in args.covariates.split(",")] if args.covariates else None
        return {
            "treatment": args.treatment,
            "covariates": covariates,
            "outcome": args.outcome,
            "stratum": args.stratum,
        }
    return None


def _build_config(args: argparse.Namespace) -> RunConfig:
    settings = load_settings()
    values: dict[str, Any] = {
        "seed": settings.seed,
        "threads": settings.threads,
        "out": settings.out_dir,
        "max_iter": settings.max_iter,
        "tol": settings.tol,
        "separation_cap": settings.separation_cap,
        "condition_limit": settings.condition_limit,
    }
    if args.config:
        values.update(load_run_file(args.config))
    schema = _schema_values(args)
    if schema is not None:
        values["schema"] = schema
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    values["subcommand"] = args.command
    return build_run_config(values)


def _fit_options(cfg: RunConfig) -> FitOptions:
    return FitOptions(
        max_iter=cfg.max_iter,
        tol=cfg.tol,
        separation_cap=cfg.separation_cap,
        condition_limit=cfg.condition_limit,
        response=cfg.response,
    )


def _load(cfg: RunConfig) -> Sample:
    return load_csv(cfg.input, cfg.columns)


def _pipeline(cfg: RunConfig, sample: Sample) -> PipelineResult:
    return run_pipeline(
        sample,
        family=cfg.family,
        estimator=cfg.cov,
        policy=cfg.policy,
        c_n=cfg.cn,
        intrinsic=cfg.intrinsic_dimension,
        method=cfg.method,
        objective=cfg.objective,
        fit_options=_fit_options(cfg),
        threads=cfg.threads,
    )


def _write_match(out: Path, cfg: RunConfig, res: PipelineResult) -> None:
    reports.write_json(out / reports.FIT_FILE, reports.fit_report(res.fit, cfg.cov, res.centered.covariates))
    reports.write_json(out / reports.CALIPER_FILE, reports.caliper_report(res.quantities, res.policy))
    reports.write_frame(out / reports.MATCH_FILE, res.match.to_frame())
    reports.write_json(out / reports.MATCH_SUMMARY_FILE, reports.match_report(res.match, res.policy.kind, res.graph))


def _fit_sync(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    sample = _load(cfg)
    fitted = fit(center(sample), cfg.family, _fit_options(cfg))
    path = reports.write_json(out / reports.FIT_FILE, reports.fit_report(fitted, cfg.cov, sample.covariates))
    print(f"fit converged={fitted.converged} iterations={fitted.n_iter} -> {path}")
    return 0


def _caliper_sync(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    sample = _load(cfg)
    _, fitted, q = fit_and_calipers(
        sample,
        family=cfg.family,
        estimator=cfg.cov,
        c_n=cfg.cn,
        intrinsic=cfg.intrinsic_dimension,
        fit_options=_fit_options(cfg),
    )
    reports.write_json(out / reports.FIT_FILE, reports.fit_report(fitted, cfg.cov, sample.covariates))
    path = reports.write_json(out / reports.CALIPER_FILE, reports.caliper_report(q, make_policy(cfg.policy, q)))
    print(f"picse={q.picse:.6g} c_n={q.c_n:.6g} hard_limit={q.hard_limit:.6g} -> {path}")
    return 0


def _match_sync(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    res = _pipeline(cfg, _load(cfg))
    _write_match(out, cfg, res)
    print(f"matched {res.match.cardinality} pairs in {res.match.n_sets} sets -> {out / reports.MATCH_FILE}")
    return 0


def _estimate_sync(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    sample = _load(cfg)
    if cfg.match_csv:
        match = MatchResult.from_frame(pd.read_csv(cfg.match_csv), sample.n)
        log.info("reusing %d matched edges from %s", match.cardinality, cfg.match_csv)
    else:
        res = _pipeline(cfg, sample)
        _write_match(out, cfg, res)
        match = res.match
    est = tau_hat(match, sample.y, sample.z, cfg.weights)
    reports.write_json(out / reports.EFFECT_FILE, reports.effect_report(est))
    reports.write_frame(out / reports.STRATA_FILE, est.to_frame())
    print(f"tau_hat={est.tau_hat:.6g} ({est.scheme}, {est.n_informative} informative sets)")
    return 0


def _simulate_sample(cfg: RunConfig, out: Path) -> int:
    dgp = DGPConfig(n=cfg.n, p=cfg.p, covariate_family=cfg.covariate_family, seed=cfg.seed)
    sample, truth = generate(dgp, replicate_rng(cfg.seed, 0))
    frame = pd.DataFrame(sample.x, columns=[f"x{j + 1}" for j in range(sample.p)])
    frame["z"] = sample.z.astype(int)
    frame["y"] = sample.y
    reports.write_frame(out / SAMPLE_FILE, frame)
    reports.write_json(
        out / TRUTH_FILE,
        {
            "beta_true": [float(b) for b in truth.beta_true],
            "gamma": [float(g) for g in truth.gamma],
            "intercept": truth.intercept,
            "tau": truth.tau,
            "dgp": dgp.model_dump(),
        },
    )
    print(f"sample n={sample.n} p={sample.p} -> {out / SAMPLE_FILE}")
    return 0


def _simulate_sync(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    if cfg.study == "sample":
        return _simulate_sample(cfg, out)

    base = DGPConfig(n=max(cfg.n_grid), p=cfg.p, covariate_family=cfg.covariate_family, seed=cfg.seed)
    if cfg.study == "picse":
        grid = [base.model_copy(update={"n": n}) for n in cfg.n_grid]
        verdict = verify_picse_consistency(grid, cfg.reps, seed=cfg.seed, threads=cfg.threads)
        frame = verdict.table
    else:
        p_rule = "fixed" if cfg.study == "effect" else cfg.p_rule
        frame = rate_study(
            p_rule,
            cfg.n_grid,
            cfg.reps,
            cfg.policy,
            base=base,
            method=cfg.method,
            weights=cfg.weights,
            seed=cfg.seed,
            threads=cfg.threads,
        )
        ok = frame.loc[~frame["failed"]]
        if cfg.study == "effect":
            verdict = trend_verdict("effect_consistency", ok, "abs_tau_error")
        else:
            verdict = trend_verdict("rate_trend", ok, "max_true_gap")
    reports.write_frame(out / reports.replicates_file(cfg.study), frame)
    reports.write_json(out / reports.VERDICTS_FILE, reports.verdict_report([verdict], seed=cfg.seed, quick=False))
    print(f"{verdict.name}: {'PASS' if verdict.passed else 'FAIL'} ({verdict.detail})")
    return 0


def _verify_sync(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    result = run_battery(quick=cfg.quick, seed=cfg.seed, threads=cfg.threads)
    for name, frame in sorted(result.frames.items()):
        reports.write_frame(out / reports.replicates_file(name), frame)
    reports.write_json(out / reports.VERDICTS_FILE, reports.verdict_report(result.verdicts, seed=cfg.seed, quick=cfg.quick))
    for v in result.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} {v.name}: {v.detail}")
    if not result.passed:
        print(f"failed verdicts: {', '.join(result.failed())}", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "fit": _fit_sync,
    "caliper": _caliper_sync,
    "match": _match_sync,
    "estimate": _estimate_sync,
    "simulate": _simulate_sync,
    "verify": _verify_sync,
}


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    try:
        configure(load_settings().debug)
        cfg = _build_config(args)
        return _COMMANDS[cfg.subcommand](cfg)
    except PicseError as exc:
        print(exc.describe(), file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
