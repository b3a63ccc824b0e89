"""Report payloads and the deterministic writers behind every CLI artifact."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel

from picse_match.effect.estimate import EffectEstimate
from picse_match.matching.assign import MatchResult
from picse_match.matching.caliper import CaliperPolicy, CaliperQuantities
from picse_match.matching.graph import EligibilityGraph
from picse_match.models.index import IndexFit, cov_beta
from picse_match.simlab.verify import Verdict

FIT_FILE = "fit.json"
CALIPER_FILE = "caliper.json"
MATCH_FILE = "match.csv"
MATCH_SUMMARY_FILE = "match_summary.json"
EFFECT_FILE = "effect.json"
STRATA_FILE = "strata.csv"
VERDICTS_FILE = "verdicts.json"


def replicates_file(study: str) -> str:
    return f"replicates_{study}.csv"


class FitReport(BaseModel):
    family: str
    response: str
    converged: bool
    n_iter: int
    score_norm: float
    n: int
    p: int
    n_strata: int
    strata: list[str]
    covariates: list[str]
    intercepts: list[float]
    beta: list[float]
    std_error: list[float]
    cov_estimator: str
    dispersion: float
    cond_a: float
    cond_b: float


class CaliperReport(BaseModel):
    policy: str
    estimator: str
    picse: float
    s2_index: float
    m: int
    z_star_m: float
    c_n: float
    intrinsic_dimension: float
    nominal_sup: float
    hard_limit: float
    rr_width: float
    euclid_global: float
    euclid_per_dim: list[float]
    cond_s: float
    cond_b: float
    n0: int
    n1: int
    p: int
    C: list[list[float]]


class MatchReport(BaseModel):
    method: str
    objective: str
    policy: str
    cardinality: int
    n_sets: int
    n_singletons: int
    empty: bool
    max_abs_pic: float
    mean_abs_pic: float
    max_sed: float
    edges: int | None = None
    z_star_edges: float | None = None
    exclusions: dict[str, int]


class EffectReport(BaseModel):
    tau_hat: float
    scheme: str
    denominator: float
    n_sets: int
    n_informative: int


class VerdictRecord(BaseModel):
    name: str
    passed: bool
    statistic: float
    threshold: float
    detail: str = ""
    extras: dict[str, float] = {}


class VerdictReport(BaseModel):
    seed: int
    quick: bool
    passed: bool
    failed: list[str]
    verdicts: list[VerdictRecord]


def _floats(a: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def fit_report(fitted: IndexFit, estimator: str = "info", covariates: tuple[str, ...] = ()) -> FitReport:
    cov = cov_beta(fitted, estimator)
    return FitReport(
        family=fitted.family.kind,
        response=fitted.response,
        converged=fitted.converged,
        n_iter=fitted.n_iter,
        score_norm=fitted.score_norm,
        n=fitted.n,
        p=int(fitted.beta.shape[0]),
        n_strata=fitted.n_strata,
        strata=list(fitted.labels),
        covariates=list(covariates) or [f"x{j + 1}" for j in range(fitted.beta.shape[0])],
        intercepts=_floats(fitted.beta0),
        beta=_floats(fitted.beta),
        std_error=_floats(np.sqrt(np.clip(np.diag(cov), 0.0, None))),
        cov_estimator=estimator,
        dispersion=fitted.dispersion,
        cond_a=fitted.cond_a,
        cond_b=fitted.cond_b,
    )


def caliper_report(q: CaliperQuantities, policy: CaliperPolicy) -> CaliperReport:
    return CaliperReport(
        policy=policy.kind,
        estimator=q.estimator,
        picse=q.picse,
        s2_index=q.summary.s2_index,
        m=q.m,
        z_star_m=q.z_star_m,
        c_n=q.c_n,
        intrinsic_dimension=q.dim,
        nominal_sup=q.nominal_sup,
        hard_limit=q.hard_limit,
        rr_width=q.rr_width,
        euclid_global=q.euclidean.global_width,
        euclid_per_dim=_floats(q.euclidean.per_dim),
        cond_s=q.cond_s,
        cond_b=q.cond_b,
        n0=q.n0,
        n1=q.n1,
        p=q.p,
        C=[_floats(row) for row in q.C],
    )


def match_report(m: MatchResult, policy: str, graph: EligibilityGraph | None = None) -> MatchReport:
    summary = m.summary()
    return MatchReport(
        method=m.method,
        objective=m.objective,
        policy=policy,
        cardinality=m.cardinality,
        n_sets=m.n_sets,
        n_singletons=int(m.singletons.size),
        empty=m.empty,
        max_abs_pic=float(summary["max_abs_pic"]),
        mean_abs_pic=float(summary["mean_abs_pic"]),
        max_sed=float(summary["max_sed"]),
        edges=None if graph is None else graph.n_edges,
        z_star_edges=None if graph is None else graph.z_star_edges,
        exclusions=dict(sorted(m.exclusions.items())),
    )


def effect_report(est: EffectEstimate) -> EffectReport:
    return EffectReport(
        tau_hat=est.tau_hat,
        scheme=est.scheme,
        denominator=est.denominator,
        n_sets=est.n_sets,
        n_informative=est.n_informative,
    )


def verdict_report(verdicts: list[Verdict], *, seed: int, quick: bool) -> VerdictReport:
    records = [VerdictRecord.model_validate(v.as_record()) for v in verdicts]
    return VerdictReport(
        seed=seed,
        quick=quick,
        passed=all(v.passed for v in verdicts),
        failed=[v.name for v in verdicts if not v.passed],
        verdicts=records,
    )


def write_json(path: str | Path, payload: BaseModel | dict[str, Any]) -> Path:
    """Sorted keys, two-space indent, trailing newline. Non-finite floats become null."""
    if isinstance(payload, BaseModel):
        payload = json.loads(payload.model_dump_json())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def write_frame(path: str | Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path
