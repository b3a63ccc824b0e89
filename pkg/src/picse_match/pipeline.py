from __future__ import annotations

from dataclasses import dataclass

from picse_match.data.dataset import CenteredSample, Sample, center
from picse_match.logs import get_logger
from picse_match.matching.assign import MatchResult, Objective, nn_match_replacement, pair_match_optimal
from picse_match.matching.caliper import CaliperPolicy, CaliperQuantities, caliper_quantities, make_policy
from picse_match.matching.graph import EligibilityGraph, build_graph
from picse_match.models.families import ScoreFamily
from picse_match.models.index import FitOptions, IndexFit, fit

log = get_logger("pipeline")


@dataclass(frozen=True)
class PipelineResult:
    centered: CenteredSample
    fit: IndexFit
    quantities: CaliperQuantities
    policy: CaliperPolicy
    graph: EligibilityGraph
    match: MatchResult


def fit_and_calipers(
    sample: Sample | CenteredSample,
    *,
    family: ScoreFamily | str = "logistic",
    estimator: str = "inverse_information",
    c_n: float | None = None,
    intrinsic: bool = False,
    fit_options: FitOptions | None = None,
) -> tuple[CenteredSample, IndexFit, CaliperQuantities]:
    cs = center(sample)
    fitted = fit(cs, family, fit_options)
    return cs, fitted, caliper_quantities(cs, fitted, estimator, c_n, intrinsic=intrinsic)


def run_pipeline(
    sample: Sample | CenteredSample,
    *,
    family: ScoreFamily | str = "logistic",
    estimator: str = "inverse_information",
    policy: str = "picse_narrowed",
    c_n: float | None = None,
    intrinsic: bool = False,
    method: str = "optimal",
    objective: Objective = "sum",
    fit_options: FitOptions | None = None,
    threads: int = 1,
) -> PipelineResult:
    """Center, fit, compute calipers, build the eligibility graph and match."""
    cs, fitted, q = fit_and_calipers(
        sample, family=family, estimator=estimator, c_n=c_n, intrinsic=intrinsic, fit_options=fit_options
    )
    chosen = make_policy(policy, q)
    graph = build_graph(cs, fitted, q.C, chosen, threads=threads)
    if method == "nn":
        matched = nn_match_replacement(graph)
    else:
        matched = pair_match_optimal(graph, objective)
    return PipelineResult(centered=cs, fit=fitted, quantities=q, policy=chosen, graph=graph, match=matched)
