from picse_match.matching.assign import MatchResult, nn_match_replacement, pair_match_optimal, recheck_pairs
from picse_match.matching.caliper import (
    CaliperPolicy,
    CaliperQuantities,
    CovarianceSummary,
    EuclideanCalipers,
    PairVerdict,
    caliper_quantities,
    chaos_bound,
    covariance_summary,
    eligible,
    euclidean_calipers,
    excess,
    hard_limit,
    index_error_distance,
    index_error_distances,
    intrinsic_dimension,
    make_policy,
    nominal_sup,
    pic_se,
    rr_caliper,
    s_matrix,
    s_perp,
    z_star,
)
from picse_match.matching.diagnostics import MatchDiagnostics, match_diagnostics
from picse_match.matching.graph import EligibilityGraph, build_graph

__all__ = [
    "CaliperPolicy",
    "CaliperQuantities",
    "CovarianceSummary",
    "EligibilityGraph",
    "EuclideanCalipers",
    "MatchDiagnostics",
    "MatchResult",
    "PairVerdict",
    "build_graph",
    "caliper_quantities",
    "chaos_bound",
    "covariance_summary",
    "eligible",
    "euclidean_calipers",
    "excess",
    "hard_limit",
    "index_error_distance",
    "index_error_distances",
    "intrinsic_dimension",
    "make_policy",
    "match_diagnostics",
    "nn_match_replacement",
    "nominal_sup",
    "pair_match_optimal",
    "pic_se",
    "recheck_pairs",
    "rr_caliper",
    "s_matrix",
    "s_perp",
    "z_star",
]
