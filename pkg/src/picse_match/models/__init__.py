from picse_match.models.families import LinearFamily, LogisticFamily, ScoreFamily, ZeroPenalty, resolve_family
from picse_match.models.index import (
    Design,
    FitOptions,
    IndexFit,
    Linearization,
    a_hat,
    b_hat,
    cov_beta,
    fit,
    index_values,
    linearize,
    mean_score,
    true_parameter,
)

__all__ = [
    "Design",
    "FitOptions",
    "IndexFit",
    "LinearFamily",
    "Linearization",
    "LogisticFamily",
    "ScoreFamily",
    "ZeroPenalty",
    "a_hat",
    "b_hat",
    "cov_beta",
    "fit",
    "index_values",
    "linearize",
    "mean_score",
    "resolve_family",
    "true_parameter",
]
