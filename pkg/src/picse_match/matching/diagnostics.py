from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from picse_match.data.dataset import CenteredSample
from picse_match.matching.assign import MatchResult
from picse_match.models.index import IndexFit


@dataclass(frozen=True)
class MatchDiagnostics:
    empty: bool
    cardinality: int
    n_sets: int
    n_singletons: int
    max_abs_pic: float
    mean_abs_pic: float
    max_sed: float
    exclusions: dict[str, int] = field(default_factory=dict)
    max_true_gap: float | None = None
    max_pic_error: float | None = None


def match_diagnostics(
    m: MatchResult,
    fit: IndexFit,
    s: CenteredSample,
    beta_true: np.ndarray | None = None,
) -> MatchDiagnostics:
    """Summaries of matched discrepancies; truth-based gaps when ``beta_true`` is known."""
    summary = m.summary()
    true_gap = pic_error = None
    if beta_true is not None:
        beta_true = np.asarray(beta_true, dtype=float)[-s.p :]
        if m.empty:
            true_gap = pic_error = 0.0
        else:
            dx = s.x[m.treated] - s.x[m.control]
            true_gap = float(np.max(np.abs(dx @ beta_true)))
            pic_error = float(np.max(np.abs(dx @ (fit.beta - beta_true))))
    return MatchDiagnostics(
        empty=bool(summary["empty"]),
        cardinality=m.cardinality,
        n_sets=m.n_sets,
        n_singletons=int(m.singletons.size),
        max_abs_pic=float(summary["max_abs_pic"]),
        mean_abs_pic=float(summary["mean_abs_pic"]),
        max_sed=float(summary["max_sed"]),
        exclusions=dict(m.exclusions),
        max_true_gap=true_gap,
        max_pic_error=pic_error,
    )
