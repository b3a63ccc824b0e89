"""Pair matching and nearest-neighbor matching on an eligibility graph.

Optimal pair matching maximizes the number of pairs first and minimizes
total |PIC| second. Both are delivered by one rectangular assignment per
stratum in which forbidden cells carry a finite cost larger than any
feasible total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from picse_match.effect.estimate import FineStratification
from picse_match.errors import ConsistencyError, InvalidArgumentError, SchemaError
from picse_match.logs import get_logger
from picse_match.matching.caliper import PairVerdict
from picse_match.matching.graph import EligibilityGraph

log = get_logger("matcher")

Objective = Literal["sum", "minmax"]
MATCH_COLUMNS = ("pair_id", "treated_row", "control_row", "pic", "sed")


@dataclass(frozen=True)
class MatchResult:
    """Matched edges plus the fine stratification they induce.

    ``set_id[i]`` is the matched set of unit ``i`` or -1 for a singleton.
    For nearest-neighbor matching several edges share a control.
    """

    treated: np.ndarray
    control: np.ndarray
    pic: np.ndarray
    sed: np.ndarray
    set_id: np.ndarray
    method: str = "optimal"
    objective: str = "sum"
    exclusions: dict[str, int] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.set_id.shape[0])

    @property
    def cardinality(self) -> int:
        return int(self.treated.shape[0])

    @property
    def n_sets(self) -> int:
        return int(self.set_id.max()) + 1 if self.n and self.set_id.max() >= 0 else 0

    @property
    def singletons(self) -> np.ndarray:
        return np.flatnonzero(self.set_id < 0)

    @property
    def empty(self) -> bool:
        return self.cardinality == 0

    def members(self) -> list[np.ndarray]:
        return FineStratification(self.set_id).members()

    def summary(self) -> dict[str, float | int | bool]:
        if self.empty:
            return {"cardinality": 0, "empty": True, "max_abs_pic": 0.0, "mean_abs_pic": 0.0, "max_sed": 0.0}
        abs_pic = np.abs(self.pic)
        return {
            "cardinality": self.cardinality,
            "empty": False,
            "max_abs_pic": float(abs_pic.max()),
            "mean_abs_pic": float(abs_pic.mean()),
            "max_sed": float(self.sed.max()),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "pair_id": self.set_id[self.control].astype(np.int64),
                "treated_row": self.treated.astype(np.int64),
                "control_row": self.control.astype(np.int64),
                "pic": self.pic,
                "sed": self.sed,
            },
            columns=list(MATCH_COLUMNS),
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, n: int) -> "MatchResult":
        missing = [c for c in MATCH_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"match file lacks columns {missing}")
        treated = frame["treated_row"].to_numpy(dtype=np.intp)
        control = frame["control_row"].to_numpy(dtype=np.intp)
        pair_id = frame["pair_id"].to_numpy(dtype=np.intp)
        rows = np.concatenate([treated, control])
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise SchemaError(f"match file references rows outside 0..{n - 1}")
        _, dense = np.unique(pair_id, return_inverse=True)
        set_id = np.full(n, -1, dtype=np.intp)
        for unit_rows in (treated, control):
            prior = set_id[unit_rows]
            set_id[unit_rows] = dense
            clash = ((prior >= 0) & (prior != dense)) | (set_id[unit_rows] != dense)
            if clash.any():
                raise SchemaError("a unit appears in two matched sets", row=int(unit_rows[np.argmax(clash)]))
        method = "nn" if np.unique(control).size < control.size else "optimal"
        return cls(
            treated=treated,
            control=control,
            pic=frame["pic"].to_numpy(dtype=float),
            sed=frame["sed"].to_numpy(dtype=float),
            set_id=set_id,
            method=method,
        )


def _assign_block(rows: np.ndarray, cols: np.ndarray, cost: np.ndarray, allowed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if not allowed.any():
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    k = min(cost.shape)
    big = k * float(cost[allowed].max()) + 1.0
    dense = np.where(allowed, cost, big)
    r, c = linear_sum_assignment(dense)
    keep = allowed[r, c]
    return rows[r[keep]], cols[c[keep]]


def _bottleneck(cost: np.ndarray, allowed: np.ndarray) -> float:
    """Smallest threshold that still admits a maximum-cardinality matching."""

    def size(limit: float) -> int:
        mask = allowed & (cost <= limit)
        graph = csr_matrix(mask.astype(np.int8))
        return int(np.count_nonzero(maximum_bipartite_matching(graph, perm_type="column") >= 0))

    levels = np.unique(cost[allowed])
    target = size(float(levels[-1]))
    lo, hi = 0, levels.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if size(float(levels[mid])) >= target:
            hi = mid
        else:
            lo = mid + 1
    return float(levels[lo])


def _edge_lookup(g: EligibilityGraph, treated: np.ndarray, control: np.ndarray) -> np.ndarray:
    keys = g.treated.astype(np.int64) * g.n + g.control
    wanted = treated.astype(np.int64) * g.n + control
    pos = np.searchsorted(keys, wanted)
    if wanted.size and (pos.max() >= keys.size or np.any(keys[pos] != wanted)):
        raise ConsistencyError("assignment produced an edge outside the eligibility graph")
    return pos


def _finish(g: EligibilityGraph, treated: np.ndarray, control: np.ndarray, set_id: np.ndarray, method: str, objective: str) -> MatchResult:
    order = np.lexsort((control, treated))
    treated, control = treated[order], control[order]
    pos = _edge_lookup(g, treated, control)
    result = MatchResult(
        treated=treated,
        control=control,
        pic=g.pic[pos],
        sed=g.sed[pos],
        set_id=set_id,
        method=method,
        objective=objective,
        exclusions=dict(g.exclusions),
    )
    recheck_pairs(result, g)
    log.info("%s match (%s): %d edges, %d sets, %d singletons", method, objective, result.cardinality, result.n_sets, result.singletons.size)
    return result


def recheck_pairs(m: MatchResult, g: EligibilityGraph) -> None:
    """Every matched edge must still pass the active caliper policy."""
    if m.empty:
        return
    codes = g.verdicts(m.treated, m.control, m.pic, m.sed)
    bad = np.flatnonzero(codes != PairVerdict.ELIGIBLE)
    if bad.size:
        i = int(bad[0])
        raise ConsistencyError(
            f"matched pair ({m.treated[i]}, {m.control[i]}) fails policy {g.policy.kind}: "
            f"{PairVerdict(int(codes[i])).label}"
        )


def pair_match_optimal(g: EligibilityGraph, objective: Objective = "sum") -> MatchResult:
    if objective not in ("sum", "minmax"):
        raise InvalidArgumentError(f"unknown objective {objective!r}")
    out_t: list[np.ndarray] = []
    out_c: list[np.ndarray] = []
    for code in np.unique(g.stratum):
        sel = g.stratum == code
        t_edges, c_edges = g.treated[sel], g.control[sel]
        rows, ti = np.unique(t_edges, return_inverse=True)
        cols, ci = np.unique(c_edges, return_inverse=True)
        cost = np.zeros((rows.size, cols.size))
        allowed = np.zeros((rows.size, cols.size), dtype=bool)
        cost[ti, ci] = np.abs(g.pic[sel])
        allowed[ti, ci] = True
        if objective == "minmax":
            allowed &= cost <= _bottleneck(cost, allowed)
        t, c = _assign_block(rows, cols, cost, allowed)
        out_t.append(t)
        out_c.append(c)

    treated = np.concatenate(out_t) if out_t else np.empty(0, dtype=np.intp)
    control = np.concatenate(out_c) if out_c else np.empty(0, dtype=np.intp)
    order = np.lexsort((control, treated))
    set_id = np.full(g.n, -1, dtype=np.intp)
    set_id[treated[order]] = np.arange(order.size)
    set_id[control[order]] = np.arange(order.size)
    return _finish(g, treated, control, set_id, "optimal", objective)


def nn_match_replacement(g: EligibilityGraph) -> MatchResult:
    """Each treated unit takes its nearest eligible control; ties go to the lower row."""
    set_id = np.full(g.n, -1, dtype=np.intp)
    if g.n_edges == 0:
        return _finish(g, g.treated[:0], g.control[:0], set_id, "nn", "nearest")
    order = np.lexsort((g.control, np.abs(g.pic), g.treated))
    treated_sorted = g.treated[order]
    first = np.r_[True, treated_sorted[1:] != treated_sorted[:-1]]
    best = order[first]
    treated, control = g.treated[best], g.control[best]

    used, set_of_control = np.unique(control, return_inverse=True)
    set_id[used] = np.arange(used.size)
    set_id[treated] = set_of_control
    return _finish(g, treated, control, set_id, "nn", "nearest")
