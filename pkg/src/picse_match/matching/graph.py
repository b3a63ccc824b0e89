from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from picse_match.data.dataset import CenteredSample
from picse_match.errors import ConvergenceError
from picse_match.logs import get_logger
from picse_match.matching.caliper import CaliperPolicy, PairVerdict, c_factor, index_error_distances, z_star
from picse_match.models.index import IndexFit

log = get_logger("matcher")

# Candidate pairs evaluated per block; bounds the (block, n_controls, p) difference tensor.
_BLOCK_CELLS = 1 << 21


@dataclass(frozen=True)
class EligibilityGraph:
    """Eligible treated-control edges, sorted by (treated row, control row)."""

    treated: np.ndarray
    control: np.ndarray
    pic: np.ndarray
    sed: np.ndarray
    stratum: np.ndarray
    treated_units: np.ndarray
    control_units: np.ndarray
    n: int
    policy: CaliperPolicy
    x: np.ndarray
    exclusions: dict[str, int] = field(default_factory=dict)
    evaluated: int = 0

    @property
    def n_edges(self) -> int:
        return int(self.treated.shape[0])

    @property
    def z_star_edges(self) -> float | None:
        return z_star(self.n_edges) if self.n_edges else None

    def verdicts(self, treated: np.ndarray, control: np.ndarray, pic: np.ndarray, sed: np.ndarray) -> np.ndarray:
        dx = self.x[treated] - self.x[control] if self.policy.needs_dx else None
        return self.policy.classify(pic, sed, dx)


def _evaluate_block(
    rows: np.ndarray,
    cols: np.ndarray,
    idx: np.ndarray,
    u: np.ndarray,
    x: np.ndarray,
    policy: CaliperPolicy,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    pic = idx[rows][:, None] - idx[cols][None, :]
    sed = index_error_distances(u[rows], u[cols])
    dx = x[rows][:, None, :] - x[cols][None, :, :] if policy.needs_dx else None
    codes = policy.classify(pic, sed, dx)
    ti, ci = np.nonzero(codes == PairVerdict.ELIGIBLE)
    return rows[ti], cols[ci], pic[ti, ci], sed[ti, ci], codes.ravel()


def build_graph(
    s: CenteredSample,
    fit: IndexFit,
    C: np.ndarray,
    policy: CaliperPolicy,
    *,
    threads: int = 1,
) -> EligibilityGraph:
    if not fit.converged:
        raise ConvergenceError("eligibility graph needs a converged index fit")
    x = s.x
    idx = x @ fit.beta
    u = x @ c_factor(C)
    z = s.z.astype(bool)

    tasks = []
    for code in range(s.L):
        in_stratum = s.codes == code
        t_rows = np.flatnonzero(in_stratum & z)
        c_rows = np.flatnonzero(in_stratum & ~z)
        if t_rows.size == 0 or c_rows.size == 0:
            continue
        per_row = c_rows.size * (s.p if policy.needs_dx else 1)
        block = max(1, _BLOCK_CELLS // per_row)
        for start in range(0, t_rows.size, block):
            tasks.append((code, t_rows[start : start + block], c_rows))

    results = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_evaluate_block)(rows, cols, idx, u, x, policy) for _, rows, cols in tasks
    )

    counts: Counter[str] = Counter({v.label: 0 for v in PairVerdict})
    parts_t, parts_c, parts_pic, parts_sed, parts_l = [], [], [], [], []
    for (code, _, _), (t, c, pic, sed, codes) in zip(tasks, results):
        parts_t.append(t)
        parts_c.append(c)
        parts_pic.append(pic)
        parts_sed.append(sed)
        parts_l.append(np.full(t.shape[0], code, dtype=np.intp))
        for value, count in zip(*np.unique(codes, return_counts=True)):
            counts[PairVerdict(int(value)).label] += int(count)

    def _cat(parts: list[np.ndarray], dtype: type) -> np.ndarray:
        return np.concatenate(parts).astype(dtype) if parts else np.empty(0, dtype=dtype)

    treated = _cat(parts_t, np.intp)
    control = _cat(parts_c, np.intp)
    order = np.lexsort((control, treated))
    evaluated = int(sum(counts.values()))

    g = EligibilityGraph(
        treated=treated[order],
        control=control[order],
        pic=_cat(parts_pic, float)[order],
        sed=_cat(parts_sed, float)[order],
        stratum=_cat(parts_l, np.intp)[order],
        treated_units=np.flatnonzero(z),
        control_units=np.flatnonzero(~z),
        n=s.n,
        policy=policy,
        x=x,
        exclusions={k: v for k, v in counts.items() if k != PairVerdict.ELIGIBLE.label},
        evaluated=evaluated,
    )
    zs = g.z_star_edges
    log.info(
        "graph policy=%s evaluated=%d eligible=%d excluded=%s z*_min(n0,n1)=%.5f z*_|E|=%s",
        policy.kind,
        evaluated,
        g.n_edges,
        dict(sorted(g.exclusions.items())),
        z_star(max(1, min(s.n0, s.n1))),
        "n/a" if zs is None else f"{zs:.5f}",
    )
    return g
