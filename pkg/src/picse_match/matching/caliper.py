"""Caliper quantities for index-score matching.

Everything here is a pure function of the centered covariates, the fitted
slopes and a slope covariance estimate ``C``. Pairwise functions accept
scalars or broadcastable arrays.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import IntEnum
from typing import Literal

import numpy as np
from scipy.spatial.distance import cdist

from picse_match.data.dataset import CenteredSample
from picse_match.errors import (
    ConsistencyError,
    DegenerateError,
    DegenerateIndexWarning,
    DimensionError,
    InvalidArgumentError,
)
from picse_match.linalg import condition_number, fip, op_norm, sqrt_psd, symmetrize
from picse_match.logs import get_logger
from picse_match.models.index import IndexFit, cov_beta, index_values

log = get_logger("caliper")

PolicyKind = Literal[
    "picse_fixed", "picse_narrowed", "picse_hard66", "picse_hard24", "rr02", "euclidean", "none"
]

_POLICY_ALIASES: dict[str, PolicyKind] = {
    "picse-fixed": "picse_fixed",
    "picse-narrowed": "picse_narrowed",
    "hard66": "picse_hard66",
    "picse-hard66": "picse_hard66",
    "hard24": "picse_hard24",
    "picse-hard24": "picse_hard24",
}
_POLICY_KINDS = frozenset(PolicyKind.__args__)  # type: ignore[attr-defined]


class PairVerdict(IntEnum):
    ELIGIBLE = 0
    INELIGIBLE_PIC = 1
    INELIGIBLE_SED = 2
    INELIGIBLE_EUCLIDEAN = 3

    @property
    def label(self) -> str:
        return self.name.lower()


def _out(value: np.ndarray) -> float | np.ndarray:
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class CovarianceSummary:
    S: np.ndarray
    s2_index: float
    S_perp: np.ndarray


@dataclass(frozen=True)
class EuclideanCalipers:
    global_width: float
    per_dim: np.ndarray


def s_matrix(s: CenteredSample) -> np.ndarray:
    dof = s.n - s.L
    if dof <= 0:
        raise DimensionError(f"n - L must be positive (n={s.n}, L={s.L})")
    return symmetrize(s.x.T @ s.x / dof)


def s_perp(S: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Covariance of x projected onto the orthocomplement of the index direction."""
    S = symmetrize(S)
    beta = np.asarray(beta, dtype=float)
    sb = S @ beta
    s2 = float(beta @ sb)
    floor = 1e-14 * max(float(np.trace(S)), np.finfo(float).tiny) * float(beta @ beta)
    if s2 <= floor:
        warnings.warn(
            "index direction is degenerate (beta' S beta = 0); using S in place of its projection",
            DegenerateIndexWarning,
            stacklevel=2,
        )
        return S
    return symmetrize(S - np.outer(sb, sb) / s2)


def covariance_summary(s: CenteredSample, beta: np.ndarray) -> CovarianceSummary:
    S = s_matrix(s)
    beta = np.asarray(beta, dtype=float)
    return CovarianceSummary(S=S, s2_index=float(beta @ S @ beta), S_perp=s_perp(S, beta))


def pic_se(S_perp: np.ndarray, C: np.ndarray) -> float:
    S_perp = np.asarray(S_perp, dtype=float)
    C = np.asarray(C, dtype=float)
    if S_perp.shape != C.shape:
        raise InvalidArgumentError(f"shape mismatch {S_perp.shape} vs {C.shape}")
    v = 2.0 * fip(S_perp, C)
    if v < -1e-10 * max(1.0, float(np.linalg.norm(S_perp) * np.linalg.norm(C))):
        raise ConsistencyError(f"negative PIC variance {v:.3e}")
    return math.sqrt(max(v, 0.0))


def z_star(m: int) -> float:
    if m < 1:
        raise InvalidArgumentError(f"z* needs a positive count, got {m}")
    return math.sqrt(2.0 * math.log(2.0 * m))


def index_error_distance(x_i: np.ndarray, x_j: np.ndarray, C: np.ndarray) -> float:
    d = np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float)
    return math.sqrt(max(float(d @ C @ d), 0.0))


def c_factor(C: np.ndarray) -> np.ndarray:
    return sqrt_psd(C)


def index_error_distances(u_t: np.ndarray, u_c: np.ndarray) -> np.ndarray:
    """All treated-by-control distances from per-unit factor products u = x C^{1/2}."""
    return cdist(np.atleast_2d(u_t), np.atleast_2d(u_c))


def intrinsic_dimension(M: np.ndarray) -> float:
    top = op_norm(M)
    if top <= 0.0:
        return 0.0
    return float(np.trace(M)) / top


def _log_ratio(m: int, dim: float, picse: float) -> float:
    if m < 1:
        raise InvalidArgumentError("both arms must be nonempty")
    if m == 1:
        return 0.0
    if dim <= 0:
        if picse == 0:
            return 0.0
        raise DegenerateError("dimension divisor is zero")
    return math.sqrt(math.log(m) / dim)


def nominal_sup(picse: float, n0: int, n1: int, p: int, *, dim: float | None = None) -> float:
    """Nominal supremum of index error distances among eligible pairs."""
    if p < 2:
        raise InvalidArgumentError(f"need p >= 2, got {p}")
    dim = p - 1 if dim is None else dim
    return picse * (1.0 + _log_ratio(min(n0, n1), dim, picse))


def hard_limit(picse: float, n0: int, n1: int, p: int, *, dim: float | None = None) -> float:
    """Index error distance at which a pair loses all PIC allowance."""
    if p < 2:
        raise InvalidArgumentError(f"need p >= 2, got {p}")
    dim = p - 1 if dim is None else dim
    return picse * (2.0 + _log_ratio(min(n0, n1), dim, picse))


def excess(sed: float | np.ndarray, nominal: float) -> float | np.ndarray:
    return _out(np.maximum(0.0, np.asarray(sed, dtype=float) - nominal))


def narrowed_codes(
    pic: np.ndarray, sed: np.ndarray, picse: float, nominal: float, c_n: float
) -> np.ndarray:
    pic = np.abs(np.asarray(pic, dtype=float))
    e = np.maximum(0.0, np.asarray(sed, dtype=float) - nominal)
    # Exact-tie pairs stay eligible when the PIC SE itself is zero.
    blocked = (e > picse) | ((e == picse) & (picse > 0))
    codes = np.where(pic <= c_n * (picse - e), PairVerdict.ELIGIBLE, PairVerdict.INELIGIBLE_PIC)
    return np.where(blocked, PairVerdict.INELIGIBLE_SED, codes).astype(np.int8)


def eligible(
    pic: float,
    sed: float,
    picse: float,
    n0: int,
    n1: int,
    p: int,
    c_n: float | None = None,
    *,
    dim: float | None = None,
) -> PairVerdict:
    if sed < 0 or picse < 0:
        raise InvalidArgumentError("sed and picse must be nonnegative")
    c_n = z_star(min(n0, n1)) if c_n is None else c_n
    ns = nominal_sup(picse, n0, n1, p, dim=dim)
    return PairVerdict(int(narrowed_codes(np.asarray(pic), np.asarray(sed), picse, ns, c_n)))


def rr_caliper(index: np.ndarray) -> float:
    index = np.asarray(index, dtype=float)
    if index.size < 2:
        return 0.0
    return 0.2 * float(np.std(index, ddof=1))


def euclidean_calipers(S: np.ndarray, n: int, p: int) -> EuclideanCalipers:
    if p < 2:
        raise InvalidArgumentError(f"need p >= 2, got {p}")
    factor = 1.0 + math.sqrt(math.log(n) / (p - 1))
    return EuclideanCalipers(
        global_width=math.sqrt(max(float(np.trace(S)), 0.0)) * factor,
        per_dim=np.sqrt(np.maximum(np.diag(S), 0.0)) * factor,
    )


def chaos_bound(Sigma: np.ndarray, C: np.ndarray, m_pairs: int) -> float:
    if m_pairs < 1:
        raise InvalidArgumentError("m_pairs must be positive")
    root = sqrt_psd(Sigma)
    dim = intrinsic_dimension(symmetrize(root @ C @ root))
    base = math.sqrt(max(2.0 * fip(Sigma, C), 0.0))
    if m_pairs == 1:
        return base
    if dim <= 0:
        raise DegenerateError("intrinsic dimension of Sigma^{1/2} C Sigma^{1/2} is zero")
    return base * (1.0 + math.sqrt(math.log(m_pairs) / dim))


@dataclass(frozen=True)
class CaliperQuantities:
    summary: CovarianceSummary
    C: np.ndarray
    estimator: str
    picse: float
    m: int
    z_star_m: float
    c_n: float
    dim: float
    nominal_sup: float
    hard_limit: float
    rr_width: float
    euclidean: EuclideanCalipers
    cond_s: float
    cond_b: float
    n0: int
    n1: int
    p: int


def caliper_quantities(
    s: CenteredSample,
    fit: IndexFit,
    estimator: str = "inverse_information",
    c_n: float | None = None,
    *,
    intrinsic: bool = False,
) -> CaliperQuantities:
    s.require_both_arms()
    C = cov_beta(fit, estimator)
    summary = covariance_summary(s, fit.beta)
    picse = pic_se(summary.S_perp, C)
    m = min(s.n0, s.n1)
    zm = z_star(m)
    if intrinsic:
        root = sqrt_psd(summary.S_perp)
        dim = intrinsic_dimension(symmetrize(root @ C @ root))
    else:
        dim = float(s.p - 1)
    q = CaliperQuantities(
        summary=summary,
        C=C,
        estimator=estimator,
        picse=picse,
        m=m,
        z_star_m=zm,
        c_n=zm if c_n is None else float(c_n),
        dim=dim,
        nominal_sup=nominal_sup(picse, s.n0, s.n1, s.p, dim=dim),
        hard_limit=hard_limit(picse, s.n0, s.n1, s.p, dim=dim),
        rr_width=rr_caliper(index_values(fit, s)),
        euclidean=euclidean_calipers(summary.S, s.n, s.p),
        cond_s=condition_number(summary.S),
        cond_b=fit.cond_b,
        n0=s.n0,
        n1=s.n1,
        p=s.p,
    )
    log.info(
        "picse=%.6g z*_%d=%.5f c_n=%.5f nominal_sup=%.6g hard_limit=%.6g rr02=%.6g cond(S)=%.3e",
        q.picse, m, zm, q.c_n, q.nominal_sup, q.hard_limit, q.rr_width, q.cond_s,
    )
    return q


@dataclass(frozen=True)
class CaliperPolicy:
    kind: PolicyKind
    c_n: float = 0.0
    picse: float = 0.0
    nominal_sup: float = 0.0
    hard_limit: float = 0.0
    rr_width: float = 0.0
    euclid_global: float = math.inf
    euclid_per_dim: np.ndarray | None = None

    def __post_init__(self) -> None:
        widths = (self.c_n, self.picse, self.nominal_sup, self.hard_limit, self.rr_width, self.euclid_global)
        if any(w < 0 for w in widths):
            raise InvalidArgumentError("caliper widths must be nonnegative")

    @property
    def needs_dx(self) -> bool:
        return self.kind == "euclidean"

    def classify(self, pic: np.ndarray, sed: np.ndarray, dx: np.ndarray | None = None) -> np.ndarray:
        """Verdict codes for candidate pairs; ``dx`` is (..., p) covariate differences."""
        pic = np.abs(np.asarray(pic, dtype=float))
        sed = np.asarray(sed, dtype=float)
        eligible_code = np.int8(PairVerdict.ELIGIBLE)
        pic_code = np.int8(PairVerdict.INELIGIBLE_PIC)
        sed_code = np.int8(PairVerdict.INELIGIBLE_SED)
        kind = self.kind
        if kind == "none":
            return np.zeros(np.broadcast(pic, sed).shape, dtype=np.int8)
        if kind == "rr02":
            return np.where(pic <= self.rr_width, eligible_code, pic_code).astype(np.int8)
        if kind in ("picse_narrowed", "euclidean"):
            codes = narrowed_codes(pic, sed, self.picse, self.nominal_sup, self.c_n)
            if kind == "euclidean":
                if dx is None:
                    raise InvalidArgumentError("euclidean policy needs covariate differences")
                far = np.linalg.norm(dx, axis=-1) > self.euclid_global
                if self.euclid_per_dim is not None:
                    far |= np.any(np.abs(dx) > self.euclid_per_dim, axis=-1)
                codes = np.where((codes == eligible_code) & far, np.int8(PairVerdict.INELIGIBLE_EUCLIDEAN), codes)
            return codes.astype(np.int8)

        codes = np.where(pic <= self.c_n * self.picse, eligible_code, pic_code)
        if kind == "picse_hard66":
            blocked = (sed >= self.hard_limit) & ((sed > 0) | (self.hard_limit > 0))
            codes = np.where(blocked, sed_code, codes)
        elif kind == "picse_hard24":
            codes = np.where(sed > self.nominal_sup, sed_code, codes)
        return codes.astype(np.int8)

    def check(self, pic: float, sed: float, dx: np.ndarray | None = None) -> PairVerdict:
        return PairVerdict(int(self.classify(np.asarray(pic), np.asarray(sed), dx)))


def normalize_policy(kind: str) -> PolicyKind:
    name = _POLICY_ALIASES.get(kind, kind.replace("-", "_"))
    if name not in _POLICY_KINDS:
        raise InvalidArgumentError(f"unknown caliper policy {kind!r}")
    return name  # type: ignore[return-value]


def make_policy(kind: str, q: CaliperQuantities | None = None) -> CaliperPolicy:
    name = normalize_policy(kind)
    if name == "none":
        return CaliperPolicy(kind="none")
    if q is None:
        raise InvalidArgumentError(f"policy {name} needs caliper quantities")
    return CaliperPolicy(
        kind=name,
        c_n=q.c_n,
        picse=q.picse,
        nominal_sup=q.nominal_sup,
        hard_limit=q.hard_limit,
        rr_width=q.rr_width,
        euclid_global=q.euclidean.global_width,
        euclid_per_dim=q.euclidean.per_dim,
    )
