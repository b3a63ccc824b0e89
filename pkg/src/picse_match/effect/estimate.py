"""Matched-set effect estimation through a stratified estimating equation.

For a fine stratification with set means ``zbar`` the unit term is
``w_s * (y_i - eta * (z_i - zbar_s)) * (z_i - zbar_s)``; the equation is
normalized by ``sum_s w_s |s| zbar_s (1 - zbar_s)`` so its slope in eta is -1.
Singletons and zero-weight sets contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Protocol

import numpy as np
import pandas as pd

from picse_match.errors import EstimateUndefinedError, InvalidArgumentError, SchemaError
from picse_match.logs import get_logger

log = get_logger("effect")


class Stratification(Protocol):
    set_id: np.ndarray

    def members(self) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class FineStratification:
    """A partition given by set labels; -1 marks a singleton."""

    set_id: np.ndarray

    def members(self) -> list[np.ndarray]:
        set_id = np.asarray(self.set_id)
        order = np.argsort(set_id, kind="stable")
        ids = set_id[order]
        keep = ids >= 0
        order, ids = order[keep], ids[keep]
        if not order.size:
            return []
        cuts = np.flatnonzero(np.diff(ids)) + 1
        return [np.sort(chunk) for chunk in np.split(order, cuts)]


@dataclass(frozen=True)
class WeightScheme:
    kind: Literal["uniform", "att"] = "uniform"

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "att"):
            raise InvalidArgumentError(f"unknown weight scheme {self.kind!r}")

    def set_weights(self, size: np.ndarray, zbar: np.ndarray) -> np.ndarray:
        informative = (size > 1) & (zbar > 0) & (zbar < 1)
        if self.kind == "uniform":
            return np.where(informative, 1.0, 0.0)
        safe = np.where(informative, 1.0 - zbar, 1.0)
        return np.where(informative, 1.0 / safe, 0.0)


def _scheme(w: WeightScheme | str) -> WeightScheme:
    return w if isinstance(w, WeightScheme) else WeightScheme(w)  # type: ignore[arg-type]


@dataclass(frozen=True)
class SetTable:
    """Per-set quantities in set order."""

    members: list[np.ndarray]
    size: np.ndarray
    n_treated: np.ndarray
    zbar: np.ndarray
    weight: np.ndarray
    wtilde: np.ndarray
    diff: np.ndarray

    @property
    def denominator(self) -> float:
        return float(np.sum(self.wtilde * self.size))


def set_table(match: Stratification, y: np.ndarray | None, z: np.ndarray, w: WeightScheme | str) -> SetTable:
    w = _scheme(w)
    z = np.asarray(z, dtype=float)
    members = match.members()
    k = len(members)
    size = np.array([m.size for m in members], dtype=float)
    n_treated = np.array([z[m].sum() for m in members], dtype=float)
    zbar = n_treated / size if k else np.empty(0)
    weight = w.set_weights(size, zbar) if k else np.empty(0)
    diff = np.zeros(k)
    if y is not None:
        y = np.asarray(y, dtype=float)
        for j, m in enumerate(members):
            if np.isnan(y[m]).any():
                raise SchemaError("outcome missing for a matched unit", row=int(m[np.isnan(y[m])][0]))
            if 0 < n_treated[j] < size[j]:
                t = z[m] == 1
                diff[j] = y[m][t].mean() - y[m][~t].mean()
    return SetTable(
        members=members,
        size=size,
        n_treated=n_treated,
        zbar=zbar,
        weight=weight,
        wtilde=weight * zbar * (1.0 - zbar),
        diff=diff,
    )


def _set_terms(table: SetTable, y: np.ndarray, z: np.ndarray, eta: float) -> np.ndarray:
    """Sum over each set of the unit-level equation terms."""
    out = np.zeros(len(table.members))
    for j, m in enumerate(table.members):
        if table.weight[j] == 0:
            continue
        r = z[m] - table.zbar[j]
        out[j] = table.weight[j] * np.sum((y[m] - eta * r) * r)
    return out


def psi_value(match: Stratification, y: np.ndarray, z: np.ndarray, w: WeightScheme | str, eta: float) -> float:
    table = set_table(match, y, z, w)
    den = table.denominator
    if den <= 0:
        raise EstimateUndefinedError("no informative matched sets (zero denominator)")
    return float(_set_terms(table, np.asarray(y, dtype=float), np.asarray(z, dtype=float), eta).sum() / den)


@dataclass(frozen=True)
class EffectEstimate:
    tau_hat: float
    scheme: str
    denominator: float
    n_sets: int
    n_informative: int
    table: SetTable

    def to_frame(self) -> pd.DataFrame:
        t = self.table
        return pd.DataFrame(
            {
                "set_id": np.arange(len(t.members), dtype=np.int64),
                "size": t.size.astype(np.int64),
                "n_treated": t.n_treated.astype(np.int64),
                "zbar": t.zbar,
                "weight": t.weight,
                "wtilde": t.wtilde,
                "diff": t.diff,
                "contribution": t.wtilde * t.size * t.diff / self.denominator,
            }
        )


def tau_hat(match: Stratification, y: np.ndarray, z: np.ndarray, w: WeightScheme | str = "uniform") -> EffectEstimate:
    w = _scheme(w)
    table = set_table(match, y, z, w)
    den = table.denominator
    if den <= 0:
        raise EstimateUndefinedError("no informative matched sets: all singletons or zero weights")
    tau = float(np.sum(table.wtilde * table.size * table.diff) / den)
    informative = int(np.count_nonzero(table.wtilde > 0))
    log.info("tau_hat=%.6g scheme=%s sets=%d informative=%d denominator=%.6g", tau, w.kind, len(table.members), informative, den)
    return EffectEstimate(
        tau_hat=tau,
        scheme=w.kind,
        denominator=den,
        n_sets=len(table.members),
        n_informative=informative,
        table=table,
    )
