"""Observational samples: ingestion, validation and centering.

A ``Sample`` holds covariates ``x`` (n x p), treatment ``z`` in {0, 1}, an
optional outcome ``y`` (NaN marks a missing value) and optional stratum
labels. ``center`` subtracts column means, within strata when strata exist,
and keeps the subtracted means so the raw covariates can be recovered.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from picse_match.config import ColumnSchema
from picse_match.errors import DimensionError, ParseError, SchemaError
from picse_match.logs import get_logger

log = get_logger("dataset")

# Header occupies line 1 of the file; data row k (0-based) sits on line k + 2.
_LINE_OFFSET = 2


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray | None = None
    stratum: np.ndarray | None = None
    covariates: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise DimensionError(f"covariates must be a 2-d array, got shape {x.shape}")
        n, p = x.shape
        if p < 2:
            raise DimensionError(f"need at least 2 covariates, got {p}")
        if not np.all(np.isfinite(x)):
            raise SchemaError("covariates contain missing or non-finite values")

        z = np.asarray(self.z)
        if z.shape != (n,):
            raise DimensionError(f"treatment has shape {z.shape}, expected ({n},)")
        bad = np.flatnonzero((z != 0) & (z != 1))
        if bad.size:
            raise SchemaError("treatment must be 0 or 1", row=int(bad[0]))
        z = z.astype(np.int8)

        y = None
        if self.y is not None:
            y = np.asarray(self.y, dtype=float)
            if y.shape != (n,):
                raise DimensionError(f"outcome has shape {y.shape}, expected ({n},)")

        stratum = None
        if self.stratum is not None:
            stratum = np.asarray(self.stratum).astype(str)
            if stratum.shape != (n,):
                raise DimensionError(f"stratum has shape {stratum.shape}, expected ({n},)")
            if np.unique(stratum).size >= n:
                raise DimensionError("number of strata must be smaller than n")

        names = tuple(self.covariates) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise DimensionError(f"{len(names)} covariate names for {p} columns")

        codes, _ = _stratum_codes(stratum, n)
        for j in range(p):
            if _is_constant(x[:, j], codes):
                raise SchemaError(
                    "covariate is constant and cannot enter a full-rank index model",
                    column=names[j],
                    assumption="A11",
                )

        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "z", _readonly(z))
        object.__setattr__(self, "y", None if y is None else _readonly(y))
        object.__setattr__(self, "stratum", None if stratum is None else _readonly(stratum))
        object.__setattr__(self, "covariates", names)

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    @property
    def L(self) -> int:
        if self.stratum is None:
            return 1
        return int(np.unique(self.stratum).size)

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def require_both_arms(self) -> None:
        if self.n0 < 1 or self.n1 < 1:
            raise DimensionError(f"matching needs both arms nonempty (n0={self.n0}, n1={self.n1})")


@dataclass(frozen=True)
class CenteredSample:
    """A sample whose covariate columns have zero (stratum) means.

    ``means[codes[i]]`` is the vector subtracted from row ``i``; ``labels``
    lists stratum labels in code order.
    """

    sample: Sample
    x: np.ndarray
    means: np.ndarray
    codes: np.ndarray
    labels: tuple[str, ...] = field(default=())

    @property
    def z(self) -> np.ndarray:
        return self.sample.z

    @property
    def y(self) -> np.ndarray | None:
        return self.sample.y

    @property
    def n(self) -> int:
        return self.sample.n

    @property
    def p(self) -> int:
        return self.sample.p

    @property
    def L(self) -> int:
        return int(self.means.shape[0])

    @property
    def n0(self) -> int:
        return self.sample.n0

    @property
    def n1(self) -> int:
        return self.sample.n1

    @property
    def covariates(self) -> tuple[str, ...]:
        return self.sample.covariates

    def uncenter(self) -> np.ndarray:
        return self.x + self.means[self.codes]

    def require_both_arms(self) -> None:
        self.sample.require_both_arms()


def _stratum_codes(stratum: np.ndarray | None, n: int) -> tuple[np.ndarray, tuple[str, ...]]:
    if stratum is None:
        return np.zeros(n, dtype=np.intp), ("all",)
    labels, codes = np.unique(stratum, return_inverse=True)
    return codes.astype(np.intp), tuple(str(v) for v in labels)


def _is_constant(col: np.ndarray, codes: np.ndarray) -> bool:
    # Constant within every stratum means the column is absorbed by the intercepts.
    means = np.bincount(codes, weights=col) / np.bincount(codes)
    resid = col - means[codes]
    scale = max(1.0, float(np.max(np.abs(col))))
    return bool(np.max(np.abs(resid)) <= 1e-12 * scale)


def center(s: Sample | CenteredSample) -> CenteredSample:
    if isinstance(s, CenteredSample):
        base, x, prior = s.sample, s.x, s.means
    else:
        base, x, prior = s, s.x, None

    codes, labels = _stratum_codes(base.stratum, base.n)
    counts = np.bincount(codes).astype(float)
    means = np.zeros((len(labels), base.p))
    for j in range(base.p):
        means[:, j] = np.bincount(codes, weights=x[:, j]) / counts
    xc = x - means[codes]
    if prior is not None:
        means = means + prior

    log.debug("centered n=%d p=%d over %d stratum(s)", base.n, base.p, len(labels))
    return CenteredSample(
        sample=base,
        x=_readonly(xc),
        means=_readonly(means),
        codes=_readonly(codes),
        labels=labels,
    )


def _read_frame(path: Path) -> pd.DataFrame:
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw[: exc.start].count(b"\n") + 1
        raise ParseError(f"invalid UTF-8 byte {raw[exc.start]:#04x}", row=line) from exc
    try:
        return pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise ParseError(f"input file is empty: {path}") from exc
    except pd.errors.ParserError as exc:
        found = re.search(r"line (\d+)", str(exc))
        raise ParseError(
            f"malformed CSV: {str(exc).strip()}", row=int(found.group(1)) if found else None
        ) from exc


def load_csv(path: str | Path, schema: ColumnSchema) -> Sample:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    frame = _read_frame(path)
    frame.columns = [c.strip() for c in frame.columns]

    claimed = [c for c in (schema.treatment, schema.outcome, schema.stratum) if c]
    covariates = list(schema.covariates) if schema.covariates is not None else [
        c for c in frame.columns if c not in claimed
    ]
    for column in claimed + covariates:
        if column not in frame.columns:
            raise SchemaError("declared column missing from header", column=column)

    x = np.column_stack([_numeric_column(frame, c, allow_missing=False) for c in covariates]) if covariates else (
        np.empty((len(frame), 0))
    )
    if x.shape[1] < 2:
        raise DimensionError(f"need at least 2 covariates, schema yields {x.shape[1]}")

    z_raw = _numeric_column(frame, schema.treatment, allow_missing=False, error=SchemaError)
    bad = np.flatnonzero((z_raw != 0) & (z_raw != 1))
    if bad.size:
        raise SchemaError(
            f"treatment value {frame[schema.treatment].iloc[bad[0]]!r} is not 0 or 1",
            row=int(bad[0]) + _LINE_OFFSET,
            column=schema.treatment,
        )

    y = _numeric_column(frame, schema.outcome, allow_missing=True) if schema.outcome else None

    stratum = None
    if schema.stratum:
        stratum = frame[schema.stratum].str.strip().to_numpy()
        empty = np.flatnonzero(stratum == "")
        if empty.size:
            raise SchemaError("missing stratum label", row=int(empty[0]) + _LINE_OFFSET, column=schema.stratum)

    sample = Sample(x=x, z=z_raw.astype(np.int8), y=y, stratum=stratum, covariates=tuple(covariates))
    log.info("loaded %s: n=%d p=%d L=%d (n0=%d, n1=%d)", path.name, sample.n, sample.p, sample.L, sample.n0, sample.n1)
    return sample


def _numeric_column(
    frame: pd.DataFrame,
    column: str,
    *,
    allow_missing: bool,
    error: type[SchemaError] = ParseError,
) -> np.ndarray:
    raw = frame[column].str.strip()
    missing = (raw == "").to_numpy()
    if missing.any() and not allow_missing:
        raise error("missing value", row=int(np.flatnonzero(missing)[0]) + _LINE_OFFSET, column=column)
    values = pd.to_numeric(raw.where(~missing, None), errors="coerce").to_numpy(dtype=float)
    malformed = np.flatnonzero(np.isnan(values) & ~missing)
    if malformed.size:
        row = int(malformed[0])
        raise error(f"malformed numeric cell {raw.iloc[row]!r}", row=row + _LINE_OFFSET, column=column)
    return values
