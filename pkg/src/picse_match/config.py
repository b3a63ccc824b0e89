from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from picse_match.errors import ConfigError


@dataclass(frozen=True)
class Settings:
    out_dir: str
    seed: int
    threads: int
    debug: bool
    max_iter: int
    tol: float
    separation_cap: float
    condition_limit: float


def _env_number(key: str, default: str, kind: type) -> Any:
    raw = os.getenv(key, default).strip() or default
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} must be {kind.__name__}, got {raw!r}") from exc


def load_settings() -> Settings:
    load_dotenv()

    out_dir = os.getenv("PICSE_OUT_DIR", "out").strip() or "out"
    debug = os.getenv("PICSE_DEBUG", "").lower() in {"1", "true", "yes"}
    seed = _env_number("PICSE_SEED", "20240601", int)
    threads = _env_number("PICSE_THREADS", "1", int)
    if seed < 0 or seed >= 2**64:
        raise ConfigError("PICSE_SEED must be an unsigned 64-bit integer")
    if threads < 1:
        raise ConfigError("PICSE_THREADS must be at least 1")

    return Settings(
        out_dir=out_dir,
        seed=seed,
        threads=threads,
        debug=debug,
        max_iter=_env_number("PICSE_MAX_ITER", "50", int),
        tol=_env_number("PICSE_TOL", "1e-10", float),
        separation_cap=_env_number("PICSE_SEPARATION_CAP", "30", float),
        condition_limit=_env_number("PICSE_CONDITION_LIMIT", "1e12", float),
    )


class ColumnSchema(BaseModel):
    """Column roles of an input CSV. Covariates default to every unclaimed column."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    treatment: str
    covariates: list[str] | None = None
    outcome: str | None = None
    stratum: str | None = None

    @model_validator(mode="after")
    def _distinct_roles(self) -> "ColumnSchema":
        claimed = [c for c in (self.treatment, self.outcome, self.stratum) if c]
        if len(set(claimed)) != len(claimed):
            raise ValueError("treatment, outcome and stratum must be distinct columns")
        if self.covariates is not None:
            overlap = set(self.covariates) & set(claimed)
            if overlap:
                raise ValueError(f"covariates overlap other roles: {sorted(overlap)}")
            if len(set(self.covariates)) != len(self.covariates):
                raise ValueError("duplicate covariate columns")
        return self


def load_schema(path: str | Path) -> ColumnSchema:
    data = _read_toml(path)
    section = data.get("schema", data)
    try:
        return ColumnSchema.model_validate(section)
    except ValidationError as exc:
        raise ConfigError(f"invalid schema in {path}: {exc}") from exc


Subcommand = Literal["fit", "caliper", "match", "estimate", "simulate", "verify"]
PolicyName = Literal["picse-fixed", "picse-narrowed", "hard66", "hard24", "rr02", "euclidean", "none"]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    subcommand: Subcommand
    input: str | None = None
    schema_: ColumnSchema | None = Field(default=None, alias="schema")
    family: Literal["logistic", "linear"] = "logistic"
    response: Literal["treatment", "outcome"] = "treatment"
    cov: Literal["info", "sandwich"] = "info"
    policy: PolicyName = "picse-narrowed"
    cn: float | None = None
    intrinsic_dimension: bool = False
    objective: Literal["sum", "minmax"] = "sum"
    method: Literal["optimal", "nn"] = "optimal"
    weights: Literal["uniform", "att"] = "uniform"
    match_csv: str | None = None
    study: Literal["sample", "rate", "effect", "picse"] = "rate"
    n: int = Field(default=1000, gt=0)
    p: int = Field(default=5, ge=2)
    covariate_family: Literal["gaussian_iid", "gaussian_correlated", "scaled_t"] = "gaussian_iid"
    p_rule: Literal["fixed", "n^0.4", "n^0.6"] = "fixed"
    n_grid: list[int] = Field(default_factory=lambda: [500, 1000, 2000, 4000])
    reps: int = Field(default=50, gt=1)
    quick: bool = False
    seed: int = 20240601
    out: str = "out"
    threads: int = 1
    max_iter: int = 50
    tol: float = 1e-10
    separation_cap: float = 30.0
    condition_limit: float = 1e12

    @model_validator(mode="after")
    def _consistent(self) -> "RunConfig":
        if self.cn is not None and self.cn <= 0:
            raise ValueError("--cn must be positive")
        if self.threads < 1:
            raise ValueError("--threads must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("--seed must be an unsigned 64-bit integer")
        if self.subcommand in {"fit", "caliper", "match", "estimate"}:
            if self.input is None or self.schema_ is None:
                raise ValueError(f"{self.subcommand} requires --input and a schema")
        if self.subcommand == "estimate" and self.schema_.outcome is None:
            raise ValueError("estimate requires an outcome column in the schema")
        if self.response == "outcome" and self.schema_ is not None and self.schema_.outcome is None:
            raise ValueError("--response outcome requires an outcome column")
        if any(n <= 0 for n in self.n_grid):
            raise ValueError("--n-grid entries must be positive")
        return self

    @property
    def columns(self) -> ColumnSchema | None:
        return self.schema_


def load_run_file(path: str | Path) -> dict[str, Any]:
    data = _read_toml(path)
    run = dict(data.get("run", {}))
    if "schema" in data:
        run["schema"] = data["schema"]
    return run


def build_run_config(values: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc


def _read_toml(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
