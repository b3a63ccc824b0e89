from pathlib import Path

import pytest
from pydantic import ValidationError

from picse_match.config import ColumnSchema, build_run_config, load_run_file, load_schema, load_settings
from picse_match.errors import ConfigError

ENV_KEYS = (
    "PICSE_OUT_DIR",
    "PICSE_SEED",
    "PICSE_THREADS",
    "PICSE_DEBUG",
    "PICSE_MAX_ITER",
    "PICSE_TOL",
    "PICSE_SEPARATION_CAP",
    "PICSE_CONDITION_LIMIT",
)


@pytest.fixture
def clean_env(monkeypatch: pytest.MonkeyPatch) -> pytest.MonkeyPatch:
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)
    return monkeypatch


def _toml(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def test_settings_defaults(clean_env):
    s = load_settings()
    assert s.out_dir == "out"
    assert s.seed == 20240601
    assert s.threads == 1
    assert not s.debug
    assert s.max_iter == 50
    assert s.tol == 1e-10
    assert s.condition_limit == 1e12


def test_settings_from_env(clean_env):
    clean_env.setenv("PICSE_THREADS", "4")
    clean_env.setenv("PICSE_DEBUG", "yes")
    clean_env.setenv("PICSE_SEED", "7")
    clean_env.setenv("PICSE_OUT_DIR", "  ")
    s = load_settings()
    assert (s.threads, s.debug, s.seed, s.out_dir) == (4, True, 7, "out")


@pytest.mark.parametrize(
    ("key", "value"),
    [("PICSE_THREADS", "many"), ("PICSE_THREADS", "0"), ("PICSE_SEED", "-1"), ("PICSE_TOL", "tight")],
)
def test_settings_reject_bad_values(clean_env, key, value):
    clean_env.setenv(key, value)
    with pytest.raises(ConfigError, match=key):
        load_settings()


def test_column_roles_must_be_distinct():
    with pytest.raises(ValidationError):
        ColumnSchema(treatment="z", outcome="z")
    with pytest.raises(ValidationError):
        ColumnSchema(treatment="z", covariates=["a", "z"])
    with pytest.raises(ValidationError):
        ColumnSchema(treatment="z", covariates=["a", "a"])
    assert ColumnSchema(treatment="z", stratum="site").covariates is None


def test_load_schema(tmp_path):
    path = _toml(tmp_path / "schema.toml", '[schema]\ntreatment = "z"\ncovariates = ["a", "b"]\noutcome = "y"\n')
    schema = load_schema(path)
    assert schema.covariates == ["a", "b"]
    flat = _toml(tmp_path / "flat.toml", 'treatment = "z"\n')
    assert load_schema(flat).treatment == "z"


def test_load_schema_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_schema(tmp_path / "missing.toml")
    with pytest.raises(ConfigError, match="malformed"):
        load_schema(_toml(tmp_path / "bad.toml", "treatment = \n"))
    with pytest.raises(ConfigError, match="invalid schema"):
        load_schema(_toml(tmp_path / "roles.toml", 'treatment = "z"\noutcome = "z"\n'))


def test_run_file_merges_schema(tmp_path):
    path = _toml(
        tmp_path / "run.toml",
        '[run]\npolicy = "rr02"\nthreads = 2\n\n[schema]\ntreatment = "z"\noutcome = "y"\n',
    )
    values = load_run_file(path)
    cfg = build_run_config(values | {"subcommand": "match", "input": "data.csv"})
    assert cfg.policy == "rr02"
    assert cfg.threads == 2
    assert cfg.columns is not None and cfg.columns.outcome == "y"


def test_run_config_cross_checks():
    schema = {"treatment": "z"}
    with pytest.raises(ConfigError, match="requires --input"):
        build_run_config({"subcommand": "fit", "schema": schema})
    with pytest.raises(ConfigError, match="outcome"):
        build_run_config({"subcommand": "estimate", "input": "d.csv", "schema": schema})
    with pytest.raises(ConfigError, match="outcome"):
        build_run_config({"subcommand": "fit", "input": "d.csv", "schema": schema, "response": "outcome"})
    with pytest.raises(ConfigError, match="cn"):
        build_run_config({"subcommand": "match", "input": "d.csv", "schema": schema, "cn": 0.0})
    with pytest.raises(ConfigError, match="n-grid"):
        build_run_config({"subcommand": "simulate", "n_grid": [100, -5]})
    with pytest.raises(ConfigError):
        build_run_config({"subcommand": "match", "input": "d.csv", "schema": schema, "policy": "tight"})
    with pytest.raises(ConfigError):
        build_run_config({"subcommand": "simulate", "surprise": 1})


def test_simulate_needs_no_input():
    cfg = build_run_config({"subcommand": "simulate", "study": "sample", "n": 300, "p": 3})
    assert cfg.input is None
    assert cfg.n_grid == [500, 1000, 2000, 4000]
