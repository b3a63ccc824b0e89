from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picse_match.config import ColumnSchema
from picse_match.data.dataset import Sample, center, load_csv
from picse_match.errors import DimensionError, ParseError, SchemaError


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def test_center_zero_column_means(toy_sample):
    cs = center(toy_sample)
    assert np.allclose(cs.x.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(cs.uncenter(), toy_sample.x)


def test_center_within_strata(rng):
    x = rng.normal(size=(90, 3)) + np.repeat([[0.0, 5.0, -3.0]], 90, axis=0)
    stratum = np.repeat(["a", "b", "c"], 30)
    z = np.tile([0, 1], 45)
    cs = center(Sample(x=x, z=z, stratum=stratum))
    assert cs.L == 3
    for code in range(3):
        assert np.allclose(cs.x[cs.codes == code].mean(axis=0), 0.0, atol=1e-12)
    assert cs.labels == ("a", "b", "c")


def test_center_is_idempotent(toy_sample):
    once = center(toy_sample)
    twice = center(once)
    assert np.allclose(twice.x, once.x, atol=1e-12)
    assert np.allclose(twice.means, once.means, atol=1e-12)


def test_sample_is_read_only(toy_sample):
    with pytest.raises(ValueError):
        toy_sample.x[0, 0] = 1.0


def test_sample_rejects_one_covariate():
    with pytest.raises(DimensionError):
        Sample(x=np.ones((10, 1)), z=np.zeros(10))


def test_sample_rejects_non_binary_treatment(rng):
    z = np.zeros(20)
    z[3] = 2
    with pytest.raises(SchemaError) as info:
        Sample(x=rng.normal(size=(20, 2)), z=z)
    assert info.value.row == 3


def test_constant_covariate_names_assumption(rng):
    x = np.column_stack([rng.normal(size=30), np.full(30, 4.0)])
    with pytest.raises(SchemaError) as info:
        Sample(x=x, z=np.tile([0, 1], 15), covariates=("age", "site_const"))
    assert info.value.column == "site_const"
    assert info.value.assumption == "A11"


def test_too_many_strata(rng):
    with pytest.raises(DimensionError):
        Sample(x=rng.normal(size=(6, 2)), z=np.tile([0, 1], 3), stratum=np.arange(6))


def test_load_csv_defaults_covariates_to_unclaimed(toy_csv):
    sample = load_csv(toy_csv, ColumnSchema(treatment="z", outcome="y"))
    assert sample.covariates == ("x1", "x2", "x3", "x4")
    assert sample.y is not None
    assert set(np.unique(sample.z)) <= {0, 1}


def test_load_csv_reports_line_of_bad_treatment(tmp_path):
    path = _write(tmp_path / "bad.csv", "a,b,z\n1,2,0\n3,1,1\n5,6,yes\n")
    with pytest.raises(SchemaError) as info:
        load_csv(path, ColumnSchema(treatment="z"))
    assert info.value.row == 4
    assert info.value.column == "z"


def test_load_csv_malformed_covariate(tmp_path):
    path = _write(tmp_path / "bad.csv", "a,b,z\n1,2,0\n3,oops,1\n5,6,1\n")
    with pytest.raises(ParseError) as info:
        load_csv(path, ColumnSchema(treatment="z"))
    assert info.value.row == 3
    assert info.value.column == "b"


def test_load_csv_missing_column(tmp_path):
    path = _write(tmp_path / "bad.csv", "a,b,z\n1,2,0\n3,1,1\n")
    with pytest.raises(SchemaError, match="missing from header"):
        load_csv(path, ColumnSchema(treatment="z", outcome="y"))


def test_load_csv_missing_outcome_becomes_nan(tmp_path):
    path = _write(tmp_path / "ok.csv", "a,b,z,y\n1,2,0,1.5\n3,1,1,\n5,7,1,2.0\n2,2,0,0.1\n")
    sample = load_csv(path, ColumnSchema(treatment="z", outcome="y"))
    assert np.isnan(sample.y[1])
    assert sample.n == 4


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(SchemaError):
        load_csv(tmp_path / "nope.csv", ColumnSchema(treatment="z"))


def test_load_csv_invalid_utf8_names_line(tmp_path):
    path = tmp_path / "bytes.csv"
    path.write_bytes(b"a,b,z\n1,2,0\n1,\xff,1\n")
    with pytest.raises(ParseError, match="UTF-8") as info:
        load_csv(path, ColumnSchema(treatment="z"))
    assert info.value.row == 3


def test_load_csv_ragged_row_names_line(tmp_path):
    path = _write(tmp_path / "ragged.csv", "a,b,z\n1,2,0\n3,1,1,9\n5,6,1\n")
    with pytest.raises(ParseError, match="malformed CSV") as info:
        load_csv(path, ColumnSchema(treatment="z"))
    assert info.value.row == 3


def test_load_csv_empty_file(tmp_path):
    path = _write(tmp_path / "empty.csv", "")
    with pytest.raises(ParseError, match="empty"):
        load_csv(path, ColumnSchema(treatment="z"))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=6, max_value=60),
    p=st.integers(min_value=2, max_value=5),
    shift=st.floats(min_value=-100, max_value=100),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_centering_removes_any_shift(n, p, shift, seed):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, p))
    z = np.zeros(n, dtype=int)
    z[: n // 2] = 1
    plain = center(Sample(x=x, z=z))
    shifted = center(Sample(x=x + shift, z=z))
    assert np.allclose(plain.x, shifted.x, atol=1e-9 * max(1.0, abs(shift)))
