from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from picse_match.data.dataset import CenteredSample, Sample, center
from picse_match.simlab.dgp import DGPConfig, Truth, generate, replicate_rng

SEED = 20240601


@pytest.fixture
def rng() -> np.random.Generator:
    return replicate_rng(SEED, 999)


@pytest.fixture
def dgp_draw() -> tuple[Sample, Truth]:
    return generate(DGPConfig(n=600, p=4, seed=SEED))


@pytest.fixture
def toy_sample(dgp_draw: tuple[Sample, Truth]) -> Sample:
    return dgp_draw[0]


@pytest.fixture
def toy_centered(toy_sample: Sample) -> CenteredSample:
    return center(toy_sample)


@pytest.fixture
def toy_csv(tmp_path: Path, toy_sample: Sample) -> Path:
    frame = pd.DataFrame(toy_sample.x, columns=[f"x{j + 1}" for j in range(toy_sample.p)])
    frame["z"] = toy_sample.z.astype(int)
    frame["y"] = toy_sample.y
    path = tmp_path / "toy.csv"
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
