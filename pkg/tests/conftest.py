import json
from pathlib import Path

import numpy as np
import pytest

from specmark.fixtures import load_cmf, load_colorchecker, load_cri_samples, load_d65
from specmark.optimizer import OptimizationContext, optimize_pair
from specmark.scene import CameraSet, LedBank, default_cameras, named_synthetic_camera

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def cmf():
    return load_cmf()


@pytest.fixture(scope="session")
def d65():
    return load_d65()


@pytest.fixture(scope="session")
def chart():
    return load_colorchecker()


@pytest.fixture(scope="session")
def tcs():
    return load_cri_samples()


@pytest.fixture(scope="session")
def sharma_pairs():
    rows = np.genfromtxt(DATA / "ciede2000_sharma.csv", delimiter=",", names=True)
    return rows


@pytest.fixture(scope="session")
def default_ctx(chart, cmf, d65, tcs):
    return OptimizationContext(LedBank.gaussian(), chart, default_cameras(), cmf, d65, tcs)


@pytest.fixture(scope="session")
def held_out_ctx(chart, cmf, d65, tcs):
    return OptimizationContext(
        LedBank.gaussian(), chart, CameraSet((named_synthetic_camera("synth-d"),)), cmf, d65, tcs
    )


@pytest.fixture(scope="session")
def default_run(default_ctx):
    """The full default optimization (5000 Adam steps); shared across modules."""
    import time

    t0 = time.perf_counter()
    result = optimize_pair(default_ctx)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def pair(default_run):
    return default_run[0].pair


@pytest.fixture(scope="session")
def pair_file(pair, tmp_path_factory):
    path = tmp_path_factory.mktemp("pair") / "pair.json"
    path.write_text(json.dumps(pair.to_dict()))
    return path
