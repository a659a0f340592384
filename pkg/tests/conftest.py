import numpy as np
import pytest
import torch

from ptxkit import synthgen
from ptxkit.data import assign_folds

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """24 small synthetic cases: fast to generate, enough for IO and
    fold-handling tests."""
    out = tmp_path_factory.mktemp("tiny_data")
    spec = synthgen.SynthSpec(n_cases=24, side=128, seed=3)
    records = synthgen.generate(spec, out)
    return spec, records, out


@pytest.fixture(scope="session")
def default_dataset(tmp_path_factory):
    """The stock 100-case synthetic benchmark used by the acceptance suite."""
    out = tmp_path_factory.mktemp("default_data")
    spec = synthgen.SynthSpec()
    records = synthgen.generate(spec, out)
    return spec, records, out


@pytest.fixture(scope="session")
def tiny_assignment(tiny_dataset):
    _, records, _ = tiny_dataset
    return assign_folds(records, k=2, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
