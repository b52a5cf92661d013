import numpy as np
import pytest

from sasvfusion.data import SynthConfig, TrialQuotas, build_atmm_datasets, generate
from sasvfusion.model import ModelConfig, TrialInput


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale end-to-end tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale end-to-end reproduction (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_store():
    return generate(SynthConfig(n_speakers=6, utts_per_speaker=5, spoofs_per_speaker=4,
                                asv_dim=8, cm_dim=4, seed=3))


@pytest.fixture(scope="session")
def small_datasets(small_store):
    return build_atmm_datasets(small_store.metas(), TrialQuotas(), seed=5)


@pytest.fixture
def tiny_config():
    return ModelConfig(asv_dim=6, cm_dim=4, hidden_cm=5, hidden_asv=6, hidden_post=4, seed=11)


@pytest.fixture
def make_input(rng):
    """Factory of random trial inputs drawn from the shared rng."""
    def _make(asv_dim, cm_dim):
        return TrialInput(
            enroll_asv=rng.standard_normal(asv_dim),
            test_asv=rng.standard_normal(asv_dim),
            enroll_cm=rng.standard_normal(cm_dim),
            test_cm=rng.standard_normal(cm_dim),
        )
    return _make
