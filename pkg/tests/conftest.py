import numpy as np
import pytest

from egalab.data import synthetic_corpus
from egalab.model import ModelConfig
from egalab.trainer import TrainConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run reproduction-scale training tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow reproduction run; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def tiny_corpus():
    return synthetic_corpus(n_chars=20_000, seed=0)


@pytest.fixture(scope="session")
def probe_text(tiny_corpus):
    # a probe guaranteed encodable by the corpus vocabulary
    return tiny_corpus.vocab.decode(tiny_corpus.val_ids[:96])


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(n_layers=2, n_heads=4, d_model=32, context_len=32,
                vocab_size=24, dropout=0.1, gate_variant="base", seed=7)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_train_config(**overrides) -> TrainConfig:
    base = dict(steps=20, batch=4, context=32, warmup=2, eval_every=10,
                eval_batches=2, snapshot_every=10, seed=7)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
