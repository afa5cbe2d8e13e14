import pytest
from hypothesis import HealthCheck, settings

from clonalnet import synthdigits
from clonalnet.mnist import load_dataset

settings.register_profile(
    "suite", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    synthdigits.write_corpus(d)
    return d


@pytest.fixture(scope="session")
def corpus(corpus_dir):
    train = load_dataset(corpus_dir / synthdigits.TRAIN_IMAGES,
                         corpus_dir / synthdigits.TRAIN_LABELS)
    test = load_dataset(corpus_dir / synthdigits.TEST_IMAGES,
                        corpus_dir / synthdigits.TEST_LABELS)
    return train, test
