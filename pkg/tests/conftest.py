import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from latent_tuning.beamsim import GeneratorConfig, generate_dataset
from latent_tuning.core import AxisPair
from latent_tuning.net import NetworkSpec, init_weights, train

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

DESK_N = 5000
DESK_SEED = 0


@pytest.fixture(scope="session")
def tiny_spec():
    """A small network that still has every layer type."""
    return NetworkSpec(input_size=8, conv_filters=(2, 3), enc_dense=(6,), latent_dim=3,
                       dec_dense=(5,), dec_image=(2, 2, 2), tconv_filters=(2,), output_size=8)


@pytest.fixture(scope="session")
def tiny_weights(tiny_spec):
    """Seeded weights with nonzero biases so bias gradients are exercised."""
    w = init_weights(tiny_spec, seed=3)
    rng = np.random.default_rng(4)
    return w.replace({k: (a + 0.1 * rng.standard_normal(a.shape)) if k.endswith(".b") else a
                      for k, a in w.arrays.items()})


@pytest.fixture(scope="session")
def small_gen():
    return GeneratorConfig()


@pytest.fixture(scope="session")
def small_dataset(small_gen):
    return generate_dataset(40, seed=11, config=small_gen)


@pytest.fixture(scope="session")
def desk_dataset():
    """The seeded desk dataset and its generation time."""
    t0 = time.time()
    ds = generate_dataset(DESK_N, seed=DESK_SEED)
    return {"dataset": ds, "gen_seconds": time.time() - t0}


@pytest.fixture(scope="session")
def desk_model(desk_dataset):
    """The desk network trained with the stepped schedule."""
    t0 = time.time()
    res = train(desk_dataset["dataset"], NetworkSpec(), seed=0)
    return {**desk_dataset, "result": res, "train_seconds": time.time() - t0}


def pair(text: str) -> AxisPair:
    return AxisPair.parse(text)
