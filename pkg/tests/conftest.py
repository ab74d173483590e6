import pytest

from gradsurgeon.datasets import SyntheticSpec, generate_synthetic
from gradsurgeon.trainer import SurgeryConfig

# Small copy of the benchmark: same geometry, fewer records. Fast enough for
# per-module behavior tests; the acceptance suite uses the full default sizes.
TINY = dict(n_train=512, n_test_in=256, n_test_cross=256)


@pytest.fixture(scope="session")
def tiny_config():
    return SurgeryConfig(seed=7, **TINY)


@pytest.fixture(scope="session")
def tiny_split(tiny_config):
    spec = SyntheticSpec(seed=tiny_config.seed, **TINY)
    return generate_synthetic(spec)
