import numpy as np
import pytest

from nupolar.forest import _backend

BACKENDS = ["python"] + (["cython"] if _backend.cython_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run kernel-level tests against every available growth backend."""
    return request.param


@pytest.fixture(scope="session")
def quick_dataset():
    """Shared 700-event synthetic dataset (the CI-sized default)."""
    from nupolar.synthgen import GenParams, generate_dataset

    return generate_dataset(GenParams(n_events=700, seed=2025))


@pytest.fixture(scope="session")
def quick_table(quick_dataset):
    from nupolar.descriptor import DescriptorConfig, extract_table

    cfg = DescriptorConfig(n_bins=36, radius=10.0, include_stats=True)
    return extract_table(quick_dataset.events, cfg)
