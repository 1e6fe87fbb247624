"""Shared fixtures for the Porovox test-suite."""

import numpy as np
import pytest

from porovox.data.models import PhantomSpec, PoreSpec, Volume
from porovox.data.phantom import generate_phantom, scatter_pores


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def clean_single_pore_spec() -> PhantomSpec:
    """Unblurred, noiseless cylinder with one radius-3 sphere."""
    return PhantomSpec(
        shape="cylinder",
        grid_dims=(40, 40, 40),
        pores=[PoreSpec(center=(20.0, 20.0, 20.0), radii=(3.0, 3.0, 3.0))],
    )


@pytest.fixture
def porous_spec() -> PhantomSpec:
    """Blurred noisy cylinder with a handful of scattered pores."""
    base = PhantomSpec(
        shape="cylinder",
        grid_dims=(48, 48, 48),
        blur_sigma=0.8,
        noise_sigma=0.02,
        seed=3,
    )
    return scatter_pores(base, count=6, radius_range=(2.0, 4.0), seed=11)


@pytest.fixture
def porous_phantom(porous_spec):
    return generate_phantom(porous_spec)


@pytest.fixture
def poreless_phantom():
    spec = PhantomSpec(
        shape="cylinder", grid_dims=(48, 48, 48), blur_sigma=0.8, noise_sigma=0.02, seed=5
    )
    return generate_phantom(spec)


@pytest.fixture
def random_volume(rng) -> Volume:
    return Volume.from_array(rng.random((12, 10, 9)))
