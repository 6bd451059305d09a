"""Shared fixtures: the humanoid/shirt meshes and the (expensive) geodesic
matrix and embedding of the pose-A template, computed once per session."""

import pathlib

import pytest
from hypothesis import HealthCheck, settings

from garment_retarget.fixtures import write_fixture_files
from garment_retarget.geodesics import geodesic_matrix
from garment_retarget.isomap import isomap
from garment_retarget.mesh import load_mesh

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def fixture_paths():
    """On-disk fixture set (open-format meshes + region file); generated
    into the repo fixtures/ directory if not already present."""
    return write_fixture_files(REPO_ROOT / "fixtures")


@pytest.fixture(scope="session")
def humanoid_a(fixture_paths):
    return load_mesh(fixture_paths["humanoid_a"])


@pytest.fixture(scope="session")
def humanoid_b(fixture_paths):
    return load_mesh(fixture_paths["humanoid_b"])


@pytest.fixture(scope="session")
def shirt_a(fixture_paths):
    return load_mesh(fixture_paths["shirt_a"])


@pytest.fixture(scope="session")
def geo_a(humanoid_a):
    """All-pairs geodesics on the pose-A template (the slow shared input)."""
    return geodesic_matrix(humanoid_a)


@pytest.fixture(scope="session")
def emb_a_128(geo_a):
    return isomap(geo_a, 128)
