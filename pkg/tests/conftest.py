"""Shared fixtures for the fieldtriple test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from config.logging import shutdown_logging
from fieldtriple_core.config import reset_config
from fieldtriple_core.dynamics import HamiltonianDensity, LagrangianDensity
from fieldtriple_core.geometry import (
    BundleDims,
    PointJ1pi1,
    PointJ1pinu,
    SectionE,
    SectionM0,
    random_polynomial_connection,
)

PROBLEMS_DIR = Path(__file__).parent.parent / "problems"

DIRICHLET_L = "0.5*(u1_1^2 + u1_2^2)"
DIRICHLET_H = "0.5*(p1_1^2 + p1_2^2)"


@pytest.fixture(autouse=True)
def _fresh_config(monkeypatch):
    """Every test sees the default configuration and a fresh console handler."""
    for key in (
        "FIELDTRIPLE_WORKERS", "FIELDTRIPLE_SAMPLES", "FIELDTRIPLE_SEED",
        "FIELDTRIPLE_PROBLEMS_DIR",
    ):
        monkeypatch.delenv(key, raising=False)
    reset_config()
    yield
    reset_config()
    shutdown_logging()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def dims21() -> BundleDims:
    return BundleDims(m=2, n=1)


@pytest.fixture
def dims22() -> BundleDims:
    return BundleDims(m=2, n=2)


@pytest.fixture
def dirichlet_L(dims21) -> LagrangianDensity:
    return LagrangianDensity.from_source(DIRICHLET_L, dims21)


@pytest.fixture
def dirichlet_H(dims21) -> HamiltonianDensity:
    return HamiltonianDensity.from_source(DIRICHLET_H, dims21)


@pytest.fixture
def harmonic() -> SectionE:
    return SectionE.from_sources(["x1^2 - x2^2"], 2)


@pytest.fixture
def harmonic_momentum() -> SectionM0:
    return SectionM0.from_sources(["x1^2 - x2^2", "2*x1", "-2*x2"], 1, 2)


@pytest.fixture
def symmetric_connection(rng):
    return random_polynomial_connection(2, rng, symmetric=True)


@pytest.fixture
def torsionful_connection(rng):
    return random_polynomial_connection(2, rng, symmetric=False)


def random_j1pi1(dims: BundleDims, rng: np.random.Generator) -> PointJ1pi1:
    size = dims.m + dims.n + 2 * dims.nm + dims.nm * dims.m
    return PointJ1pi1.from_vector(dims, rng.uniform(-1.0, 1.0, size))


def random_j1pinu(dims: BundleDims, rng: np.random.Generator) -> PointJ1pinu:
    return PointJ1pinu.from_vector(dims, rng.uniform(-1.0, 1.0, dims.j1pinu_dim))


@pytest.fixture
def problem_path():
    def _path(name: str) -> Path:
        return PROBLEMS_DIR / f"{name}.json"

    return _path


@pytest.fixture
def make_j1pi1(rng):
    return lambda dims: random_j1pi1(dims, rng)


@pytest.fixture
def make_j1pinu(rng):
    return lambda dims: random_j1pinu(dims, rng)
