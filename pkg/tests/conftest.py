#!/usr/bin/env python3
"""
Shared fixtures for the spectral registration test suite
"""
import logging

import numpy as np
import pytest

from src.geometry import PointCloud, generate_shape


@pytest.fixture(autouse=True, scope="session")
def quiet_package_logger():
    """Keep CLI runs from attaching file/console handlers during tests."""
    logger = logging.getLogger("SpectralReg")
    handler = logging.NullHandler()
    logger.addHandler(handler)
    yield
    logger.removeHandler(handler)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tetrahedron():
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    triangles = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return PointCloud.from_arrays(points, triangles, name="tetrahedron")


@pytest.fixture(scope="session")
def bumpy_sphere():
    return generate_shape("bumpy_sphere", 500, seed=0)


