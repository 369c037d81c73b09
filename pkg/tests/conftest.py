"""Shared fixtures: PSF models are expensive to build, so cache per session."""

import sys
from pathlib import Path

import numpy as np
import pytest

# make the oracles helper module importable regardless of pytest import mode
sys.path.insert(0, str(Path(__file__).resolve().parent))

from nanosim.optics import OpticsParams, build_psf


@pytest.fixture(scope="session")
def optics_149():
    return OpticsParams(na=1.49, wavelength_nm=660.0, pixel_size_nm=65.0)


@pytest.fixture(scope="session")
def optics_12():
    return OpticsParams(na=1.2, wavelength_nm=660.0, pixel_size_nm=65.0)


@pytest.fixture(scope="session")
def psf_149(optics_149):
    return build_psf(optics_149)


@pytest.fixture(scope="session")
def psf_12(optics_12):
    return build_psf(optics_12)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
