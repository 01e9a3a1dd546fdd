import os

import numpy as np
import pytest
import structlog

from banksim.coefficients import CoefficientSet
from banksim.dataset import HarmonicSway, HarmonicYaw, concat, synthesize
from banksim.hydro_model import CanalGeometry, VesselGeometry

CONFIG_PATH = os.path.join(
    os.path.dirname(__file__), "..", "..", "config", "dtc_model.env"
)


def dtc_vessel() -> VesselGeometry:
    return VesselGeometry(
        length_L=3.984,
        beam_B=0.572,
        draft_T0=0.163,
        block_coeff_CB=0.661,
        mass_m=245.8,
        inertia_Iz=219.2,
        ref_offset_xG=-0.107,
    )


def model_canal() -> CanalGeometry:
    return CanalGeometry(width_W=7.0, depth_D=0.5)


@pytest.fixture
def vessel() -> VesselGeometry:
    return dtc_vessel()


@pytest.fixture
def canal() -> CanalGeometry:
    return model_canal()


@pytest.fixture
def truth() -> CoefficientSet:
    return CoefficientSet.published()


def bank_excited(vessel, canal, truth):
    """Three captive tests at different speeds, all offset from the centreline."""
    return concat(
        [
            synthesize(
                vessel,
                canal,
                truth,
                HarmonicYaw(amplitude=0.3, period=20.0, y_offset=0.8),
                u0=1.0,
                duration=40.0,
                dt=0.1,
                label="A",
            ),
            synthesize(
                vessel,
                canal,
                truth,
                HarmonicSway(amplitude=0.5, period=25.0, y_offset=-0.6),
                u0=0.8,
                duration=40.0,
                dt=0.1,
                label="B",
            ),
            synthesize(
                vessel,
                canal,
                truth,
                HarmonicYaw(amplitude=0.2, period=15.0, y_offset=1.2),
                u0=0.6,
                duration=40.0,
                dt=0.1,
                label="C",
            ),
        ]
    )


RICH_TESTS = (
    ("A", HarmonicYaw(amplitude=0.5, period=8.0, y_offset=0.8), 1.0),
    ("B", HarmonicSway(amplitude=0.6, period=12.0, y_offset=-0.6), 0.8),
    ("C", HarmonicYaw(amplitude=0.2, period=6.0, y_offset=1.0), 0.5),
    ("D", HarmonicSway(amplitude=0.3, period=30.0, y_offset=0.6), 0.6),
)


def richly_excited(vessel, canal, truth, noise=0.0, seed=0):
    """Fast and slow runs of both shapes, so linear and quadratic damping separate.

    Noise is a fraction of each channel's RMS within its own test.
    """
    parts = []
    for k, (label, scenario, u0) in enumerate(RICH_TESTS):
        clean = synthesize(
            vessel, canal, truth, scenario, u0=u0, duration=240.0, dt=0.05, label=label
        )
        rms = tuple(
            float(np.sqrt(np.mean(clean.column(name) ** 2))) for name in ("X", "Y", "N")
        )
        parts.append(
            synthesize(
                vessel,
                canal,
                truth,
                scenario,
                u0=u0,
                duration=240.0,
                dt=0.05,
                noise_std=tuple(noise * value for value in rms),
                seed=seed + k,
                label=label,
            )
        )
    return concat(parts)


@pytest.fixture
def oracle_dataset(vessel, canal, truth):
    return bank_excited(vessel, canal, truth)


@pytest.fixture
def noisy_dataset(vessel, canal, truth):
    return richly_excited(vessel, canal, truth, noise=0.02, seed=7)


@pytest.fixture
def config_path() -> str:
    return CONFIG_PATH


@pytest.fixture(autouse=True)
def _reset_structlog():
    # main() binds structlog to the sys.stderr of the test that called it;
    # pytest closes that capture stream afterwards, so reset between tests.
    yield
    structlog.reset_defaults()
