from __future__ import annotations

import pathlib
import time

import pytest

from fsqubit import FieldEnvironment, MagneticField, TweezerConfig, atomstark
from fsqubit import focalfield

DATA = pathlib.Path(__file__).resolve().parents[1] / "src/fsqubit/data"


@pytest.fixture(scope="session")
def table() -> atomstark.PolarizabilityTable:
    return atomstark.PolarizabilityTable.from_csv(DATA / "sr88_fixture.csv")


@pytest.fixture(scope="session")
def table_755() -> atomstark.PolarizabilityTable:
    return atomstark.PolarizabilityTable.from_csv(DATA / "sr88_fixture_755.csv")


@pytest.fixture(scope="session")
def shallow46(table):
    """Calibrated 46 uW tweezer at 539.91 nm plus its magic angle at 8 G."""
    config = TweezerConfig(wavelength_nm=539.91, power_W=46e-6, na=0.5,
                           target_waist_nm=564.0)
    t0 = time.perf_counter()
    field = focalfield.build_field(config)
    build_seconds = time.perf_counter() - t0
    env0 = FieldEnvironment(config, MagneticField(8.0, 0.0))
    phi_magic = atomstark.find_magic_angle(env0, table)
    return {"config": config, "field": field, "phi_magic_deg": phi_magic,
            "build_seconds": build_seconds}


@pytest.fixture(scope="session")
def deep1450(shallow46):
    """Same optics at 1.45 mW; reuses the calibrated filling factor."""
    shallow_cfg = shallow46["config"]
    config = TweezerConfig(
        wavelength_nm=shallow_cfg.wavelength_nm, power_W=1.45e-3,
        na=shallow_cfg.na,
        filling_factor=shallow46["field"].filling_factor)
    field = focalfield.build_field(config)
    return {"config": config, "field": field}
