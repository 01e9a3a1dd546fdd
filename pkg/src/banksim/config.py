from __future__ import annotations

import os
from typing import Dict, Mapping, Optional, Tuple

import structlog

from banksim.errors import ConfigError
from banksim.hydro_model import CanalGeometry, VesselGeometry

ENV_PREFIX = "BANKSIM_"

# Config key -> (dataclass field, default). None marks a required key.
VESSEL_KEYS: Dict[str, Tuple[str, Optional[float]]] = {
    "L": ("length_L", None),
    "B": ("beam_B", None),
    "T0": ("draft_T0", None),
    "CB": ("block_coeff_CB", None),
    "m": ("mass_m", None),
    "Iz": ("inertia_Iz", None),
    "xG": ("ref_offset_xG", 0.0),
}
CANAL_KEYS: Dict[str, Tuple[str, Optional[float]]] = {
    "W": ("width_W", None),
    "D": ("depth_D", 1.0),
    "rho": ("water_density_rho", 1000.0),
}


def read_env_file(path: str) -> Dict[str, str]:
    """Parse KEY=VALUE lines, skipping blanks and # comments."""
    values: Dict[str, str] = {}
    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected KEY=VALUE, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.split("#", 1)[0].strip()
    return values


def _lookup(
    raw: Mapping[str, str], key: str, default: Optional[float], source: str
) -> float:
    text = os.environ.get(ENV_PREFIX + key, raw.get(key))
    if text is None or text == "":
        if default is None:
            raise ConfigError(f"Missing required geometry key {key!r} in {source}")
        return default
    try:
        return float(text)
    except ValueError:
        raise ConfigError(
            f"Geometry key {key!r} in {source} is not a number: {text!r}"
        )


def geometry_from_mapping(
    raw: Mapping[str, str], source: str = "config"
) -> Tuple[VesselGeometry, CanalGeometry]:
    vessel_args = {
        field: _lookup(raw, key, default, source)
        for key, (field, default) in VESSEL_KEYS.items()
    }
    canal_args = {
        field: _lookup(raw, key, default, source)
        for key, (field, default) in CANAL_KEYS.items()
    }
    try:
        vessel = VesselGeometry(**vessel_args)
        canal = CanalGeometry(**canal_args)
        canal.check_fits(vessel)
    except ValueError as e:
        raise ConfigError(f"Invalid geometry in {source}: {e}")
    return vessel, canal


def load_geometry(path: str) -> Tuple[VesselGeometry, CanalGeometry]:
    """Read vessel and canal geometry.

    BANKSIM_<KEY> environment variables win over the file.
    """
    log = structlog.get_logger()
    raw = read_env_file(path)
    unknown = sorted(set(raw) - set(VESSEL_KEYS) - set(CANAL_KEYS))
    if unknown:
        log.warning("Ignoring unknown geometry keys", path=path, keys=unknown)
    vessel, canal = geometry_from_mapping(raw, source=path)
    log.info("Loaded geometry", path=path, vessel=vessel, canal=canal)
    return vessel, canal
