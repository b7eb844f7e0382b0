"""Unit table for configuration quantities.

Every physical value in a run configuration is written as
``{"value": 30, "unit": "nm"}``. Values are converted to SI once, here;
everything downstream works in meters, seconds, hertz, V/m and C/m^2.
"""

import math
from typing import Any, Dict, Tuple

from app_utils.errors import ConfigError

# unit -> (dimension, factor to SI)
UNITS: Dict[str, Tuple[str, float]] = {
    "m": ("length", 1.0),
    "mm": ("length", 1e-3),
    "um": ("length", 1e-6),
    "nm": ("length", 1e-9),
    "pm": ("length", 1e-12),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "ns": ("time", 1e-9),
    "Hz": ("frequency", 1.0),
    "kHz": ("frequency", 1e3),
    "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "T": ("magnetic_field", 1.0),
    "mT": ("magnetic_field", 1e-3),
    "uT": ("magnetic_field", 1e-6),
    "V/m": ("electric_field", 1.0),
    "V/cm": ("electric_field", 1e2),
    "kV/cm": ("electric_field", 1e5),
    "C/m^2": ("surface_charge", 1.0),
    "uC/cm^2": ("surface_charge", 1e-2),
    "C/m": ("line_charge", 1.0),
    "rad": ("angle", 1.0),
    "deg": ("angle", math.pi / 180.0),
    "Hz*m/V": ("dipole", 1.0),
    "Hz*cm/V": ("dipole", 1e-2),
    "Hz/T": ("gyromagnetic", 1.0),
    "GHz/T": ("gyromagnetic", 1e9),
    "mV": ("voltage", 1e-3),
    "V": ("voltage", 1.0),
    "counts": ("counts", 1.0),
}


def to_si(value: float, unit: str, dimension: str) -> float:
    """Convert value in unit to SI, checking the unit has the expected dimension"""
    if unit not in UNITS:
        raise ConfigError(f"Unknown unit '{unit}'")

    unit_dimension, factor = UNITS[unit]
    if unit_dimension != dimension:
        raise ConfigError(f"Unit '{unit}' is a {unit_dimension}, expected a {dimension}")

    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigError(f"Quantity value must be a finite number, got {value!r}")

    return float(value) * factor


def quantity_to_si(quantity: Any, dimension: str, key: str = "") -> float:
    """Convert a {"value", "unit"} mapping to SI"""
    if not isinstance(quantity, dict) or set(quantity) != {"value", "unit"}:
        raise ConfigError(f"{key}: expected {{\"value\": ..., \"unit\": ...}}, got {quantity!r}")

    try:
        return to_si(quantity["value"], quantity["unit"], dimension)
    except ConfigError as e:
        raise ConfigError(f"{key}: {e}") from e
