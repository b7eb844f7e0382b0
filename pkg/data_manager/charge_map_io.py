"""Charge-map and raster files.

Text rasters start with two comment lines, the field names
``# nx ny dx dy x0 y0`` and their values, followed by nx rows of ny values.
Binary rasters are a 24-byte little-endian header (nx, ny as int64, dx as
float64) followed by nx*ny float64 values in row-major order.
"""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from app_utils.config_manager import get_config_manager
from app_utils.errors import OutputIOError, ValidationError
from nv_engine.fields import ChargeMap

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TEXT_HEADER_FIELDS = "nx ny dx dy x0 y0"
BINARY_HEADER = np.dtype([("nx", "<i8"), ("ny", "<i8"), ("dx", "<f8")])
BINARY_VALUES = np.dtype("<f8")


def write_raster_text(path: PathLike, values: np.ndarray, dx: float, dy: float,
                      origin: Tuple[float, float]) -> Path:
    """Write a 2-D raster with the text header"""
    path = Path(path)
    config = get_config_manager()
    fmt = config.get_float_format()
    nx, ny = values.shape
    header_values = " ".join([str(nx), str(ny)] + [fmt % v for v in (dx, dy, origin[0], origin[1])])
    try:
        np.savetxt(path, values, fmt=fmt, delimiter=config.get_delimiter(),
                   header=f"{TEXT_HEADER_FIELDS}\n{header_values}", comments="# ")
    except OSError as e:
        raise OutputIOError(f"Failed to write raster {path}: {e}") from e
    logger.debug("Wrote text raster %s (%dx%d)", path, nx, ny)
    return path


def read_raster_text(path: PathLike) -> Tuple[np.ndarray, float, float, Tuple[float, float]]:
    """Read a text raster; returns (values, dx, dy, origin)"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            names = f.readline().lstrip("#").split()
            header = f.readline().lstrip("#").split()
            values = np.loadtxt(f, ndmin=2)
    except OSError as e:
        raise OutputIOError(f"Failed to read raster {path}: {e}") from e
    except ValueError as e:
        raise ValidationError(f"Malformed raster values in {path}: {e}") from e

    if " ".join(names) != TEXT_HEADER_FIELDS or len(header) != 6:
        raise ValidationError(f"{path}: expected header '# {TEXT_HEADER_FIELDS}' and six values")
    try:
        nx, ny = int(header[0]), int(header[1])
        dx, dy, x0, y0 = (float(v) for v in header[2:])
    except ValueError as e:
        raise ValidationError(f"{path}: unreadable header values: {e}") from e
    if values.shape != (nx, ny):
        raise ValidationError(f"{path}: header says {nx}x{ny}, found {values.shape[0]}x{values.shape[1]}")
    return values, dx, dy, (x0, y0)


def write_raster_binary(path: PathLike, values: np.ndarray, dx: float) -> Path:
    """Write a 2-D raster in the binary layout"""
    path = Path(path)
    header = np.array([(values.shape[0], values.shape[1], dx)], dtype=BINARY_HEADER)
    try:
        with open(path, "wb") as f:
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(values, dtype=BINARY_VALUES).tobytes())
    except OSError as e:
        raise OutputIOError(f"Failed to write raster {path}: {e}") from e
    logger.debug("Wrote binary raster %s", path)
    return path


def read_raster_binary(path: PathLike) -> Tuple[np.ndarray, float]:
    """Read a binary raster; returns (values, dx)"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise OutputIOError(f"Failed to read raster {path}: {e}") from e

    if len(data) < BINARY_HEADER.itemsize:
        raise ValidationError(f"{path}: file shorter than the raster header")
    header = np.frombuffer(data[:BINARY_HEADER.itemsize], dtype=BINARY_HEADER)[0]
    nx, ny, dx = int(header["nx"]), int(header["ny"]), float(header["dx"])
    expected = BINARY_HEADER.itemsize + nx * ny * BINARY_VALUES.itemsize
    if nx < 1 or ny < 1 or len(data) != expected:
        raise ValidationError(f"{path}: header says {nx}x{ny} but file holds {len(data)} bytes")
    values = np.frombuffer(data[BINARY_HEADER.itemsize:], dtype=BINARY_VALUES).reshape(nx, ny)
    return values.copy(), dx


def save_charge_map(charge: ChargeMap, path: PathLike, fmt: str = "text") -> Path:
    """Save a charge map as a text or binary raster"""
    if fmt == "text":
        return write_raster_text(path, charge.sigma, charge.dx, charge.dy, charge.origin)
    if fmt == "binary":
        if charge.dx != charge.dy:
            raise ValidationError("Binary rasters store a single pitch; dx and dy must match")
        return write_raster_binary(path, charge.sigma, charge.dx)
    raise ValidationError(f"Unknown charge-map format {fmt!r}")


def load_charge_map(path: PathLike) -> ChargeMap:
    """Load a charge map, choosing the layout from the file suffix.

    Binary rasters carry no origin; the map is centered on the lab origin.
    """
    path = Path(path)
    if path.suffix == ".bin":
        sigma, dx = read_raster_binary(path)
        nx, ny = sigma.shape
        origin = (-(nx - 1) * dx / 2.0, -(ny - 1) * dx / 2.0)
        return ChargeMap(sigma, dx, dx, origin)
    sigma, dx, dy, origin = read_raster_text(path)
    return ChargeMap(sigma, dx, dy, origin)
