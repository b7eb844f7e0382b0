"""Scan images on disk: a raster file plus a JSON sidecar header.

``<stem>.bin`` (or ``<stem>.txt``) holds the values; ``<stem>.json`` holds
pitch, origin, unit and the scan metadata.
"""

import json
import logging
from pathlib import Path
from typing import List, Sequence, Union

from app_utils.errors import OutputIOError, ValidationError
from data_manager.charge_map_io import (read_raster_binary, read_raster_text,
                                        write_raster_binary, write_raster_text)
from nv_engine.imaging import ScanImage

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _sidecar_path(stem: Path) -> Path:
    return stem.with_name(stem.name + ".json")


def save_scan_image(image: ScanImage, stem: PathLike,
                    formats: Sequence[str] = ("binary",)) -> List[Path]:
    """Write the image rasters for the requested formats and the sidecar header"""
    stem = Path(stem)
    written = []
    for fmt in formats:
        if fmt == "binary":
            written.append(write_raster_binary(stem.with_name(stem.name + ".bin"),
                                               image.values, image.pitch))
        elif fmt == "text":
            written.append(write_raster_text(stem.with_name(stem.name + ".txt"), image.values,
                                             image.pitch, image.pitch, image.origin))
        else:
            raise ValidationError(f"Unknown raster format {fmt!r}")

    header = {
        "nx": image.nx,
        "ny": image.ny,
        "pitch": image.pitch,
        "origin": list(image.origin),
        "unit": image.unit,
        "meta": image.meta,
    }
    sidecar = _sidecar_path(stem)
    try:
        sidecar.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputIOError(f"Failed to write image header {sidecar}: {e}") from e
    written.append(sidecar)
    return written


def load_scan_image(stem: PathLike) -> ScanImage:
    """Read an image saved by save_scan_image, preferring the binary raster"""
    stem = Path(stem)
    sidecar = _sidecar_path(stem)
    try:
        header = json.loads(sidecar.read_text(encoding="utf-8"))
    except OSError as e:
        raise OutputIOError(f"Failed to read image header {sidecar}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"Invalid JSON in image header {sidecar}: {e}") from e

    binary = stem.with_name(stem.name + ".bin")
    if binary.exists():
        values, _ = read_raster_binary(binary)
    else:
        values, *_ = read_raster_text(stem.with_name(stem.name + ".txt"))
    if values.shape != (header["nx"], header["ny"]):
        raise ValidationError(f"{stem}: raster shape {values.shape} disagrees with its header")
    return ScanImage(values, header["pitch"], tuple(header["origin"]), header["meta"],
                     header["unit"])
