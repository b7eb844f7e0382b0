"""Deterministic SVG figures.

Figures are drawn on bare ``matplotlib.figure.Figure`` objects (no pyplot
state) and saved with a fixed hash salt and no date, so identical inputs
produce identical files.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from app_utils.config_manager import get_config_manager
from app_utils.errors import OutputIOError
from nv_engine.imaging import LineProfile, ResolutionMap, ScanImage

matplotlib.use("Agg")

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# (label, x, y, style) for line plots
Series = Tuple[str, np.ndarray, np.ndarray, str]

_LENGTH_UNITS = ((1e-6, "um"), (1e-9, "nm"))


def length_scale(span: float) -> Tuple[float, str]:
    """Display factor and unit for a length span: micrometers above 1 um, else nanometers"""
    for factor, unit in _LENGTH_UNITS:
        if span >= factor:
            return factor, unit
    return _LENGTH_UNITS[-1]


def _save(fig: Figure, path: PathLike) -> Path:
    path = Path(path)
    salt = get_config_manager().get_svg_hashsalt()
    try:
        with matplotlib.rc_context({"svg.hashsalt": salt, "svg.fonttype": "path"}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OutputIOError(f"Failed to write figure {path}: {e}") from e
    logger.debug("Wrote figure %s", path)
    return path


def render_profile(profile: LineProfile, path: PathLike, title: str = "",
                   markers: Sequence[float] = ()) -> Path:
    """Line profile with optional vertical markers (positions in meters)"""
    factor, unit = length_scale(profile.span)
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(profile.positions / factor, profile.values, "-", color="tab:blue")
    for marker in markers:
        ax.axvline(marker / factor, color="tab:gray", linestyle="--", linewidth=0.8)
    ax.set_xlabel(f"{profile.axis} ({unit})")
    ax.set_ylabel(f"signal ({profile.unit})")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def render_image(image: ScanImage, path: PathLike, title: str = "") -> Path:
    """Heatmap of a scan image with a value colorbar"""
    factor, unit = length_scale(image.pitch * max(image.nx, image.ny))
    x, y = image.x_coords / factor, image.y_coords / factor
    half = image.pitch / factor / 2.0
    extent = (x[0] - half, x[-1] + half, y[0] - half, y[-1] + half)
    fig = Figure(figsize=(6, 5))
    ax = fig.add_subplot()
    mesh = ax.imshow(image.values.T, origin="lower", extent=extent, cmap="RdBu_r",
                     aspect="equal", interpolation="nearest")
    fig.colorbar(mesh, ax=ax, label=image.unit)
    ax.set_xlabel(f"x ({unit})")
    ax.set_ylabel(f"y ({unit})")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def render_field_components(fields: np.ndarray, x: np.ndarray, y: np.ndarray,
                            path: PathLike, title: str = "") -> Path:
    """Three side-by-side heatmaps of E_x, E_y, E_z on an (3, nx, ny) grid"""
    factor, unit = length_scale(float(max(np.ptp(x), np.ptp(y))))
    extent = (x[0] / factor, x[-1] / factor, y[0] / factor, y[-1] / factor)
    fig = Figure(figsize=(13, 4))
    for i, name in enumerate(("E_x", "E_y", "E_z")):
        ax = fig.add_subplot(1, 3, i + 1)
        mesh = ax.imshow(fields[i].T, origin="lower", extent=extent, cmap="RdBu_r",
                         aspect="auto", interpolation="nearest")
        fig.colorbar(mesh, ax=ax, label="V/m")
        ax.set_title(name)
        ax.set_xlabel(f"x ({unit})")
        ax.set_ylabel(f"y ({unit})")
    fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def render_resolution_map(result: ResolutionMap, path: PathLike, title: str = "") -> Path:
    """Width over (amplitude, distance); masked cells are left blank"""
    fig = Figure(figsize=(6, 5))
    ax = fig.add_subplot()
    widths = np.ma.masked_array(result.widths * 1e9, mask=result.mask | np.isnan(result.widths))
    mesh = ax.pcolormesh(result.a_values * 1e9, result.z_values * 1e9, widths,
                         shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=f"{result.metric} (nm)")
    ax.set_xlabel("oscillation amplitude (nm)")
    ax.set_ylabel("NV-sample distance (nm)")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def render_series(series: Sequence[Series], path: PathLike, xlabel: str, ylabel: str,
                  title: str = "", x_factor: float = 1.0) -> Path:
    """Overlay of labelled (x, y) series, x divided by x_factor for display"""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for label, x, y, style in series:
        ax.plot(np.asarray(x) / x_factor, y, style, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if any(label for label, *_ in series):
        ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, path)


def figure_path(directory: Path, name: str, formats: Sequence[str]) -> Optional[Path]:
    """Target path for a figure when SVG output is enabled"""
    return directory / f"{name}.svg" if "svg" in formats else None
