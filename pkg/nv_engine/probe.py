"""Tip kinematics and timing.

The oscillating tip carries the NV center through the static stray field;
the in-phase fundamental Fourier coefficient of the field projection along
the trajectory is the AC amplitude the spin echo detects.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app_utils.config_manager import get_config_manager
from app_utils.errors import DomainError, ValidationError
from nv_engine.fields import FieldSampler
from nv_engine.spin import (NVParams, ReadoutAxis, align_phi_b, echo_phase_closed,
                            project_to_nv_frame, stark_sensitive_projection)

logger = logging.getLogger(__name__)

_AXIS_TOL = 1e-12


class Projection(str, Enum):
    """Scalar field quantity tracked along the trajectory"""
    E_X = "e_x"
    E_Y = "e_y"
    E_Z = "e_z"
    NV_TRANSVERSE_COS = "nv_transverse_cos"


class OscillationMode(str, Enum):
    INTERMITTENT = "intermittent"
    SHEAR_X = "shear_x"


def project_fields(fields: np.ndarray, projection: Projection, params: NVParams) -> np.ndarray:
    """Reduce lab field vectors (..., 3) to the chosen scalar projection"""
    projection = Projection(projection)
    if projection is Projection.NV_TRANSVERSE_COS:
        return stark_sensitive_projection(params, fields)
    index = {Projection.E_X: 0, Projection.E_Y: 1, Projection.E_Z: 2}[projection]
    return np.asarray(fields)[..., index]


@dataclass(frozen=True)
class OscillationSpec:
    """Harmonic motion r0 + axis * A sin(2 pi f t + phi0)"""
    axis: Tuple[float, float, float]
    amplitude: float
    frequency: float
    phase: float = 0.0
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        axis = tuple(float(a) for a in self.axis)
        center = tuple(float(c) for c in self.center)
        if len(axis) != 3 or len(center) != 3:
            raise ValidationError("axis and center must be 3-vectors")
        if abs(math.sqrt(sum(a * a for a in axis)) - 1.0) > _AXIS_TOL:
            raise ValidationError(f"Oscillation axis must be a unit vector, got {axis}")
        if not (self.amplitude >= 0):
            raise ValidationError(f"Amplitude must be non-negative, got {self.amplitude}")
        if not (self.frequency > 0):
            raise ValidationError(f"Frequency must be positive, got {self.frequency}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "center", center)

    @classmethod
    def for_mode(cls, mode: OscillationMode, center: Sequence[float], amplitude: float,
                 frequency: float, phase: float = 0.0) -> "OscillationSpec":
        """Spec for a scanning mode; intermittent contact requires A < z0"""
        mode = OscillationMode(mode)
        if mode is OscillationMode.INTERMITTENT:
            if not (amplitude < center[2]):
                raise ValidationError(
                    f"Intermittent contact needs amplitude < NV-sample distance "
                    f"({amplitude:g} >= {center[2]:g})")
            axis = (0.0, 0.0, 1.0)
        else:
            axis = (1.0, 0.0, 0.0)
        return cls(axis, amplitude, frequency, phase, tuple(center))

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    def with_center(self, center: Sequence[float]) -> "OscillationSpec":
        return replace(self, center=tuple(center))


@dataclass(frozen=True)
class EchoTiming:
    """Echo timing relative to the comparator trigger; tau defaults to 1/f"""
    f: float
    tau: Optional[float] = None
    tau_e: float = 0.0
    tau_w: float = 0.0
    readout_axis: ReadoutAxis = ReadoutAxis.Y_PI_HALF

    def __post_init__(self):
        if not (self.f > 0):
            raise ValidationError(f"Frequency must be positive, got {self.f}")
        if self.tau is None:
            object.__setattr__(self, "tau", 1.0 / self.f)
        if not (self.tau > 0):
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if not (self.tau_e >= 0 and self.tau_w >= 0):
            raise ValidationError("tau_e and tau_w must be non-negative")
        object.__setattr__(self, "readout_axis", ReadoutAxis(self.readout_axis))

    @property
    def tau_t(self) -> float:
        """Total delay between trigger and echo center"""
        return self.tau_e + self.tau_w

    def with_tau_w(self, tau_w: float) -> "EchoTiming":
        return replace(self, tau_w=tau_w)


class ACHarmonic(NamedTuple):
    e_ac: float
    dc: float


def tip_position(spec: OscillationSpec, t) -> np.ndarray:
    """Position(s) at time(s) t; shape t.shape + (3,)"""
    displacement = spec.amplitude * np.sin(2.0 * math.pi * spec.frequency * np.asarray(t, dtype=float)
                                           + spec.phase)
    return np.asarray(spec.center) + np.multiply.outer(displacement, np.asarray(spec.axis))


def _sample_phases(n_samples: int, phase: float) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n_samples) / n_samples + phase


def resolve_phi_b(params: NVParams, sampler: FieldSampler, point: Sequence[float]) -> NVParams:
    """Fix an unresolved bias azimuth by aligning it to the field at point"""
    if params.phi_b is not None:
        return params
    transverse = project_to_nv_frame(params, sampler.field(np.asarray(point, dtype=float)))
    phi_b = align_phi_b(transverse)
    logger.debug("Aligned phi_B to %.6f rad at %s", phi_b, tuple(point))
    return params.with_phi_b(phi_b)


def ac_harmonic_amplitudes(sampler: FieldSampler, params: NVParams, centers: np.ndarray,
                           axis: Sequence[float], amplitude: float, phase: float = 0.0,
                           projection: Projection = Projection.NV_TRANSVERSE_COS,
                           n_samples: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """In-phase fundamental coefficient and mean of the projection for many centers.

    Samples are uniform in time over one period; the rectangle sum equals the
    trapezoid rule for periodic integrands. Returns (e_ac, dc), each shaped
    like centers[..., 0].
    """
    if n_samples is None:
        n_samples = get_config_manager().get_trajectory_samples()
    minimum = int(get_config_manager().get("numerics.min_trajectory_samples"))
    if n_samples < minimum:
        raise ValidationError(f"n_samples must be at least {minimum}, got {n_samples}")
    if params.phi_b is None and Projection(projection) is Projection.NV_TRANSVERSE_COS:
        raise ValidationError("phi_b must be resolved before evaluating nv_transverse_cos")

    centers = np.asarray(centers, dtype=float)
    sines = np.sin(_sample_phases(n_samples, phase))
    displacement = amplitude * np.multiply.outer(sines, np.asarray(axis, dtype=float))
    positions = centers[..., None, :] + displacement
    if np.any(positions[..., 2] <= 0):
        raise DomainError("Trajectory reaches the sample surface (z <= 0)")

    signal = project_fields(sampler.field(positions), projection, params)
    e_ac = 2.0 / n_samples * np.sum(signal * sines, axis=-1)
    dc = np.mean(signal, axis=-1)
    return e_ac, dc


def ac_harmonic_amplitude(sampler: FieldSampler, params: NVParams, spec: OscillationSpec,
                          projection: Projection = Projection.NV_TRANSVERSE_COS,
                          n_samples: Optional[int] = None) -> ACHarmonic:
    """Signed AC amplitude seen by the oscillating NV center, plus the DC mean"""
    if Projection(projection) is Projection.NV_TRANSVERSE_COS:
        params = resolve_phi_b(params, sampler, spec.center)
    e_ac, dc = ac_harmonic_amplitudes(sampler, params, np.asarray(spec.center), spec.axis,
                                      spec.amplitude, spec.phase, projection, n_samples)
    return ACHarmonic(float(e_ac), float(dc))


def check_timing(spec: OscillationSpec, timing: EchoTiming) -> None:
    if not math.isclose(spec.frequency, timing.f, rel_tol=1e-12):
        raise ValidationError(
            f"Echo timing frequency {timing.f:g} Hz differs from the oscillation {spec.frequency:g} Hz")


def gradiometry_phase(sampler: FieldSampler, params: NVParams, spec: OscillationSpec,
                      timing: EchoTiming,
                      projection: Projection = Projection.NV_TRANSVERSE_COS,
                      n_samples: Optional[int] = None) -> float:
    """Echo phase accumulated from the oscillation-converted AC field"""
    check_timing(spec, timing)
    harmonic = ac_harmonic_amplitude(sampler, params, spec, projection, n_samples)
    return float(echo_phase_closed(params.d_perp, harmonic.e_ac, timing.f, timing.tau,
                                   timing.tau_t))


def comparator_trigger_times(spec: OscillationSpec, threshold: float, horizon: float) -> np.ndarray:
    """Rising-edge crossings of sin(2 pi f t + phi0) through threshold in [0, horizon]"""
    if not (abs(threshold) < 1):
        raise ValidationError(f"|threshold| must be below 1, got {threshold}")
    if horizon < 0:
        raise ValidationError(f"Horizon must be non-negative, got {horizon}")

    omega = 2.0 * math.pi * spec.frequency
    # rising crossings sit on the increasing branch, arcsin in [-pi/2, pi/2]
    first = (math.asin(threshold) - spec.phase) / omega
    period = spec.period
    k_min = math.ceil(-first / period - 1e-12)
    k_max = math.floor((horizon - first) / period + 1e-12)
    if k_max < k_min:
        return np.empty(0)
    times = first + period * np.arange(k_min, k_max + 1)
    return np.clip(times, 0.0, horizon)
