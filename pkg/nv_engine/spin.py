"""NV ground-state spin physics.

Hamiltonian diagonalization in the {|+1>, |0>, |-1>} basis, the transverse
Stark shift, spin-echo phase accumulation under an AC field (quadrature and
closed form) and the four final-pulse readout projections.

Frequencies are in Hz, angular shifts in rad/s, fields in V/m and the
transverse dipole coupling d_perp in Hz*m/V.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from app_utils.config_manager import get_config_manager
from app_utils.errors import ValidationError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_ROTATION_TOL = 1e-12


def spin_one_operators() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin-1 matrices Sx, Sy, Sz in the {|+1>, |0>, |-1>} basis"""
    s = 1.0 / math.sqrt(2.0)
    sx = s * np.array([[0, 1, 0],
                       [1, 0, 1],
                       [0, 1, 0]], dtype=complex)
    sy = s * np.array([[0, -1j, 0],
                       [1j, 0, -1j],
                       [0, 1j, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


def nv_rotation_from_angles(theta: float, phi: float) -> np.ndarray:
    """Rotation mapping lab vectors into the NV frame.

    theta, phi are the polar and azimuthal angles of the NV axis in the lab
    frame. Rows are the NV x, y, z axes expressed in lab coordinates; the NV x
    axis lies in the plane spanned by the lab z axis and the NV axis.
    """
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    return np.array([
        [ct * cp, ct * sp, -st],
        [-sp, cp, 0.0],
        [st * cp, st * sp, ct],
    ])


@dataclass(frozen=True)
class NVParams:
    """Spin constants, bias field and NV-frame orientation.

    ``phi_b = None`` means "align the bias azimuth to the field at the image
    center"; consumers resolve it with ``align_phi_b`` before use.
    """
    d_gs: float
    gamma_e: float
    d_perp: float
    b_perp: float = 0.0
    phi_b: Optional[float] = 0.0
    nv_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if not (self.d_gs > 0 and self.gamma_e > 0 and self.d_perp > 0):
            raise ValidationError("d_gs, gamma_e and d_perp must be positive")
        if not (self.b_perp >= 0):
            raise ValidationError(f"b_perp must be non-negative, got {self.b_perp}")
        if self.phi_b is not None and not math.isfinite(self.phi_b):
            raise ValidationError(f"phi_b must be finite, got {self.phi_b}")

        rotation = np.array(self.nv_rotation, dtype=float)
        if rotation.shape != (3, 3):
            raise ValidationError(f"nv_rotation must be 3x3, got {rotation.shape}")
        if (not np.allclose(rotation @ rotation.T, np.eye(3), rtol=0, atol=_ROTATION_TOL)
                or abs(np.linalg.det(rotation) - 1.0) > _ROTATION_TOL):
            raise ValidationError("nv_rotation must be orthonormal with determinant +1")
        rotation.setflags(write=False)
        object.__setattr__(self, "nv_rotation", rotation)

    @classmethod
    def from_defaults(cls, **overrides) -> "NVParams":
        """Parameters from the tool defaults, with keyword overrides"""
        config = get_config_manager()
        theta_deg, phi_deg = config.get_nv_angles_deg()
        values = dict(
            d_gs=config.get_d_gs(),
            gamma_e=config.get_gamma_e(),
            d_perp=config.get_d_perp(),
            b_perp=0.0,
            phi_b=None,
            nv_rotation=nv_rotation_from_angles(math.radians(theta_deg), math.radians(phi_deg)),
        )
        values.update(overrides)
        return cls(**values)

    @property
    def bias_azimuth(self) -> float:
        """phi_b, with an unresolved alignment read as 0"""
        return 0.0 if self.phi_b is None else float(self.phi_b)

    def with_phi_b(self, phi_b: Optional[float]) -> "NVParams":
        return replace(self, phi_b=phi_b)


@dataclass(frozen=True)
class TransverseField:
    """Electric field component perpendicular to the NV axis"""
    e_perp: float
    phi_e: float

    def __post_init__(self):
        if not (self.e_perp >= 0):
            raise ValidationError(f"e_perp must be non-negative, got {self.e_perp}")
        if not (0.0 <= self.phi_e < 2.0 * math.pi):
            raise ValidationError(f"phi_e must lie in [0, 2pi), got {self.phi_e}")

    @property
    def components(self) -> Tuple[float, float]:
        """(E_xNV, E_yNV)"""
        return (self.e_perp * math.cos(self.phi_e), self.e_perp * math.sin(self.phi_e))


def nv_frame_components(params: NVParams, lab_fields) -> np.ndarray:
    """Lab-frame field vectors (..., 3) rotated into the NV frame"""
    return np.asarray(lab_fields, dtype=float) @ params.nv_rotation.T


def project_to_nv_frame(params: NVParams, lab_field: Sequence[float]) -> TransverseField:
    """Transverse magnitude and azimuth of a lab field in the NV frame"""
    ex, ey, _ = nv_frame_components(params, lab_field)
    e_perp = math.hypot(ex, ey)
    if e_perp == 0.0:
        return TransverseField(0.0, 0.0)
    phi_e = math.atan2(ey, ex) % (2.0 * math.pi)
    # atan2 may return -0.0 -> 2pi after the modulo for tiny negatives
    if phi_e >= 2.0 * math.pi:
        phi_e = 0.0
    return TransverseField(e_perp, phi_e)


def align_phi_b(transverse: TransverseField) -> float:
    """Bias azimuth in [0, pi) for which cos(2 phi_B + phi_E) = 1"""
    return (-transverse.phi_e / 2.0) % math.pi


def stark_sensitive_projection(params: NVParams, lab_fields) -> np.ndarray:
    """E_perp cos(2 phi_B + phi_E) for field vectors of shape (..., 3).

    Evaluated in the equivalent linear form cos(2 phi_B) E_xNV - sin(2 phi_B) E_yNV,
    which is smooth where E_perp vanishes.
    """
    nv = nv_frame_components(params, lab_fields)
    two_phi = 2.0 * params.bias_azimuth
    return math.cos(two_phi) * nv[..., 0] - math.sin(two_phi) * nv[..., 1]


def ground_state_hamiltonian(params: NVParams, transverse: TransverseField) -> np.ndarray:
    """3x3 ground-state Hamiltonian in Hz"""
    sx, sy, sz = spin_one_operators()
    phi_b = params.bias_azimuth
    zeeman = params.gamma_e * params.b_perp * (math.cos(phi_b) * sx + math.sin(phi_b) * sy)
    stark = params.d_perp * transverse.e_perp * (
        math.cos(transverse.phi_e) * (sx @ sx - sy @ sy)
        - math.sin(transverse.phi_e) * (sx @ sy + sy @ sx))
    return params.d_gs * (sz @ sz) + zeeman + stark


def transition_frequencies(params: NVParams, transverse: TransverseField) -> Tuple[float, float]:
    """(f_minus, f_plus): transitions out of the |0>-like eigenstate, ascending.

    The reference state is the eigenvector with the largest |0> overlap,
    not the lowest energy, so the assignment survives large transverse bias.
    """
    energies, vectors = np.linalg.eigh(ground_state_hamiltonian(params, transverse))
    zero_overlap = np.abs(vectors[1, :]) ** 2
    reference = int(np.argmax(zero_overlap))
    others = [energies[i] - energies[reference] for i in range(3) if i != reference]
    f_minus, f_plus = sorted(others)
    return float(f_minus), float(f_plus)


def stark_shift(params: NVParams, transverse: TransverseField) -> Tuple[float, float]:
    """(delta_omega_plus, delta_omega_minus) in rad/s; always mirror images"""
    shift = 2.0 * math.pi * params.d_perp * transverse.e_perp * math.cos(
        2.0 * params.bias_azimuth + transverse.phi_e)
    return (-shift, shift)


def echo_phase_closed(d_perp: float, e_ac: ArrayLike, f: float, tau: ArrayLike,
                      tau_t: ArrayLike) -> ArrayLike:
    """Spin-echo phase 4 d_perp E_AC sin^2(pi f tau / 2)/f * cos(2 pi f tau_t)"""
    if not (f > 0):
        raise ValidationError(f"Oscillation frequency must be positive, got {f}")
    return (4.0 * d_perp * np.asarray(e_ac) * np.sin(math.pi * f * np.asarray(tau) / 2.0) ** 2
            / f * np.cos(2.0 * math.pi * f * np.asarray(tau_t)))


def echo_phase_numeric(d_perp: float, e_ac: float, f: float, tau: float, tau_t: float,
                       n_steps: Optional[int] = None) -> float:
    """Spin-echo phase by composite Simpson quadrature of the sign-modulated integrand.

    The interval [-tau/2, tau/2] is split at t = 0, where the pi pulse flips
    the sign, and each half gets n_steps/2 panels (rounded up to even).
    """
    if n_steps is None:
        n_steps = get_config_manager().get_echo_quadrature_steps()
    if not (tau > 0):
        raise ValidationError(f"Free evolution time must be positive, got {tau}")
    if n_steps < 1000:
        raise ValidationError(f"n_steps must be at least 1000, got {n_steps}")

    panels = n_steps // 2
    panels += panels % 2
    omega = 2.0 * math.pi * f
    amplitude = 2.0 * math.pi * d_perp * e_ac

    def half(lo: float, hi: float) -> float:
        t = np.linspace(lo, hi, panels + 1)
        return integrate.simpson(amplitude * np.sin(omega * t + omega * tau_t), x=t)

    return float(half(0.0, tau / 2.0) - half(-tau / 2.0, 0.0))


class ReadoutAxis(str, Enum):
    """Final pulse of the echo sequence"""
    Y_PI_HALF = "y_pi_half"
    Y_3PI_HALF = "y_3pi_half"
    X_PI_HALF = "x_pi_half"
    X_3PI_HALF = "x_3pi_half"


@dataclass(frozen=True)
class ReadoutPopulations:
    """Bright-state populations for the four final pulses"""
    p_s_plus: ArrayLike
    p_s_minus: ArrayLike
    p_c_plus: ArrayLike
    p_c_minus: ArrayLike

    def for_axis(self, axis: ReadoutAxis) -> ArrayLike:
        return {
            ReadoutAxis.Y_PI_HALF: self.p_s_plus,
            ReadoutAxis.Y_3PI_HALF: self.p_s_minus,
            ReadoutAxis.X_PI_HALF: self.p_c_plus,
            ReadoutAxis.X_3PI_HALF: self.p_c_minus,
        }[ReadoutAxis(axis)]


def readout_populations(phi: ArrayLike) -> ReadoutPopulations:
    """Projections after pi/2_y, 3pi/2_y, pi/2_x and 3pi/2_x final pulses"""
    s = np.sin(phi)
    c = np.cos(phi)
    return ReadoutPopulations(0.5 * (1.0 + s), 0.5 * (1.0 - s), 0.5 * (1.0 + c), 0.5 * (1.0 - c))


def readout_population(phi: ArrayLike, axis: ReadoutAxis) -> ArrayLike:
    return readout_populations(phi).for_axis(axis)


def differential_signals(populations: ReadoutPopulations) -> Tuple[ArrayLike, ArrayLike]:
    """(P_s, P_c) = (sin phi, cos phi) from the population differences"""
    return (populations.p_s_plus - populations.p_s_minus,
            populations.p_c_plus - populations.p_c_minus)
