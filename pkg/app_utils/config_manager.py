import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config.json"

_MISSING = object()


class ConfigManager:
    """Manager for tool-wide defaults from the JSON config file"""

    def __init__(self, config_path: Optional[str] = None, env_path: str = ".env"):
        self.config_path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
        self._config: Dict[str, Any] = {}
        self.env_path = env_path

        if os.path.exists(self.env_path):
            load_dotenv(self.env_path)

        self.load_config()

    def load_config(self) -> None:
        """Load configuration from JSON file"""
        if not self.config_path.exists():
            raise FileNotFoundError(f"Config file not found: {self.config_path}")

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                self._config = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"Invalid JSON in config file: {e}")

    def get(self, key_path: str, default: Any = _MISSING) -> Any:
        """
        Get value from config using dot notation
        Example: get("physics.d_gs_hz") or get("numerics.psf_points")
        """
        value = self._config

        try:
            for key in key_path.split('.'):
                value = value[key]
            return value
        except (KeyError, TypeError):
            if default is _MISSING:
                raise KeyError(f"Config key not found: {key_path}")
            return default

    def get_d_gs(self) -> float:
        """Get zero-field splitting in Hz"""
        return float(self.get("physics.d_gs_hz"))

    def get_gamma_e(self) -> float:
        """Get electron gyromagnetic ratio in Hz/T"""
        return float(self.get("physics.gamma_e_hz_per_t"))

    def get_d_perp(self) -> float:
        """Get transverse dipole coupling in Hz*m/V (stored in Hz*cm/V)"""
        return float(self.get("physics.d_perp_hz_cm_per_v")) * 1e-2

    def get_nv_angles_deg(self) -> tuple:
        """Get (theta, phi) of the NV axis in the lab frame, degrees"""
        return (float(self.get("physics.nv_theta_deg")), float(self.get("physics.nv_phi_deg")))

    def get_trajectory_samples(self) -> int:
        """Get default number of samples per oscillation period"""
        return int(self.get("numerics.trajectory_samples"))

    def get_psf_points(self) -> int:
        """Get default number of points in a PSF profile"""
        return int(self.get("numerics.psf_points"))

    def get_psf_window_factor(self) -> float:
        """Get PSF half-window in units of the NV-sample distance"""
        return float(self.get("numerics.psf_window_factor"))

    def get_plane_cache_mb(self) -> float:
        """Get memory budget for cached Fourier field planes, MB"""
        return float(self.get("numerics.plane_cache_mb"))

    def get_echo_quadrature_steps(self) -> int:
        """Get default quadrature steps for the numeric echo phase"""
        return int(self.get("numerics.echo_quadrature_steps"))

    def get_scan_margin_fraction(self) -> float:
        """Get required scan margin as a fraction of the charge-map extent"""
        return float(self.get("numerics.scan_margin_fraction"))

    def get_fit_limits(self) -> tuple:
        """Get (max iterations, relative step tolerance) for nonlinear fits"""
        return (int(self.get("numerics.max_fit_iterations")),
                float(self.get("numerics.fit_step_tolerance")))

    def get_float_format(self) -> str:
        """Get printf-style float format for text outputs"""
        return self.get("output.float_format")

    def get_delimiter(self) -> str:
        """Get column delimiter for text outputs"""
        return self.get("output.delimiter")

    def get_svg_hashsalt(self) -> str:
        """Get matplotlib SVG hash salt used for reproducible ids"""
        return self.get("output.svg_hashsalt")

    def get_lock_filename(self) -> str:
        """Get name of the per-output-directory lock file"""
        return self.get("output.lock_filename")

    def get_available_formats(self) -> list:
        """Get list of output formats"""
        return self.get("output.available_formats")

    def get_thread_cap(self) -> Optional[int]:
        """Get worker-thread cap from the environment, None when unset"""
        raw = os.getenv(self.get("environment.threads_env_var"), "").strip()
        if not raw:
            return None
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"Invalid thread cap: {raw!r}")
        if threads < 1:
            raise ValueError(f"Thread cap must be positive, got {threads}")
        return threads


# Singleton instance
_config_manager: Optional[ConfigManager] = None


def get_config_manager() -> ConfigManager:
    """Get singleton instance of ConfigManager"""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager
