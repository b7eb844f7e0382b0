import logging
import os
from typing import Optional

from app_utils.config_manager import get_config_manager

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_configured = False


def setup_logging(level: Optional[str] = None) -> None:
    """Configure root logging once; the log-level environment variable applies when level is None"""
    global _configured

    env_var = get_config_manager().get("environment.log_level_env_var")
    level_name = (level or os.getenv(env_var, "INFO")).upper()
    numeric_level = getattr(logging, level_name, None)
    if not isinstance(numeric_level, int):
        raise ValueError(f"Unknown log level: {level_name}")

    if _configured:
        logging.getLogger().setLevel(numeric_level)
        return

    logging.basicConfig(level=numeric_level, format=LOG_FORMAT)
    _configured = True
