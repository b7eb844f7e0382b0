"""nvgrad entry point.

Loads the tool configuration, runs one command-line subcommand and exits
with its status code.
"""

import logging
import os
import sys
from typing import Optional, Sequence

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app_utils.config_manager import get_config_manager
from app_utils.threading_helper import get_thread_manager
from command_interface import cli

logger = logging.getLogger("nvgrad")


class NVGradApp:
    """Main application class"""

    def __init__(self, argv: Optional[Sequence[str]] = None):
        self.argv = list(sys.argv[1:] if argv is None else argv)
        self.config = None
        self.setup_application()

    def setup_application(self):
        """Load the tool-wide defaults before any subcommand runs."""
        self.config = get_config_manager()

    def cleanup(self):
        """Release the worker pool."""
        try:
            get_thread_manager().shutdown()
        except Exception as e:
            logger.warning("Cleanup error: %s", e)

    def run(self) -> int:
        """Run the requested subcommand and return its exit code."""
        try:
            return cli.main(self.argv)
        finally:
            self.cleanup()


def main():
    """Application entry point."""
    try:
        app = NVGradApp()
        sys.exit(app.run())

    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        sys.exit(130)


if __name__ == "__main__":
    main()
