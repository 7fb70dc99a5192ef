"""
Logging setup for delayguard.

Library modules log through ``logging.getLogger(__name__)``; the CLI installs a
rich handler so diagnostics share the console with the reports.
"""

import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

_ROOT = "delayguard"


def setup_logging(verbose: bool = False, console: Optional[Console] = None) -> logging.Logger:
    """
    Configure the package logger.

    Args:
        verbose: Emit DEBUG records (segment restarts, quadrature refinements)
        console: Console to render on; stderr when omitted

    Returns:
        The configured ``delayguard`` logger
    """
    logger = logging.getLogger(_ROOT)
    logger.handlers.clear()
    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        markup=False,
        rich_tracebacks=False,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    logger.propagate = False
    return logger
