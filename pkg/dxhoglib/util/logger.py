"""Functions related to logging."""

import logging
from logging import Logger

ROOT_NAME = "DXHOG"


def get_logger(name: str | None = None) -> Logger:
    """Get a logger under the package namespace.

    Args:
        name (str | None): Optional child name, e.g. the module's short name.

    Returns:
        Logger: Logger writing to stderr.
    """
    root = logging.getLogger(name=ROOT_NAME)
    if not root.handlers:
        root.setLevel(logging.INFO)
        formatter = logging.Formatter("%(asctime)s [%(name)s] >> %(message)s")
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(formatter)
        root.addHandler(stream_handler)

    return root if name is None else root.getChild(name)


def set_verbosity(quiet: bool = False, verbose: bool = False) -> None:
    level = logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO
    get_logger().setLevel(level)
