from .logger import (
    setup_logger,
    get_logger,
    PACKAGE_LOGGER,
)

__all__ = [
    "setup_logger",
    "get_logger",
    "PACKAGE_LOGGER",
]
