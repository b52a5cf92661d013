import logging
from pathlib import Path

PACKAGE_LOGGER = "sasvfusion"
DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logger(name=PACKAGE_LOGGER, log_file=None, log_level=logging.INFO, log_format=None,
                 log_dir="logs", console=True):
    """
    Set up a logger with file and/or console output.

    Library modules log through children of the package logger, so configuring
    ``sasvfusion`` once (as the CLI does) routes every module's records.

    Args:
        name (str): Name of the logger. Defaults to the package logger.
        log_file (str, optional): Name of the log file. If None, no file logging.
        log_level (int or str, optional): Logging level. Defaults to logging.INFO.
        log_format (str, optional): Log format string. Defaults to None (standard format).
        log_dir (str, optional): Directory for log files. Defaults to "logs".
        console (bool, optional): Whether to log to stderr. Defaults to True.

    Returns:
        Logger: Configured logger object
    """
    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = False

    formatter = logging.Formatter(log_format or DEFAULT_FORMAT)

    if console:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if log_file:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        # no timestamp in the name: reruns of a command write to the same log
        file_path = log_dir / log_file
        file_handler = logging.FileHandler(file_path, encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
        logger.info(f"Logging to file: {file_path}")

    if not logger.handlers:
        logger.addHandler(logging.NullHandler())

    return logger


def get_logger(name):
    """
    Get a module logger below the package logger.

    If nothing has configured the package logger yet, a basic stderr handler is
    attached to it (not to the module logger), so later calls to
    ``setup_logger`` replace it cleanly.

    Args:
        name (str): Name of the logger, usually ``__name__``

    Returns:
        Logger: Logger object
    """
    if name != PACKAGE_LOGGER and not name.startswith(PACKAGE_LOGGER + "."):
        name = f"{PACKAGE_LOGGER}.{name}"
    root = logging.getLogger(PACKAGE_LOGGER)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(DEFAULT_FORMAT))
        root.addHandler(handler)
        root.setLevel(logging.WARNING)
    return logging.getLogger(name)
