"""Logger modules."""

import logging
import sys

from weylconn.config import Settings

LOGGER_NAME = "weylconn"


def get_logger(settings: Settings) -> logging.Logger:
    """Create and configure the weylconn logger.

    The logger writes to stderr, so that reports printed on stdout stay clean, with a
    detailed format including timestamp, log level, logger name, process and thread
    information, and the message. The log level is set based on the settings. A second
    call reuses the handler already attached.

    Args:
        settings: The settings instance containing the log level.

    Returns:
        logging.Logger: The configured logger instance.

    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level=settings.LOG_LEVEL)
    if not logger.handlers:
        formatter = logging.Formatter(
            "%(asctime)s %(levelname)s %(name)s "
            "[%(processName)s: %(process)d - %(threadName)s: %(thread)d] "
            "%(message)s"
        )
        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)
    return logger
