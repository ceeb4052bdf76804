import logging
import sys
import uuid
from typing import Optional

from .config import LOG_FORMAT, VALID_LOG_LEVELS
from .exceptions import ConfigError


class LogConstFilter(logging.Filter):
    def __init__(self, consts):
        super().__init__()
        self.consts = consts

    def filter(self, record):
        for key, value in self.consts.items():
            setattr(record, key, value)
        return True


def get_logger(
    name: str = "midivae",
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    stream=None,
    **consts,
) -> logging.Logger:
    """
    Configures the package logger used by the command line.

    Parameters
    ----------------
    name: str
        Logger name.
        Field is not required. Default: 'midivae'.
    log_level: str
        Options: 'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL', 'NOTSET'.
        Field is not required. Default: 'INFO'.
    log_file: str
        Also write records to this file.
        Field is not required. Default: None.
    stream:
        Stream for the console handler.
        Field is not required. Default: sys.stderr.
    consts:
        Constants stamped on every record, e.g. command='train'.
        'run_id' defaults to a short random id.
    """
    if log_level not in VALID_LOG_LEVELS:
        raise ConfigError(f"Must provide a valid 'log_level' parameter. Valid options are: {VALID_LOG_LEVELS}")

    consts.setdefault('run_id', uuid.uuid4().hex[:8])
    consts.setdefault('command', '-')

    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, log_level))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT)
    handlers = [logging.StreamHandler(stream if stream is not None else sys.stderr)]
    if log_file is not None:
        handlers.append(logging.FileHandler(filename=log_file))
    for handler in handlers:
        handler.setFormatter(formatter)
        handler.addFilter(LogConstFilter(consts))
        logger.addHandler(handler)

    logger.propagate = False
    return logger
