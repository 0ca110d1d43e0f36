import logging
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

LEVEL_MAP = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


def setup_logging(app_config: dict) -> Optional[Path]:
    """
    Configure the root logger from the ``Logging`` and ``General`` sections.

    A file handler writes every record at the configured level; the console
    shows INFO when ``General.Verbosity`` is true and only errors otherwise.
    Handlers of a previous call are replaced.

    :param dict app_config: Experiment configuration
    :return: Path of the log file, ``None`` if it could not be created
    :rtype: Optional[Path]
    """
    verbose = app_config.get("General", {}).get("Verbosity", False)
    log_config = app_config.get("Logging", {})
    log_level = log_config.get("LogLevel", "INFO")
    log_dir = log_config.get("LogDirectory", "logs")
    log_file = log_config.get("LogFile", "mvio.log")

    if log_level.upper() not in LEVEL_MAP:
        print(f"Invalid log level '{log_level}'. Defaulting to INFO.")
        log_level = "INFO"
    level = LEVEL_MAP[log_level.upper()]

    handlers = []
    log_path = None
    try:
        log_path = Path(log_dir) / log_file
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path)
        file_handler.setLevel(level)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        handlers.append(file_handler)

    except PermissionError:
        print(f"Permission denied: cannot create log directory or log file '{log_dir}'.")
        log_path = None

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.INFO if verbose else logging.ERROR)
    console_handler.setFormatter(logging.Formatter("%(message)s"))
    handlers.append(console_handler)

    logging.basicConfig(level=level, handlers=handlers, force=True)

    logger.debug(f"Logging initialized. Level: {log_level}, Directory: {log_dir}")
    return log_path
