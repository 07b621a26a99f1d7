import os
import logging
from datetime import datetime
from typing import Dict, Optional

from config.config import CHECKPOINT_LOG_FILE, LOG_LEVEL, RUN_LOG_FILE


def setup_logger(name: str, log_file: Optional[str] = None) -> logging.Logger:
    """
    Set up a logger for a specific module

    Args:
        name: The name of the logger (usually __name__)
        log_file: Optional log file path (if None, logs to console only)

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    if logger.handlers:  # Return logger if already configured
        return logger

    logger.setLevel(LOG_LEVEL)
    formatter = logging.Formatter('[%(asctime)s] %(levelname)s [%(name)s]: %(message)s')

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def set_global_level(level: str) -> None:
    """Change the level of every logger created through setup_logger"""
    for logger in logging.Logger.manager.loggerDict.values():
        if isinstance(logger, logging.Logger) and logger.handlers:
            logger.setLevel(level.upper())


def log_training_step(
    iteration: int,
    loss: float,
    per_level: Dict[str, float],
    log_file: Optional[str] = None,
) -> None:
    """
    Append one training iteration to the dedicated run log

    Args:
        iteration: Iteration index
        loss: Total loss
        per_level: Weighted loss of every pyramid level
        log_file: Destination file
    """
    log_file = log_file or RUN_LOG_FILE
    timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
    levels = ", ".join(f"{name}={value:.6g}" for name, value in per_level.items())
    message = f"[{timestamp}] iteration {iteration}: loss {loss:.6g} ({levels})."

    os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
    with open(log_file, 'a', encoding='utf-8') as f:
        f.write(message + '\n')


def log_checkpoint_event(
    action: str,
    path: str,
    entries: int,
    log_file: Optional[str] = None,
) -> None:
    """
    Append a checkpoint save/load to the dedicated checkpoint log

    Args:
        action: The action performed (e.g., "saved", "loaded")
        path: Checkpoint path
        entries: Number of tensor entries in the file
        log_file: Destination file
    """
    log_file = log_file or CHECKPOINT_LOG_FILE
    timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
    message = f"[{timestamp}] {action.capitalize()} checkpoint '{path}' with {entries} entries."

    os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
    with open(log_file, 'a', encoding='utf-8') as f:
        f.write(message + '\n')
