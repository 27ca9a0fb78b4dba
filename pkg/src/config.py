"""
Environment configuration and logging setup.

Settings are read from the process environment (optionally populated from a
``.env`` file) so runs can be tuned without touching code.

Environment:
- SPECTRAL_REG_OUTPUT_ROOT: default directory for command outputs
- SPECTRAL_REG_DENSE_LIMIT: largest vertex count solved with the dense eigensolver
- SPECTRAL_REG_EXACT_LIMIT: size guard for the exact transport solver
- LOG_LEVEL / LOG_FILE: logging verbosity and log file location

Author: SpectralReg
Version: 1.0.0
"""

import os
import logging
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

LOGGER_ROOT = "SpectralReg"


@dataclass
class SolverSettings:
    """Numerical caps shared by the solvers."""
    dense_limit: int = 4000  # ℓ at or below which eigenproblems are solved densely
    exact_limit: int = 1_000_000  # ℓ_P·ℓ_Q guard for the transportation simplex
    residual_tol: float = 1e-8  # relative generalized eigen-residual
    gap_tol: float = 1e-8  # relative gap under which eigenvalues count as repeated


def create_solver_settings() -> SolverSettings:
    """Create solver settings from environment variables."""
    return SolverSettings(
        dense_limit=int(os.getenv("SPECTRAL_REG_DENSE_LIMIT", "4000")),
        exact_limit=int(os.getenv("SPECTRAL_REG_EXACT_LIMIT", "1000000")),
        residual_tol=float(os.getenv("SPECTRAL_REG_RESIDUAL_TOL", "1e-8")),
    )


def default_output_root() -> Path:
    """Directory used when a command is not given ``--out``."""
    return Path(os.getenv("SPECTRAL_REG_OUTPUT_ROOT", "runs"))


def get_logger(component: str) -> logging.Logger:
    """Logger for one pipeline component, e.g. ``get_logger("Transport")``."""
    return logging.getLogger(f"{LOGGER_ROOT}.{component}")


def setup_logging() -> logging.Logger:
    """Set up logging configuration for the package root logger.

    Idempotent: handlers are attached only on the first call.
    """
    logger = logging.getLogger(LOGGER_ROOT)
    if logger.handlers:
        return logger
    logger.setLevel(getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO))

    # Create logs directory if it doesn't exist
    log_file = Path(os.getenv("LOG_FILE", "logs/spectral_registration.log"))
    log_file.parent.mkdir(parents=True, exist_ok=True)

    file_handler = logging.FileHandler(log_file)
    file_handler.setLevel(logging.DEBUG)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.INFO)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    file_handler.setFormatter(formatter)
    console_handler.setFormatter(formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    return logger
