"""
Configuration settings for the decentralized Frank-Wolfe simulator.
"""
import os
from typing import Optional


def get_setting(key: str, default: Optional[str] = None) -> Optional[str]:
    """Get a setting from the environment, falling back to the default."""
    value = os.getenv(key)
    if value is None or value == "":
        return default
    return value


# Run ledger (SQLite)
LEDGER_PATH: str = get_setting("DOFW_LEDGER_PATH", os.path.join("runs", "ledger.db"))

# Output
OUTPUT_ROOT: str = get_setting("DOFW_OUTPUT_ROOT", "runs")

# Logging
LOG_LEVEL: str = get_setting("DOFW_LOG_LEVEL", "INFO").upper()
LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Per-agent worker threads inside a round
WORKERS: int = int(get_setting("DOFW_WORKERS", "1"))

# Numerical tolerances
MEMBERSHIP_TOL: float = 1e-9
STOCHASTIC_TOL: float = 1e-12
EIGEN_TIE_TOL: float = 1e-10

# Erdos-Renyi connectivity retries
MAX_GRAPH_RETRIES: int = 1000

# Offline comparator
OFFLINE_FW_STEPS: int = 100
OFFLINE_PGD_MAX_ITER: int = 10000
OFFLINE_PGD_TOL: float = 1e-8

# Oracle regret constant reported symbolically in bound curves
DEFAULT_ORACLE_C: float = 1.0
