from __future__ import annotations

import os

# ==========================================
# Tolerances
# ==========================================
DISK_TOL = 1e-12          # disk membership slack
REAL_TOL = 1e-10          # |Im| below which an eigenvalue counts as real
STABILITY_SLACK = 1e-12   # |outer amplification| <= 1 + slack
DEFLATION_TOL = 1e-13     # relative distance at which symbol diagonal entries merge
TIME_TOL = 1e-10          # relative tolerance when landing on target times

# ==========================================
# Solver limits
# ==========================================
MIN_EPS = 1e-8            # smaller eps makes dt = eps^2 useless in double precision
DEFAULT_K_MAX = 64        # search range for the minimal number of inner steps
ABERTH_MAX_ITER = 200
DIVERGENCE_FACTOR = 1e3   # max|f| growth over the initial state that counts as divergence

# ==========================================
# Reference runs
# ==========================================
DEFAULT_COST_CEILING = 10**8
COST_CEILING_ENV = "KINPROJ_COST_CEILING"

# ==========================================
# Output
# ==========================================
DEFAULT_OUTPUT_DIR = "outputs"
CSV_FLOAT_FORMAT = ".17g"


def cost_ceiling(override: int | None = None) -> int:
    """Resolve the reference cost guard: explicit value, then env var, then default."""
    if override is not None:
        return int(override)
    env_value = os.getenv(COST_CEILING_ENV)
    if env_value:
        return int(float(env_value))
    return DEFAULT_COST_CEILING
