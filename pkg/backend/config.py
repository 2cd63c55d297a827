# backend/config.py

import os
from dotenv import load_dotenv
from pathlib import Path

# Load .env from project root
root = Path(__file__).resolve().parents[1]
load_dotenv(root / ".env")


def _int(name, default):
    return int(os.getenv(name, default))


def _float(name, default):
    return float(os.getenv(name, default))


# Exact permanent engines refuse matrices above these sizes
NAIVE_MAX_N = _int("PERMBOUND_NAIVE_MAX_N", 10)
RYSER_MAX_N = _int("PERMBOUND_RYSER_MAX_N", 30)
GLYNN_MAX_N = _int("PERMBOUND_GLYNN_MAX_N", 26)

# Full enumeration over all 2^n sign vectors (materialized in memory)
ENUM_MAX_N = _int("PERMBOUND_ENUM_MAX_N", 16)

# bound_report only attaches ln|perm| up to this size
BOUNDS_EXACT_MAX_N = _int("PERMBOUND_BOUNDS_EXACT_MAX_N", 20)

# Power iteration for the operator norm
OP_NORM_TOL = _float("PERMBOUND_OP_NORM_TOL", 1e-10)
OP_NORM_MAX_ITER = _int("PERMBOUND_OP_NORM_MAX_ITER", 10000)
OP_NORM_RESTART_SEED = _int("PERMBOUND_OP_NORM_RESTART_SEED", 0x5EED)

# Samples per counter-based RNG block. Changing it changes every sampled result.
SAMPLE_BLOCK = _int("PERMBOUND_SAMPLE_BLOCK", 4096)

# Columns enumerated per vectorized Gray-code table in Ryser / Glynn
RYSER_LOW_BITS = _int("PERMBOUND_RYSER_LOW_BITS", 12)

WORKERS = _int("PERMBOUND_WORKERS", 1)
LOG_LEVEL = os.getenv("PERMBOUND_LOG_LEVEL", "INFO")

# Where experiment reports are written when no --output is given
OUTPUT_DIR = os.getenv("PERMBOUND_OUTPUT_DIR", "results")
