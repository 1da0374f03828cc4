"""
Numerical thresholds, defaults and exit codes shared across the package.
"""

# Moduli below this are treated as zero when building Bad sets and index partitions
DEFAULT_EPSILON = 1e-6
DEFAULT_TOL = 1e-6

NORM_TOL = 1e-9
ADMISSIBILITY_TOL = 1e-8
RANK_RTOL = 1e-9
ABNORMAL_THRESHOLD = 1e-7
CLASS_NORM_TOL = 1e-8
PMP_TOL = 1e-4
CONSTANCY_TOL = 1e-3
BOUND_ACTIVE_RTOL = 1e-9

# Bracket closure is brute force; beyond this it stops being desk-scale
LIE_MAX_LEVELS = 6
LIE_EVALUATION_SEED = 7

# Step-count heuristic: phase advance and control rotation per step stay below this
MAX_PHASE_PER_STEP = 0.1

DEFAULT_RESTARTS = 8
THREADS_ENV = "QOC_THREADS"

FLAVORS = {
    "V": "hermitian-V",
    "H": "skew-H",
    "U": "real-U",
}

COST_KINDS = ["energy", "length", "area", "time-max"]

BOUNDARY_KINDS = ["moduli-point", "eigenstate", "moduli-set"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_CONTROLLABILITY = 4
EXIT_CONVERGENCE = 5

RESONANT = "resonant"
WEAKLY_RESONANT = "weakly-resonant"
NEITHER = "neither"

NOT_STRICTLY_ABNORMAL = "not strictly abnormal"
VACUOUSLY_FULL_RANK = "vacuously full rank"
INCONCLUSIVE = "inconclusive"

RESONANTQOC_LOGO = r"""
  ____                                  _    ___   ___   ____
 |  _ \ ___  ___  ___  _ __   __ _ _ __ | |_ / _ \ / _ \ / ___|
 | |_) / _ \/ __|/ _ \| '_ \ / _` | '_ \| __| | | | | | | |
 |  _ <  __/\__ \ (_) | | | | (_| | | | | |_| |_| | |_| | |___
 |_| \_\___||___/\___/|_| |_|\__,_|_| |_|\__|\__\_\\___/ \____|
"""
