import copy
import json
import os

from src.errors import ParameterError

# ==========================================
# ⚙️ CONFIGURATION & SETTINGS
# ==========================================
# Largest n for which dense n x n work (Gram oracle, eigensolvers) is allowed.
DENSE_GUARD = 10_000

# gamma = c * n / epsilon^2. c is the smallest sweep value that succeeds in at
# least half of the calibrate runs (dense +-1 columns). Sparse binary columns
# succeed at every c >= 1, so they cannot fix c.
DEFAULT_CALIBRATION_C = 4.0
CALIBRATION_SWEEP = (1.0, 2.0, 4.0, 8.0, 16.0)

# Power iteration
POWER_TOL = 1e-10
POWER_MAX_ITER = 100_000

# Cyclic Jacobi
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100

# Engine
THREADS_ENV = "DIMSUM_THREADS"
CHUNKS_PER_THREAD = 4

# Output locations
DEFAULT_OUTPUT_DIR = "output"


def default_threads():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ParameterError(f"{THREADS_ENV}='{raw}' is not an integer")
    if threads < 1:
        raise ParameterError(f"{THREADS_ENV} must be >= 1, got {threads}")
    return threads


# ==========================================
# 🧪 VERIFICATION SUITE DEFAULTS
# ==========================================
# Each suite reads "matrix" (a generator spec or {"path": ...}) plus its own
# statistical parameters. Trial counts keep every suite under a minute.
SUITE_DEFAULTS = {
    "moments": {
        "matrix": {"generator": "random", "m": 2000, "n": 30, "L": 6, "value_dist": "binary", "seed": 11},
        "gamma": 50.0,
        "trials": 2000,
        "seed": 1,
    },
    "unbiased": {
        "matrix": {"generator": "random", "m": 2000, "n": 30, "L": 6, "value_dist": "binary", "seed": 11},
        "gamma": 50.0,
        "trials": 2000,
        "mode": "dimsum",
        "seed": 1,
    },
    "success": {
        "matrix": {"generator": "random", "m": 5000, "n": 40, "L": 8, "value_dist": "binary", "seed": 12},
        "epsilon": 0.5,
        "c": DEFAULT_CALIBRATION_C,
        "trials": 100,
        "seed": 2,
    },
    "calibrate": {
        # Success threshold falls between c=2 and c=4 here.
        "matrix": {"generator": "random", "m": 5000, "n": 40, "L": 40, "value_dist": "signs", "seed": 15},
        "epsilon": 0.5,
        "c_values": list(CALIBRATION_SWEEP),
        "trials": 20,
        "seed": 7,
    },
    "chernoff": {
        # Columns in a group have norm^2 = L = 40, so gamma = alpha/1 = 20 samples at p = 0.5.
        "matrix": {"generator": "lowerbound", "n": 80, "L": 40},
        "i": 0,
        "j": 1,
        "alpha": 20.0,
        "delta": 0.5,
        "epsilon": None,
        "trials": 10_000,
        "mode": "dimsum",
        "seed": 3,
    },
    "shuffle": {
        "matrix": {"generator": "random", "m": 5000, "n": 50, "L": 10, "value_dist": "binary", "seed": 13},
        "gamma": 100.0,
        "trials": 20,
        "seed": 4,
    },
    "dimfree": {
        "n": 50,
        "L": 5,
        "gamma": 20.0,
        "m_values": [1_000, 10_000, 100_000],
        "trials": 3,
        "seed": 5,
    },
    "reducekey": {
        "matrix": {"generator": "random", "m": 2000, "n": 30, "L": 6, "value_dist": "binary", "seed": 14},
        "gamma": 30.0,
        "trials": 20,
        "seed": 6,
    },
    "lowerbound": {
        "n": 6,
        "L": 3,
    },
}

# Order used by "--suite all"
SUITE_ORDER = ("lowerbound", "moments", "unbiased", "success", "chernoff",
               "shuffle", "dimfree", "reducekey")


def load_suite_config(suite, path=None, overrides=None):
    """
    Merge suite defaults <- JSON file <- CLI overrides.
    Keys set to None in overrides are ignored; unknown keys are rejected.
    """
    if suite not in SUITE_DEFAULTS:
        raise ParameterError(f"Unknown suite '{suite}'")
    cfg = copy.deepcopy(SUITE_DEFAULTS[suite])

    layers = []
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ParameterError(f"Could not read suite config '{path}': {e}")
        if not isinstance(data, dict):
            raise ParameterError(f"Suite config '{path}' must be a JSON object")
        # Either a flat parameter object or one section per suite name.
        if any(name in SUITE_DEFAULTS for name in data):
            data = data.get(suite, {})
        layers.append(data)
    if overrides:
        layers.append({k: v for k, v in overrides.items() if v is not None})

    for layer in layers:
        for key, value in layer.items():
            if key not in cfg:
                raise ParameterError(f"Suite '{suite}' has no parameter '{key}'")
            same_generator = value.get("generator", cfg[key].get("generator")) == cfg[key].get("generator") \
                if key == "matrix" and isinstance(value, dict) and isinstance(cfg[key], dict) else False
            if same_generator and "path" not in value:
                cfg["matrix"].update(value)
            else:
                cfg[key] = value
    return cfg
