import os
import json
from dataclasses import dataclass, field, asdict, fields
from datetime import date
from dotenv import load_dotenv

from core.errors import InputDataError

load_dotenv()

### DEFAULTS ###
HIGH_MULTIPLIER = 1.5
LOW_MULTIPLIER = 0.5
REFERENCE_CURRENCY = "USD"
WINDOW_START = "2012-12-01"
N_BASE_NETWORKS = 10
TOP_K_EDGES = 10
MIN_REPEATS = 10
STAR_BRANCHES = 4
MAX_CYCLE_LENGTH = 8
MISSING_REFERENCE_WARN_FRACTION = 0.1
CLUSTERING_METHOD = "average"
DEGREE_MODE = "total"
RANK_METHOD = "fixed"
POWER_LAW_ESTIMATOR = "discrete"
GRAPH_KINDS = ["EHG", "ELG", "NMG", "ABG", "CG"]
DEFAULT_GRAPHS = ["EHG", "ELG", "NMG"]
DEFAULT_OUTPUT_DIR = "forensics_out"
DEFAULT_SEED = 1

OUTPUT_DIR_ENV = "FORENSICS_OUTPUT_DIR"
LOG_FILE = os.getenv("FORENSICS_LOG_FILE", "forensics.log")


@dataclass
class RunConfig:
    trades_path: str | None = None
    reference_path: str | None = None
    window_start: str | None = WINDOW_START
    window_end: str | None = None
    high_multiplier: float = HIGH_MULTIPLIER
    low_multiplier: float = LOW_MULTIPLIER
    currency: str = REFERENCE_CURRENCY
    n_base_networks: int = N_BASE_NETWORKS
    rank_method: str = RANK_METHOD
    top_k: int = TOP_K_EDGES
    min_repeats: int = MIN_REPEATS
    star_branches: int = STAR_BRANCHES
    max_cycle_length: int = MAX_CYCLE_LENGTH
    clustering_method: str = CLUSTERING_METHOD
    degree_mode: str = DEGREE_MODE
    power_law_estimator: str = POWER_LAW_ESTIMATOR
    missing_reference_warn_fraction: float = MISSING_REFERENCE_WARN_FRACTION
    graphs: list = field(default_factory=lambda: list(DEFAULT_GRAPHS))
    output_dir: str = DEFAULT_OUTPUT_DIR
    seed: int = DEFAULT_SEED

    def to_dict(self):
        return asdict(self)

    def window(self):
        start = date.fromisoformat(self.window_start) if self.window_start else None
        end = date.fromisoformat(self.window_end) if self.window_end else None
        return start, end

    def validate(self, require_inputs=()):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type in (int, float) and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise InputDataError(f"{f.name} must be a number, got {value!r}")
        if not isinstance(self.graphs, list):
            raise InputDataError(f"graphs must be a list, got {self.graphs!r}")
        for attr in require_inputs:
            path = getattr(self, attr)
            if not path or not os.path.isfile(path):
                raise InputDataError(f"{attr} is not a readable file: {path!r}")
        try:
            start, end = self.window()
        except ValueError as e:
            raise InputDataError(f"window dates must be YYYY-MM-DD: {e}") from e
        if start and end and start > end:
            raise InputDataError(f"window start {start} is after window end {end}")
        unknown = [g for g in self.graphs if g not in GRAPH_KINDS]
        if unknown:
            raise InputDataError(f"unknown graph kinds {unknown}; choose from {GRAPH_KINDS}")
        if not self.high_multiplier > 0 or not self.low_multiplier > 0:
            raise InputDataError("band multipliers must be positive")
        if self.n_base_networks < 1 or self.top_k < 1 or self.min_repeats < 1:
            raise InputDataError("n_base_networks, top_k and min_repeats must be >= 1")
        if self.star_branches < 3:
            raise InputDataError("star_branches must be >= 3")
        return self


def load_config_file(path):
    """Read a flat JSON object of RunConfig fields."""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputDataError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise InputDataError(f"config file {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InputDataError(f"config file {path} has unknown keys: {unknown}")
    return data


def resolve_run_config(flag_values, config_path=None):
    """Flags > config file > environment > defaults.

    `flag_values` holds only the options the user actually passed (None means
    "not given").
    """
    merged = {}
    env_output = os.getenv(OUTPUT_DIR_ENV)
    if env_output:
        merged["output_dir"] = env_output
    if config_path:
        merged.update(load_config_file(config_path))
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return RunConfig(**merged)
