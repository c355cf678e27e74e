"""Secret-key generation from shared location observations.

Two legitimate nodes moving on a bounded grid exchange ranging beacons,
localize each other with an HMM over the joint mobility state, and distill
a secret key from the quantized location estimates while an eavesdropper
collects her own noisy observations of both.  The package covers the full
pipeline (localization, information reconciliation, compression, privacy
amplification), an opportunistic beacon-exchange policy, and Monte-Carlo
estimation of upper and lower bounds on the achievable secret-key rate.
"""

__version__ = "0.1.0"

from .bounds import RateBounds, eta_bound, key_rate_bounds, power_sweep
from .config import ConfigError, ScenarioConfig, load_config
from .mobility import GridParams, MobileMiddle, RandomMobility, StaticPosition
from .observation import NoiseModel
from .opportunistic import PolicyConfig
from .pipeline import KeyGenResult, run_key_generation
from .randomness import run_tests
from .reconciliation import BitSequence, CascadeConfig, cascade
from .scenario import Run, Scenario, sample_run
from .trace import TraceConfig, read_trace_csv, run_trace_pipeline

__all__ = [
    "__version__",
    "BitSequence",
    "CascadeConfig",
    "ConfigError",
    "GridParams",
    "KeyGenResult",
    "MobileMiddle",
    "NoiseModel",
    "PolicyConfig",
    "RandomMobility",
    "RateBounds",
    "Run",
    "Scenario",
    "ScenarioConfig",
    "StaticPosition",
    "TraceConfig",
    "cascade",
    "eta_bound",
    "key_rate_bounds",
    "load_config",
    "power_sweep",
    "read_trace_csv",
    "run_key_generation",
    "run_tests",
    "run_trace_pipeline",
    "sample_run",
]
