"""Declarative run configuration.

A TOML file selects the grid, noise, attacker, exchange policy and
protocol knobs for one run (plus an optional beacon-power sweep).  The
loader validates every key against a fixed schema and reports problems
with their ``section.key`` path; unknown keys are rejected rather than
ignored so typos cannot silently fall back to defaults.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import tomli

from .mobility import GridParams, MobileMiddle, RandomMobility, StaticPosition
from .observation import ClockMismatch, Multipath, NoiseModel
from .opportunistic import PolicyConfig
from .reconciliation import CascadeConfig
from .scenario import Scenario
from .trace import TraceConfig

__all__ = ["ConfigError", "ScenarioConfig", "config_from_dict", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the offending ``section.key``."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__("%s: %s" % (path, message))
        self.path = path


# schema: section -> key -> (type, default). float entries accept ints.
_SCHEMA: Dict[str, Dict[str, tuple]] = {
    "": {
        "seed": (int, 0),
        "id": (str, "run"),
    },
    "mobility": {
        "m": (int, 5),
        "a": (float, 5.0),
        "b": (int, 1),
        "burn_in": (int, None),
        "attacker": (str, "random"),
        "attacker_b": (int, None),
        "x": (float, None),
        "y": (float, None),
    },
    "noise": {
        "p": (float, 1.0),
        "rho1": (float, 1.0),
        "rho2": (float, 1.0),
        "rho_e": (float, 1.0),
        "gli": (str, "none"),
        "eve_angle": (bool, True),
        "bias": (str, "none"),
        "w1": (float, 0.0),
        "w2": (float, 0.0),
        "sigma": (float, 0.0),
    },
    "localization": {
        "delta": (float, None),
        "viterbi_state_cap": (int, 10000),
        "use_viterbi": (bool, None),
    },
    "policy": {
        "mode": (str, "always"),
        "tau": (float, 0.5),
        "c": (int, 4),
    },
    "pipeline": {
        "n": (int, 400),
        "m_bits": (int, None),
        "passes": (int, 4),
        "pilot_fraction": (float, 0.05),
    },
    "bounds": {
        "n": (int, 300),
        "trials": (int, 50),
    },
    "sweep": {
        "p": (list, None),
    },
    "trace": {
        "step": (float, 3.0),
        "gray_bits": (int, 2),
        "worst_case_bmr_e": (float, None),
    },
}

_CHOICES = {
    "mobility.attacker": ("random", "static", "middle"),
    "noise.gli": ("none", "perfect"),
    "noise.bias": ("none", "clock", "multipath"),
    "policy.mode": ("always", "opportunistic", "genie"),
}


def _checked(section: str, table: Dict[str, Any]) -> Dict[str, Any]:
    """Validate one table against the schema, filling defaults."""
    schema = _SCHEMA[section]
    out = {}
    for key, value in table.items():
        path = "%s.%s" % (section, key) if section else key
        if key not in schema:
            if not section and isinstance(value, dict):
                continue  # sections handled by the caller
            raise ConfigError(path, "unknown key")
        want = schema[key][0]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, want) or (want is int and isinstance(value, bool)):
            raise ConfigError(path, "expected %s" % want.__name__)
        choices = _CHOICES.get(path)
        if choices and value not in choices:
            raise ConfigError(path, "must be one of %s" % ", ".join(choices))
        out[key] = value
    for key, (_, default) in schema.items():
        out.setdefault(key, default)
    return out


@dataclass
class ScenarioConfig:
    """Validated run settings; ``scenario`` is the assembled model."""

    scenario: Scenario
    seed: int = 0
    scenario_id: str = "run"
    n: int = 400
    m_bits: Optional[int] = None
    delta: Optional[float] = None
    use_viterbi: Optional[bool] = None
    viterbi_state_cap: int = 10000
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    bounds_n: int = 300
    bounds_trials: int = 50
    sweep_powers: Optional[List[float]] = None
    trace: TraceConfig = field(default_factory=TraceConfig)

    @property
    def powers(self) -> List[float]:
        """Sweep axis; the scenario's own power when no sweep is set."""
        if self.sweep_powers is not None:
            return list(self.sweep_powers)
        return [self.scenario.noise.power]


def _build_attacker(mob: Dict[str, Any]):
    kind = mob["attacker"]
    if kind == "static":
        if mob["x"] is None or mob["y"] is None:
            raise ConfigError("mobility.x", "static attacker needs x and y")
        return StaticPosition(mob["x"], mob["y"])
    if mob["x"] is not None or mob["y"] is not None:
        raise ConfigError("mobility.x", "x/y only apply to the static attacker")
    if kind == "middle":
        if mob["attacker_b"] is not None:
            raise ConfigError("mobility.attacker_b", "only applies to the random attacker")
        return MobileMiddle()
    return RandomMobility(mob["attacker_b"])


def _build_bias(noi: Dict[str, Any]):
    kind = noi["bias"]
    if kind == "clock":
        return ClockMismatch(noi["w1"], noi["w2"])
    if kind == "multipath":
        return Multipath(noi["sigma"])
    for key in ("w1", "w2", "sigma"):
        if noi[key] != 0.0:
            raise ConfigError("noise.%s" % key, "only applies with a bias model")
    return None


def config_from_dict(raw: Dict[str, Any]) -> ScenarioConfig:
    """Assemble validated settings from a parsed TOML mapping."""
    for name in raw:
        if isinstance(raw[name], dict) and name not in _SCHEMA:
            raise ConfigError(name, "unknown section")
    top = _checked("", raw)
    mob = _checked("mobility", raw.get("mobility", {}))
    noi = _checked("noise", raw.get("noise", {}))
    loc = _checked("localization", raw.get("localization", {}))
    pol = _checked("policy", raw.get("policy", {}))
    pipe = _checked("pipeline", raw.get("pipeline", {}))
    bnd = _checked("bounds", raw.get("bounds", {}))
    sweep = _checked("sweep", raw.get("sweep", {}))
    trc = _checked("trace", raw.get("trace", {}))

    try:
        grid = GridParams(mob["m"], mob["a"], mob["b"])
    except ValueError as e:
        raise ConfigError("mobility", str(e)) from None
    try:
        noise = NoiseModel(power=noi["p"], rho1=noi["rho1"], rho2=noi["rho2"],
                           rho_e=noi["rho_e"])
    except ValueError as e:
        raise ConfigError("noise", str(e)) from None

    policy = None
    genie = False
    if pol["mode"] != "always":
        try:
            policy = PolicyConfig(tau=pol["tau"], max_skip_run=pol["c"])
        except ValueError as e:
            raise ConfigError("policy", str(e)) from None
        genie = pol["mode"] == "genie"

    attacker = _build_attacker(mob)
    if isinstance(attacker, StaticPosition):
        try:
            attacker.cell(grid)
        except ValueError as e:
            raise ConfigError("mobility.x", str(e)) from None
    try:
        scenario = Scenario(
            grid=grid,
            noise=noise,
            mode=noi["gli"],
            attacker=attacker,
            policy=policy,
            genie=genie,
            burn_in=mob["burn_in"],
            bias=_build_bias(noi),
            eve_angle=noi["eve_angle"],
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError("mobility", str(e)) from None

    powers = sweep["p"]
    if powers is not None:
        if not powers or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in powers
        ):
            raise ConfigError("sweep.p", "expected a nonempty list of numbers")
        powers = [float(x) for x in powers]
        if any(not x > 0 or not math.isfinite(x) for x in powers):
            raise ConfigError("sweep.p", "powers must be positive and finite")

    for path, val in (("pipeline.n", pipe["n"]), ("bounds.n", bnd["n"]),
                      ("bounds.trials", bnd["trials"])):
        if val < 1:
            raise ConfigError(path, "must be at least 1")
    if pipe["m_bits"] is not None and pipe["m_bits"] < 1:
        raise ConfigError("pipeline.m_bits", "must be at least 1")
    if loc["delta"] is not None and not loc["delta"] > 0:
        raise ConfigError("localization.delta", "must be positive")
    if loc["viterbi_state_cap"] < 1:
        raise ConfigError("localization.viterbi_state_cap", "must be at least 1")

    try:
        cascade = CascadeConfig(passes=pipe["passes"],
                                pilot_fraction=pipe["pilot_fraction"])
        trace = TraceConfig(step=trc["step"], gray_bits=trc["gray_bits"],
                            cascade=cascade,
                            worst_case_bmr_e=trc["worst_case_bmr_e"])
    except ValueError as e:
        raise ConfigError("pipeline", str(e)) from None

    return ScenarioConfig(
        scenario=scenario,
        seed=top["seed"],
        scenario_id=top["id"],
        n=pipe["n"],
        m_bits=pipe["m_bits"],
        delta=loc["delta"],
        use_viterbi=loc["use_viterbi"],
        viterbi_state_cap=loc["viterbi_state_cap"],
        cascade=cascade,
        bounds_n=bnd["n"],
        bounds_trials=bnd["trials"],
        sweep_powers=powers,
        trace=trace,
    )


def load_config(path: str) -> ScenarioConfig:
    """Read and validate a TOML configuration file."""
    with open(path, "rb") as fh:
        try:
            raw = tomli.load(fh)
        except tomli.TOMLDecodeError as e:
            raise ConfigError("<file>", "TOML parse error: %s" % e) from None
    return config_from_dict(raw)
