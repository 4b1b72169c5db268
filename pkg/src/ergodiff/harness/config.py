"""Experiment configuration: a JSON document with a fixed schema.

Unknown keys are rejected so that a typo cannot silently fall back to a
default.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigurationError
from ..functionals import TEST_FUNCTIONS
from ..model import DRIFT_REGISTRY

BANDWIDTH_RULES = ("inverse_sqrt", "fixed")
LOCAL_TIME_METHODS = ("tanaka", "occupation")
TAIL_TARGETS = ("max_process", "localtime_sup", "cath_diff")
INTEGRANDS = tuple(TEST_FUNCTIONS) + ("zero",)


@dataclass
class ExperimentConfig:
    """Settings shared by all experiments.

    ``horizons`` are used in order; tail experiments read the horizon of
    their target from ``tail_horizons``. ``bound_overrides`` is passed to
    ``BoundParams`` on top of the constants computed from the law.
    """

    drift: str = "ou"
    drift_params: dict = field(default_factory=dict)
    certificate: dict | None = None
    holder: dict | None = None
    delta: float = 1e-3
    horizons: list = field(default_factory=lambda: [250.0, 1000.0, 4000.0, 16000.0])
    bandwidth_rule: str = "inverse_sqrt"
    bandwidth: float | None = None
    kernel_order: int = 1
    n_replicates: int = 100
    root_seed: int = 20240601
    p_list: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    u_list: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    output_dir: str = "results"
    bound_overrides: dict = field(default_factory=dict)
    local_time_method: str = "tanaka"
    epsilon: float = 0.05
    tail_horizons: dict = field(
        default_factory=lambda: {"max_process": 100.0, "localtime_sup": 400.0, "cath_diff": 400.0}
    )
    calibration_u: float = 1.0
    pilot_replicates: int | None = None
    integrand: str = "hat"
    decomposition_deltas: list = field(default_factory=lambda: [1e-3, 1e-4])
    decomposition_horizons: list = field(default_factory=lambda: [100.0, 400.0])
    window_mass: float = 1e-10
    max_failure_rate: float = 0.05

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.drift not in DRIFT_REGISTRY:
            raise ConfigurationError(f"unknown drift {self.drift!r}; known: {sorted(DRIFT_REGISTRY)}")
        if not isinstance(self.drift_params, dict):
            raise ConfigurationError("drift_params must be an object")
        if self.certificate is not None and not (
            isinstance(self.certificate, dict) and set(self.certificate) <= {"C_growth", "A", "gamma"}
        ):
            raise ConfigurationError("certificate is an object with keys among C_growth, A, gamma")
        if self.holder is not None and not (
            isinstance(self.holder, dict) and set(self.holder) == {"beta", "L_holder"}
        ):
            raise ConfigurationError("holder is an object with keys beta and L_holder")
        if not (isinstance(self.delta, (int, float)) and 0 < self.delta <= 0.01):
            raise ConfigurationError("delta must lie in (0, 0.01]")
        _increasing("horizons", self.horizons)
        _increasing("decomposition_horizons", self.decomposition_horizons)
        if self.bandwidth_rule not in BANDWIDTH_RULES:
            raise ConfigurationError(f"bandwidth_rule must be one of {BANDWIDTH_RULES}")
        if self.bandwidth_rule == "fixed" and not (self.bandwidth is not None and 0 < self.bandwidth < 1):
            raise ConfigurationError("a fixed bandwidth in (0, 1) is required")
        if self.kernel_order not in (0, 1, 2, 3):
            raise ConfigurationError("kernel_order must be 0, 1, 2 or 3")
        if not (isinstance(self.n_replicates, int) and self.n_replicates >= 1):
            raise ConfigurationError("n_replicates must be an integer >= 1")
        if self.pilot_replicates is not None and not (
            isinstance(self.pilot_replicates, int) and self.pilot_replicates >= 1
        ):
            raise ConfigurationError("pilot_replicates must be an integer >= 1")
        if not (isinstance(self.root_seed, int) and 0 <= self.root_seed < 2 ** 64):
            raise ConfigurationError("root_seed must be a 64-bit unsigned integer")
        if not self.p_list or any(not p >= 1 for p in self.p_list):
            raise ConfigurationError("p_list entries must be >= 1")
        if not self.u_list or any(not u >= 1 for u in self.u_list):
            raise ConfigurationError("u_list entries must be >= 1")
        if self.local_time_method not in LOCAL_TIME_METHODS:
            raise ConfigurationError(f"local_time_method must be one of {LOCAL_TIME_METHODS}")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        unknown = set(self.tail_horizons) - set(TAIL_TARGETS)
        if unknown:
            raise ConfigurationError(f"unknown tail targets {sorted(unknown)}")
        if not self.calibration_u >= 1:
            raise ConfigurationError("calibration_u must be >= 1")
        if self.integrand not in INTEGRANDS:
            raise ConfigurationError(f"integrand must be one of {INTEGRANDS}")
        if not self.decomposition_deltas or any(not 0 < d <= 0.01 for d in self.decomposition_deltas):
            raise ConfigurationError("decomposition_deltas must lie in (0, 0.01]")
        if not 0 < self.window_mass < 0.5:
            raise ConfigurationError("window_mass must lie in (0, 1/2)")
        if not 0 <= self.max_failure_rate < 1:
            raise ConfigurationError("max_failure_rate must lie in [0, 1)")

    # --- derived settings

    def bandwidth_for(self, horizon: float) -> float:
        if self.bandwidth_rule == "fixed":
            return float(self.bandwidth)
        return 1.0 / math.sqrt(horizon)

    def tail_horizon(self, target: str) -> float:
        if target not in TAIL_TARGETS:
            raise ConfigurationError(f"unknown tail target {target!r}")
        defaults = ExperimentConfig.__dataclass_fields__["tail_horizons"].default_factory()
        return float(self.tail_horizons.get(target, defaults[target]))

    @property
    def n_pilot(self) -> int:
        return self.n_replicates if self.pilot_replicates is None else self.pilot_replicates

    # --- serialization

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("configuration must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown configuration keys {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from None
        return cls.from_dict(data)


def _increasing(name, values):
    if not values or any(not v > 0 for v in values):
        raise ConfigurationError(f"{name} must be a nonempty list of positive numbers")
    if any(b <= a for a, b in zip(values[:-1], values[1:])):
        raise ConfigurationError(f"{name} must be strictly increasing")
