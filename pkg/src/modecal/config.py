"""Run configuration file (JSON) and construction of the optimizer pieces."""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .gp import GpProposer
from .hyperband import BohbScheduler, EarlyStopRule, build_ladder
from .sim import load_scenario
from .space import parse_space
from .tpe import TpeProposer

BACKENDS = ("bohb", "gp-qei", "random")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = "urbansim10k"
    space: dict = field(default_factory=lambda: {"uniform": [-20.0, 20.0]})
    b_min: int = 3
    b_max: int = 21
    eta: float = 3.0
    backend: str = "bohb"
    gamma: float = 0.15
    rho: float = 1 / 3
    n_candidates: int = 64
    min_points: int = 9
    h_min: float = 1e-3
    bandwidth_factor: float = 1.0
    n_initial: int = 9
    n_iterations: int | None = 20
    max_full_budget_trials: int | None = None
    max_trials: int | None = None
    early_stop: dict = field(default_factory=dict)
    minutes_per_iteration: float = 12.0
    gp: dict = field(default_factory=dict)
    heartbeat_interval: float = 5.0
    heartbeat_misses: int = 3
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        ladder = d.pop("ladder", None)
        if ladder:
            d.update({k: ladder[k] for k in ("b_min", "b_max", "eta") if k in ladder})
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        cfg = cls(**d)
        cfg.base_dir = str(base_dir)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        path = self.scenario_path()
        if path is not None:
            d["scenario"] = str(path.resolve())
        return d

    def validate(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if not 0 <= self.rho <= 1:
            raise ConfigError("rho must lie in [0, 1]")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        try:
            build_ladder(self.b_min, self.b_max, self.eta)
            self.rule()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def rule(self):
        return EarlyStopRule(**self.early_stop)

    def scenario_path(self):
        if self.scenario == "urbansim10k":
            return None
        p = Path(self.scenario)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def build(self, seed):
        """Scenario, search space and scheduler for one run."""
        try:
            scenario = load_scenario(self.scenario_path())
            space = parse_space(self.space, center=scenario.ground_truth)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        ladder = build_ladder(self.b_min, self.b_max, self.eta)
        proposer = None
        rho = self.rho
        if self.backend == "bohb":
            proposer = TpeProposer(space.lower, space.upper, self.gamma, self.min_points, self.n_candidates,
                                   self.h_min, self.bandwidth_factor)
        elif self.backend == "gp-qei":
            proposer = GpProposer(space.lower, space.upper, min_points=self.min_points, **self.gp)
        else:
            rho = 1.0
        scheduler = BohbScheduler(space, ladder, seed, proposer, rho, self.n_initial, self.n_iterations,
                                  self.max_full_budget_trials, self.max_trials)
        return scenario, space, scheduler
