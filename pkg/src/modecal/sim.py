"""Desk-scale agent-based mode-choice simulator.

A fixed synthetic population picks one of eight modes per iteration from a
multinomial logit model. Car travel time responds to car volume through a BPR
volume-delay curve, relaxed with a damping factor between iterations. The
loss is the L1 distance (percentage points) between final-iteration shares
and a benchmark.
"""
import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

import numpy as np

from . import kernels
from .space import MODES, N_MODES, InterceptConfig

#: Mode share benchmark for the City of San Francisco, percent.
BENCHMARK_SHARES = (2.0, 49.0, 4.0, 3.0, 2.0, 1.0, 22.0, 17.0)

BUNDLED_SCENARIO = "urbansim10k"


@dataclass(frozen=True)
class ModeShare:
    """Percent share per mode; entries in [0, 100] summing to 100."""

    share: np.ndarray
    names: tuple = MODES

    def __post_init__(self):
        s = np.array(self.share, dtype=float)
        if s.shape != (len(self.names),):
            raise ValueError(f"expected {len(self.names)} shares, got {s.shape}")
        if np.any(s < 0) or np.any(s > 100):
            raise ValueError("shares must lie in [0, 100]")
        if abs(s.sum() - 100.0) > 1e-9:
            raise ValueError(f"shares must sum to 100, got {s.sum()!r}")
        s.setflags(write=False)
        object.__setattr__(self, "share", s)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts, dtype=float)
        return cls(100.0 * counts / counts.sum())

    @classmethod
    def from_dict(cls, d):
        return cls(np.array([float(d[m]) for m in MODES]))

    def as_dict(self):
        return {m: float(x) for m, x in zip(self.names, self.share)}


@dataclass(frozen=True)
class Coefficients:
    """Generic utility coefficients shared by all modes (utility per unit)."""

    cost: float = -0.08
    time: float = -0.04
    transfers: float = -0.3

    def as_array(self):
        return np.array([self.cost, self.time, self.transfers], dtype=float)


@dataclass(frozen=True)
class ModeAttributes:
    """Per-agent, per-mode cost (dollars), time (minutes) and transfers (count)."""

    cost: np.ndarray
    time: np.ndarray
    transfers: np.ndarray

    def __post_init__(self):
        if np.any(self.cost < 0) or np.any(self.time <= 0) or np.any(self.transfers < 0):
            raise ValueError("attributes need cost >= 0, time > 0, transfers >= 0")


@dataclass(frozen=True)
class Scenario:
    """Synthetic population and network surrogate.

    ``distributions`` maps each mode to ``{"cost": [median, sigma],
    "time": [median, sigma], "transfers": rate}``; cost and time are log-normal
    with the given median and log-space sigma (a zero median means the
    attribute is identically zero), transfers are Poisson.
    """

    population: int
    distributions: dict
    coefficients: Coefficients = field(default_factory=Coefficients)
    capacity: float = 5000.0
    bpr_alpha: float = 0.15
    bpr_beta: float = 4.0
    damping: float = 0.5
    benchmark: ModeShare = field(default_factory=lambda: ModeShare(np.array(BENCHMARK_SHARES)))
    seed: int = 0
    congested_modes: tuple = ("car",)
    ground_truth: InterceptConfig | None = None
    name: str = ""

    def __post_init__(self):
        if self.population < 1:
            raise ValueError("population must be >= 1")
        if self.capacity <= 0:
            raise ValueError("capacity must be > 0")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        missing = set(MODES) - set(self.distributions)
        if missing:
            raise ValueError(f"distributions missing modes {sorted(missing)}")
        for m in self.congested_modes:
            if m not in MODES:
                raise ValueError(f"unknown congested mode {m!r}")

    @cached_property
    def attributes(self):
        rng = np.random.default_rng(self.seed)
        n = self.population
        cost = np.zeros((n, N_MODES))
        time = np.zeros((n, N_MODES))
        transfers = np.zeros((n, N_MODES))
        for k, mode in enumerate(MODES):
            d = self.distributions[mode]
            cmed, csig = d["cost"]
            tmed, tsig = d["time"]
            cost[:, k] = 0.0 if cmed == 0 else cmed * np.exp(csig * rng.standard_normal(n))
            time[:, k] = tmed * np.exp(tsig * rng.standard_normal(n))
            transfers[:, k] = rng.poisson(float(d.get("transfers", 0.0)), n)
        return ModeAttributes(cost, time, transfers)

    @property
    def congested_mask(self):
        return np.array([m in self.congested_modes for m in MODES])

    def to_dict(self):
        out = {
            "name": self.name,
            "population": self.population,
            "distributions": self.distributions,
            "coefficients": {"cost": self.coefficients.cost, "time": self.coefficients.time,
                             "transfers": self.coefficients.transfers},
            "capacity": self.capacity,
            "bpr": {"alpha": self.bpr_alpha, "beta": self.bpr_beta},
            "damping": self.damping,
            "seed": self.seed,
            "congested_modes": list(self.congested_modes),
            "benchmark": self.benchmark.as_dict(),
        }
        if self.ground_truth is not None:
            out["ground_truth_intercepts"] = self.ground_truth.as_dict()
        return out

    @classmethod
    def from_dict(cls, d):
        coef = d.get("coefficients", {})
        bpr = d.get("bpr", {})
        truth = d.get("ground_truth_intercepts")
        return cls(
            population=int(d["population"]),
            distributions=d["distributions"],
            coefficients=Coefficients(**coef) if coef else Coefficients(),
            capacity=float(d.get("capacity", 5000.0)),
            bpr_alpha=float(bpr.get("alpha", 0.15)),
            bpr_beta=float(bpr.get("beta", 4.0)),
            damping=float(d.get("damping", 0.5)),
            benchmark=ModeShare.from_dict(d["benchmark"]) if "benchmark" in d else ModeShare(np.array(BENCHMARK_SHARES)),
            seed=int(d.get("seed", 0)),
            congested_modes=tuple(d.get("congested_modes", ("car",))),
            ground_truth=InterceptConfig.from_dict(truth, id="truth") if truth else None,
            name=d.get("name", ""),
        )


def load_scenario(path=None):
    """Load a scenario JSON file; ``None`` or ``"urbansim10k"`` gives the bundled one."""
    if path is None or str(path) == BUNDLED_SCENARIO:
        text = resources.files("modecal").joinpath("data", f"{BUNDLED_SCENARIO}.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return Scenario.from_dict(json.loads(text))


def utility(intercept, cost=0.0, time=0.0, transfers=0.0, coefficients=Coefficients(0.0, 0.0, 0.0)):
    """Systematic utility of one mode: intercept plus linear cost/time/transfer terms."""
    c = coefficients
    return intercept + c.cost * cost + c.time * time + c.transfers * transfers


def choice_probabilities(utilities):
    """Softmax over the last axis, with max-subtraction for overflow safety."""
    v = np.asarray(utilities, dtype=float)
    v = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(v)
    return e / e.sum(axis=-1, keepdims=True)


def congestion_update(base_time, volume, capacity, alpha=0.15, beta=4.0):
    """BPR volume-delay: ``base_time * (1 + alpha * (volume / capacity) ** beta)``."""
    if capacity <= 0:
        raise ValueError("capacity must be > 0")
    return base_time * (1.0 + alpha * (volume / capacity) ** beta)


def l1_objective(result, benchmark):
    """Sum of absolute share differences, in percentage points."""
    if tuple(result.names) != tuple(benchmark.names):
        raise ValueError("mode sets differ between result and benchmark")
    return float(np.abs(result.share - benchmark.share).sum())


@dataclass(frozen=True)
class SimulationResult:
    final_share: ModeShare
    share_trajectory: np.ndarray  # (iterations, modes), percent
    loss_trajectory: np.ndarray   # (iterations,), L1 percent
    iterations_run: int

    @property
    def final_loss(self):
        return float(self.loss_trajectory[-1])


def iteration_uniforms(seed, iteration, n):
    """Uniform draws for one iteration; agent ``a`` uses entry ``a``.

    Streams depend only on ``(seed, iteration)`` so runs with different budgets
    share their common prefix exactly.
    """
    return np.random.default_rng([int(seed), int(iteration)]).random(n)


class Simulator:
    """Stepwise replanning loop, so callers can inspect or stop between iterations."""

    def __init__(self, scenario, config, seed):
        values = config.values if isinstance(config, InterceptConfig) else np.asarray(config, dtype=float)
        if values.shape != (N_MODES,):
            raise ValueError(f"need {N_MODES} intercepts")
        if not np.all(np.isfinite(values)):
            raise ValueError("intercepts must be finite")
        self.scenario = scenario
        self.intercepts = np.ascontiguousarray(values, dtype=float)
        self.seed = int(seed)
        self._attrs = scenario.attributes
        self._coef = scenario.coefficients.as_array()
        self._mask = scenario.congested_mask
        self.time_scale = np.ones(N_MODES)
        self.shares = []
        self.losses = []

    @property
    def iteration(self):
        return len(self.shares)

    def step(self):
        sc = self.scenario
        u = iteration_uniforms(self.seed, self.iteration, sc.population)
        counts = kernels.choose_modes(self.intercepts, self._coef, self._attrs.cost, self._attrs.time,
                                      self._attrs.transfers, self.time_scale, u)
        share = ModeShare.from_counts(counts)
        self.shares.append(share.share)
        self.losses.append(l1_objective(share, sc.benchmark))
        volume = float(counts[self._mask].sum())
        target = congestion_update(1.0, volume, sc.capacity, sc.bpr_alpha, sc.bpr_beta)
        damped = (1.0 - sc.damping) * self.time_scale + sc.damping * target
        self.time_scale = np.where(self._mask, damped, 1.0)
        return self.losses[-1]

    def run(self, n):
        for _ in range(n):
            self.step()
        return self

    def result(self):
        if not self.shares:
            raise RuntimeError("no iterations run")
        traj = np.array(self.shares)
        return SimulationResult(ModeShare(traj[-1]), traj, np.array(self.losses), len(self.shares))


def run_simulation(scenario, config, budget, seed):
    """Run ``budget`` replanning iterations and return the trajectories."""
    if int(budget) < 1:
        raise ValueError("budget must be >= 1")
    return Simulator(scenario, config, seed).run(int(budget)).result()


def write_share_csv(result, path):
    """Per-iteration shares as ``iteration,mode,share`` rows (1-based iterations)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "mode", "share"])
        for it, row in enumerate(result.share_trajectory, start=1):
            for mode, s in zip(MODES, row):
                w.writerow([it, mode, f"{s:.6f}"])


def load_intercepts(path):
    with open(path) as fh:
        return InterceptConfig.from_dict(json.load(fh), id="cli")
