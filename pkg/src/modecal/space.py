"""Bounded search space over the eight mode-choice intercepts."""
from dataclasses import dataclass, field

import numpy as np

MODES = (
    "bike",
    "car",
    "drive-transit",
    "ride-hail",
    "ride-hail-pooled",
    "ride-hail-transit",
    "walk",
    "walk-transit",
)
N_MODES = len(MODES)


@dataclass(frozen=True)
class ParameterSpace:
    """Closed box ``[lower_k, upper_k]`` per mode, in utility units."""

    names: tuple
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        names = tuple(self.names)
        if lower.shape != (len(names),) or upper.shape != (len(names),):
            raise ValueError("bounds must have one entry per dimension")
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        if np.any(lower > upper):
            bad = [names[i] for i in np.flatnonzero(lower > upper)]
            raise ValueError(f"lower bound exceeds upper bound for {bad}")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_bounds(cls, bounds):
        """Build from ``{mode: (lower, upper)}`` covering all eight modes."""
        missing = set(MODES) - set(bounds)
        extra = set(bounds) - set(MODES)
        if missing or extra:
            raise ValueError(f"space must name exactly the modes {MODES}; missing={sorted(missing)} extra={sorted(extra)}")
        lo = [float(bounds[m][0]) for m in MODES]
        hi = [float(bounds[m][1]) for m in MODES]
        return cls(MODES, np.array(lo), np.array(hi))

    @classmethod
    def uniform(cls, lower, upper):
        return cls(MODES, np.full(N_MODES, float(lower)), np.full(N_MODES, float(upper)))

    @property
    def dim(self):
        return len(self.names)

    @property
    def width(self):
        return self.upper - self.lower

    def is_mode_space(self):
        return self.names == MODES

    def to_dict(self):
        return {n: [float(lo), float(hi)] for n, lo, hi in zip(self.names, self.lower, self.upper)}


@dataclass(frozen=True)
class InterceptConfig:
    """One candidate intercept vector; ``values`` ordered like the space's names."""

    values: np.ndarray
    id: str = ""
    names: tuple = field(default=MODES)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.names),):
            raise ValueError(f"expected {len(self.names)} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_dict(self):
        return {n: float(x) for n, x in zip(self.names, self.values)}

    @classmethod
    def from_dict(cls, d, id=""):
        return cls(np.array([float(d[m]) for m in MODES]), id=id)


@dataclass(frozen=True)
class Violation:
    name: str
    value: float
    lower: float
    upper: float

    def __str__(self):
        return f"{self.name}={self.value:g} outside [{self.lower:g}, {self.upper:g}]"


def sample_uniform(space, rng, id=""):
    """Draw each coordinate uniformly from its closed interval."""
    u = rng.random(space.dim)
    values = space.lower + u * space.width
    return InterceptConfig(np.clip(values, space.lower, space.upper), id=id, names=space.names)


def centered_space(center, relative_halfwidth, absolute_floor=0.0):
    """Box of half-width ``max(|c_k| * relative_halfwidth, absolute_floor)`` around ``center``.

    ``center`` may be an :class:`InterceptConfig` or a plain array of values.
    """
    if relative_halfwidth <= 0:
        raise ValueError("relative_halfwidth must be positive")
    values = center.values if isinstance(center, InterceptConfig) else np.asarray(center, dtype=float)
    names = center.names if isinstance(center, InterceptConfig) else MODES
    half = np.maximum(np.abs(values) * relative_halfwidth, absolute_floor)
    return ParameterSpace(names, values - half, values + half)


def validate(config, space):
    """Return the list of out-of-bounds coordinates (empty when the config is valid)."""
    v = config.values if isinstance(config, InterceptConfig) else np.asarray(config, dtype=float)
    out = []
    for name, x, lo, hi in zip(space.names, v, space.lower, space.upper):
        if not (lo <= x <= hi):
            out.append(Violation(name, float(x), float(lo), float(hi)))
    return out


def parse_space(spec, center=None):
    """Parse the ``space`` section of a run configuration.

    Accepted forms::

        {"bounds": {"car": [-20, 20], ...}}      # per-mode pairs
        {"uniform": [-20, 20]}                    # same interval for all modes
        {"center": {...} | "truth", "pct": 20, "floor": 1.0}

    ``center`` supplies the values when the section says ``"center": "truth"``.
    """
    if "bounds" in spec:
        return ParameterSpace.from_bounds(spec["bounds"])
    if "uniform" in spec:
        lo, hi = spec["uniform"]
        return ParameterSpace.uniform(lo, hi)
    if "center" in spec:
        c = spec["center"]
        if c == "truth":
            if center is None:
                raise ValueError("space centered on 'truth' but the scenario has no ground-truth intercepts")
            c = center
        if isinstance(c, dict):
            c = InterceptConfig.from_dict(c)
        pct = float(spec.get("pct", 20.0))
        return centered_space(c, pct / 100.0, float(spec.get("floor", 1.0)))
    raise ValueError("space must define 'bounds', 'uniform' or 'center'")
