"""Tree-structured Parzen estimator over a bounded box.

Observed configs at one budget are split into a good and a bad set; each set
gets a product-of-1-D-Gaussians KDE truncated to the box, and new configs are
the candidates (drawn from the good density) with the largest ``l(x)/g(x)``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import kernels


class ModelNotReady(Exception):
    """Too few observations to split into good and bad sets."""


@dataclass(frozen=True)
class Kde:
    support: np.ndarray   # (n, d)
    bandwidth: np.ndarray  # (d,)
    lower: np.ndarray
    upper: np.ndarray
    log_norm: np.ndarray  # (n,) per-support log normaliser incl. truncation mass

    @property
    def n(self):
        return self.support.shape[0]


def scott_bandwidth(points):
    n, d = points.shape
    sd = points.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    return sd * n ** (-1.0 / (d + 4))


def fit_kde(points, bounds, h_min=1e-3):
    """Scott's-rule product KDE, bandwidths floored at ``h_min`` of each range."""
    lower, upper = (bounds.lower, bounds.upper) if hasattr(bounds, "lower") else bounds
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    if np.any(pts < lower) or np.any(pts > upper):
        raise ValueError("support points must lie inside the bounds")
    bw = np.maximum(scott_bandwidth(pts), h_min * (upper - lower))
    bw = np.maximum(bw, 1e-12)
    mass = ndtr((upper - pts) / bw) - ndtr((lower - pts) / bw)
    log_norm = np.sum(np.log(bw) + np.log(np.maximum(mass, 1e-300)), axis=1)
    return Kde(np.ascontiguousarray(pts), bw, lower, upper, log_norm)


def log_density(kde, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(x < kde.lower) or np.any(x > kde.upper):
        raise ValueError("query point outside the KDE bounds")
    return kernels.kde_logpdf(np.ascontiguousarray(x), kde.support, kde.bandwidth, kde.log_norm)


def density(kde, x):
    """Density at one point (or each row of a 2-D array)."""
    x = np.asarray(x, dtype=float)
    out = np.exp(log_density(kde, x))
    return float(out[0]) if x.ndim == 1 else out


def sample_kde(kde, n, rng, bandwidth_factor=1.0):
    """Pick support points uniformly and perturb each coordinate by its kernel, clipped to the box."""
    idx = rng.integers(0, kde.n, size=n)
    noise = rng.standard_normal((n, kde.support.shape[1])) * kde.bandwidth * bandwidth_factor
    return np.clip(kde.support[idx] + noise, kde.lower, kde.upper)


def split_observations(trials, gamma=0.15, min_points=9):
    """Sort ``(config, loss)`` pairs by loss; the best ``max(min_points, ceil(gamma n))`` are good.

    The sort is stable, so equal losses keep their input order. Raises
    :class:`ModelNotReady` when fewer than ``2 * min_points`` trials exist.
    """
    trials = list(trials)
    n = len(trials)
    if n < 2 * min_points:
        raise ModelNotReady(f"{n} observations, need {2 * min_points}")
    order = sorted(range(n), key=lambda i: trials[i][1])
    n_good = max(min_points, math.ceil(gamma * n - 1e-9))
    good = [trials[i] for i in order[:n_good]]
    bad = [trials[i] for i in order[n_good:]]
    return good, bad


@dataclass(frozen=True)
class KdePair:
    good: Kde
    bad: Kde
    budget: int
    gamma: float
    y_star: float


def fit_pair(trials, bounds, budget=0, gamma=0.15, min_points=9, h_min=1e-3):
    good, bad = split_observations(trials, gamma, min_points)
    y_star = bad[0][1] if bad else good[-1][1]
    return KdePair(
        fit_kde(np.array([np.asarray(c, dtype=float) for c, _ in good]), bounds, h_min),
        fit_kde(np.array([np.asarray(c, dtype=float) for c, _ in bad]), bounds, h_min),
        budget, gamma, y_star,
    )


def propose(pair, n_candidates=64, rng=None, bandwidth_factor=1.0):
    """Draw candidates from the good density; return the one maximising ``l/g``."""
    rng = np.random.default_rng() if rng is None else rng
    cand = sample_kde(pair.good, n_candidates, rng, bandwidth_factor)
    if n_candidates == 1:
        return cand[0]
    score = log_density(pair.good, cand) - log_density(pair.bad, cand)
    return cand[int(np.argmax(score))]


class TpeProposer:
    def __init__(self, lower, upper, gamma=0.15, min_points=9, n_candidates=64, h_min=1e-3,
                 bandwidth_factor=1.0):
        self.bounds = (np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
        self.gamma = gamma
        self.min_points = min_points
        self.n_candidates = n_candidates
        self.h_min = h_min
        self.bandwidth_factor = bandwidth_factor

    def ready(self, n):
        return n >= 2 * self.min_points

    def fit(self, points, losses, budget=0):
        return fit_pair(list(zip(points, losses)), self.bounds, budget, self.gamma, self.min_points, self.h_min)

    def propose(self, points, losses, rng, key=None):
        pair = self.fit(points, losses)
        return propose(pair, self.n_candidates, rng, self.bandwidth_factor)
