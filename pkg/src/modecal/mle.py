"""Maximum-likelihood estimation of multinomial logit coefficients.

Utilities are ``asc_j + X_tj . beta`` with one alternative-specific constant per
alternative except the reference, which is pinned to zero.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .sim import choice_probabilities


class EstimationError(ValueError):
    pass


class SeparationError(EstimationError):
    """Raised when the likelihood has no finite maximiser (estimates diverge)."""


@dataclass(frozen=True)
class ChoiceObservation:
    chosen: np.ndarray      # one-hot over alternatives
    attributes: np.ndarray  # (alternatives, attributes)

    def __post_init__(self):
        c = np.asarray(self.chosen)
        if c.ndim != 1 or np.count_nonzero(c) != 1 or not np.all((c == 0) | (c == 1)):
            raise ValueError("exactly one alternative must be chosen")


def _attr_matrix(obs):
    a = np.asarray(obs.attributes, dtype=float)
    J = len(obs.chosen)
    return np.zeros((J, 0)) if a.size == 0 else a.reshape(J, -1)


@dataclass(frozen=True)
class ChoiceData:
    chosen: np.ndarray      # (n,) index of the chosen alternative
    X: np.ndarray           # (n, J, P)
    alternatives: tuple = ()
    attribute_names: tuple = ()

    @classmethod
    def from_observations(cls, observations, alternatives=(), attribute_names=()):
        observations = list(observations)
        if not observations:
            raise EstimationError("no observations")
        chosen = np.array([int(np.argmax(o.chosen)) for o in observations])
        X = np.stack([_attr_matrix(o) for o in observations])
        return cls(chosen, X, tuple(alternatives), tuple(attribute_names))

    @property
    def n_alternatives(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class MleResult:
    names: tuple
    coef: np.ndarray
    stderr: np.ndarray
    loglik: float
    loglik_zero: float
    iterations: int
    grad_norm: float

    def as_dict(self):
        return {n: {"estimate": float(c), "stderr": float(s)}
                for n, c, s in zip(self.names, self.coef, self.stderr)}


def _design(data, reference):
    """Stack per-alternative design rows: ASC dummies then attributes."""
    n, J, P = data.X.shape
    asc = np.zeros((J, J - 1))
    cols = [j for j in range(J) if j != reference]
    for c, j in enumerate(cols):
        asc[j, c] = 1.0
    Z = np.concatenate([np.broadcast_to(asc, (n, J, J - 1)), data.X], axis=2)
    return Z, cols


def _names(data, reference, cols):
    alts = data.alternatives or tuple(f"alt{j}" for j in range(data.n_alternatives))
    attrs = data.attribute_names or tuple(f"x{p}" for p in range(data.X.shape[2]))
    return tuple(f"asc[{alts[j]}]" for j in cols) + tuple(attrs)


def log_likelihood(theta, Z, chosen):
    v = Z @ theta
    return float(np.sum(v[np.arange(len(chosen)), chosen] - logsumexp(v, axis=1)))


def estimate_beta(data, reference=0, tol=1e-8, max_iter=100, divergence=30.0):
    """Newton-Raphson maximisation of the logit log-likelihood.

    ``data`` is a :class:`ChoiceData` or a list of :class:`ChoiceObservation`.
    Raises :class:`SeparationError` when coefficients run off to infinity.
    """
    if not isinstance(data, ChoiceData):
        data = ChoiceData.from_observations(data)
    n, J, P = data.X.shape
    if n == 0:
        raise EstimationError("no observations")
    if J < 2:
        raise EstimationError("need at least two alternatives")
    counts = np.bincount(data.chosen, minlength=J)
    if np.any(counts == 0):
        never = [int(j) for j in np.flatnonzero(counts == 0)]
        raise SeparationError(f"alternatives {never} are never chosen; their constants diverge to -inf")

    Z, cols = _design(data, reference)
    idx = np.arange(n)
    theta = np.zeros(Z.shape[2])
    ll0 = ll = log_likelihood(theta, Z, data.chosen)
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        p = choice_probabilities(Z @ theta)
        zbar = np.einsum("nj,njk->nk", p, Z)
        grad = (Z[idx, data.chosen] - zbar).sum(axis=0)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            break
        D = Z - zbar[:, None, :]
        H = -np.einsum("nj,nja,njb->ab", p, D, D)
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError as exc:
            raise SeparationError("singular information matrix; coefficients are not identified") from exc
        t = 1.0
        while True:
            cand = theta + t * step
            ll_new = log_likelihood(cand, Z, data.chosen)
            if ll_new >= ll - 1e-12 or t < 1e-10:
                break
            t *= 0.5
        theta, ll = cand, ll_new
        if np.max(np.abs(theta)) > divergence:
            raise SeparationError(
                f"estimates diverge (max |coef| = {np.max(np.abs(theta)):.1f}); "
                "an attribute separates the choices")
    else:
        raise EstimationError(f"no convergence after {max_iter} iterations (|grad| = {grad_norm:.3g})")

    p = choice_probabilities(Z @ theta)
    zbar = np.einsum("nj,njk->nk", p, Z)
    D = Z - zbar[:, None, :]
    info = np.einsum("nj,nja,njb->ab", p, D, D)
    cov = np.linalg.inv(info)
    return MleResult(_names(data, reference, cols), theta, np.sqrt(np.diag(cov)), ll, ll0, it, grad_norm)


def read_choices_csv(path):
    """Read long-format choices: ``obs,alt,chosen,<attribute columns...>``.

    Every observation must list the same alternatives.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EstimationError(f"{path}: no rows")
    attr_names = [c for c in rows[0] if c not in ("obs", "alt", "chosen")]
    alts = []
    by_obs = {}
    for r in rows:
        if r["alt"] not in alts:
            alts.append(r["alt"])
        by_obs.setdefault(r["obs"], {})[r["alt"]] = r
    chosen, X = [], []
    for obs, group in by_obs.items():
        if set(group) != set(alts):
            raise EstimationError(f"observation {obs} does not list every alternative")
        picks = [j for j, a in enumerate(alts) if int(group[a]["chosen"]) == 1]
        if len(picks) != 1:
            raise EstimationError(f"observation {obs} must choose exactly one alternative")
        chosen.append(picks[0])
        X.append([[float(group[a][c]) for c in attr_names] for a in alts])
    X = np.array(X, dtype=float).reshape(len(chosen), len(alts), len(attr_names))
    return ChoiceData(np.array(chosen), X, tuple(alts), tuple(attr_names))
