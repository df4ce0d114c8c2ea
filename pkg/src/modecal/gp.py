"""Gaussian-process regression, expected improvement and batch (q-EI) ascent.

Losses are minimised, so improvement is ``f_star - f(x)``. The GP has a
constant prior mean and an anisotropic squared-exponential kernel whose
hyperparameters are fixed by the caller.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.stats import norm

from . import kernels


class GpError(ValueError):
    pass


@dataclass(frozen=True)
class SquaredExponential:
    signal_variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0) or self.signal_variance <= 0:
            raise GpError("kernel parameters must be positive")
        object.__setattr__(self, "lengthscales", ls)

    def __call__(self, A, B):
        A = np.atleast_2d(A) / self.lengthscales
        B = np.atleast_2d(B) / self.lengthscales
        d2 = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
        return self.signal_variance * np.exp(-0.5 * np.maximum(d2, 0.0))

    def grad_first(self, a, B):
        """``d k(a, b_j) / d a`` for each row of ``B``; shape ``(len(B), d)``."""
        B = np.atleast_2d(B)
        k = self(a[None, :], B)[0]
        return -k[:, None] * (a[None, :] - B) / self.lengthscales ** 2


@dataclass(frozen=True)
class GpState:
    X: np.ndarray
    y: np.ndarray
    prior_mean: float
    kernel: SquaredExponential
    noise: float
    chol: np.ndarray
    alpha: np.ndarray

    @property
    def dim(self):
        return self.X.shape[1]


def gp_fit(X, y, kernel, noise=1e-6, prior_mean=None):
    """Condition the GP on ``(X, y)``; ``prior_mean=None`` uses the sample mean."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) == 0:
        raise GpError("cannot fit a GP to zero observations")
    if X.shape[0] != len(y):
        raise GpError(f"{X.shape[0]} inputs but {len(y)} targets")
    if noise <= 0:
        raise GpError("noise jitter must be positive")
    mu0 = float(np.mean(y)) if prior_mean is None else float(prior_mean)
    K = kernel(X, X) + noise * np.eye(len(y))
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(K).min()
        raise GpError(f"kernel matrix not positive definite after jitter (smallest eigenvalue {lam:.3e})") from None
    alpha = cho_solve((L, True), y - mu0)
    return GpState(X, y, mu0, kernel, float(noise), L, alpha)


def joint_posterior(state, Xq):
    """Posterior mean vector and covariance of the latent f at the rows of ``Xq``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Kqx = state.kernel(Xq, state.X)
    m = state.prior_mean + Kqx @ state.alpha
    V = solve_triangular(state.chol, Kqx.T, lower=True)
    S = state.kernel(Xq, Xq) - V.T @ V
    return m, 0.5 * (S + S.T)


def gp_posterior(state, x):
    m, S = joint_posterior(state, np.asarray(x, dtype=float)[None, :])
    return float(m[0]), float(np.sqrt(max(S[0, 0], 0.0)))


def confidence_interval(mean, std, n=1, z=1.96):
    """``mean -/+ z * std / sqrt(n)``."""
    if n < 1 or std < 0:
        raise ValueError("need n >= 1 and std >= 0")
    half = z * std / np.sqrt(n)
    return mean - half, mean + half


def expected_improvement(mean, std, f_star):
    """Closed-form EI for minimisation; vectorised over ``mean``/``std``."""
    scalar = np.ndim(mean) == 0 and np.ndim(std) == 0
    mean, std = np.broadcast_arrays(np.atleast_1d(np.asarray(mean, dtype=float)),
                                    np.atleast_1d(np.asarray(std, dtype=float)))
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    delta = f_star - mean
    out = np.maximum(delta, 0.0)
    pos = std > 0
    if np.any(pos):
        d, s = delta[pos], std[pos]
        # d Phi(d/s) + s phi(d/s), written to avoid cancellation for large |d|
        out[pos] = np.maximum(d, 0.0) + s * norm.pdf(d / s) - np.abs(d) * norm.cdf(-np.abs(d) / s)
    out = np.maximum(out, 0.0)
    return float(out[0]) if scalar else out


def _batch_factor(state, batch, jitter):
    m, S = joint_posterior(state, batch)
    q = len(m)
    S = S + jitter * state.kernel.signal_variance * np.eye(q)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(S).min()
        raise GpError(f"joint posterior covariance not positive definite (smallest eigenvalue {lam:.3e})") from None
    return m, L


def qei_monte_carlo(state, batch, f_star, n_samples=10_000, rng=None, Z=None, jitter=1e-10):
    """Monte Carlo q-EI of ``batch`` (q x d) with its standard error.

    Pass ``Z`` (n x q standard normals) to reuse common random numbers.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    m, L = _batch_factor(state, batch, jitter)
    if Z is None:
        rng = np.random.default_rng() if rng is None else rng
        Z = rng.standard_normal((n_samples, len(m)))
    Z = np.atleast_2d(Z)
    Y = m[None, :] + Z @ L.T
    imp = np.maximum(f_star - Y.min(axis=1), 0.0)
    se = imp.std(ddof=1) / np.sqrt(len(imp)) if len(imp) > 1 else np.inf
    return float(imp.mean()), float(se)


def _batch_tangents(state, batch):
    """Mean and covariance derivatives w.r.t. every batch coordinate.

    Returns ``dm`` (P, q) and ``dS`` (P, q, q) with ``P = q * d`` ordered
    point-major (``p = i * d + k``).
    """
    q, d = batch.shape
    kern = state.kernel
    Kqx = kern(batch, state.X)
    A = cho_solve((state.chol, True), Kqx.T)  # (n, q)
    Kqq = kern(batch, batch)
    dm = np.zeros((q * d, q))
    dS = np.zeros((q * d, q, q))
    for i in range(q):
        g = kern.grad_first(batch[i], state.X)            # (n, d)
        cq = -Kqq[i][:, None] * (batch[i][None, :] - batch) / kern.lengthscales ** 2  # (q, d)
        for k in range(d):
            p = i * d + k
            dm[p, i] = g[:, k] @ state.alpha
            dK = np.zeros((q, q))
            dK[i, :] = cq[:, k]
            dK[:, i] = cq[:, k]
            dK[i, i] = 0.0
            E = np.zeros((q, q))
            E[i, :] = g[:, k] @ A
            dS[p] = dK - E - E.T
    return dm, dS


def qei_gradient(state, batch, f_star, Z, jitter=1e-10, chunk=8192):
    """Pathwise gradient of ``(f_star - min(m + C Z))^+`` w.r.t. the batch.

    ``Z`` is a single draw (q,) or a stack (n, q); the stack average is the
    unbiased q-EI gradient estimate. The argmin tie-break is lowest index.
    Returns an array shaped like ``batch``.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    q, d = batch.shape
    m, L = _batch_factor(state, batch, jitter)
    dm, dS = _batch_tangents(state, batch)
    dL = kernels.cholesky_jvp(np.ascontiguousarray(L), np.ascontiguousarray(dS))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    total = np.zeros(q * d)
    for s in range(0, len(Z), chunk):
        z = Z[s:s + chunk]
        Y = m[None, :] + z @ L.T
        j = np.argmin(Y, axis=1)
        hit = Y[np.arange(len(z)), j] < f_star
        if not np.any(hit):
            continue
        z, j = z[hit], j[hit]
        # d/dx of Y_j = dm[:, j] + dL[:, j, :] @ z
        dY = dm[:, j] + np.einsum("pnk,nk->pn", dL[:, j, :], z)
        total -= dY.sum(axis=1)
    return (total / len(Z)).reshape(q, d)


def multistart_sga(state, q, bounds, restarts=4, steps=50, rng=None, a=1.0, A=10.0,
                   n_samples=256, n_eval=4096, f_star=None):
    """Multi-start stochastic gradient ascent on q-EI.

    Each restart draws a uniform q-batch inside ``bounds`` (a pair of arrays or
    anything with ``lower``/``upper``), then steps ``x <- clip(x + a/(A+t) g)``.
    The final batches are ranked by q-EI on common random numbers.
    """
    rng = np.random.default_rng() if rng is None else rng
    lower, upper = (bounds.lower, bounds.upper) if hasattr(bounds, "lower") else bounds
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    f_star = float(np.min(state.y)) if f_star is None else f_star
    finals = []
    for _ in range(restarts):
        x = lower + rng.random((q, len(lower))) * (upper - lower)
        x = np.clip(x, lower, upper)
        for t in range(steps):
            g = qei_gradient(state, x, f_star, rng.standard_normal((n_samples, q)))
            x = np.clip(x + a / (A + t) * g, lower, upper)
        finals.append(x)
    if len(finals) == 1:
        return finals[0]
    Z = rng.standard_normal((n_eval, q))
    scores = []
    for x in finals:
        try:
            scores.append(qei_monte_carlo(state, x, f_star, Z=Z)[0])
        except GpError:
            scores.append(-np.inf)
    return finals[int(np.argmax(scores))]


class GpProposer:
    """Config proposals from a GP on normalised inputs and standardised losses."""

    def __init__(self, lower, upper, lengthscale=0.3, noise=1e-2, q=1, restarts=4, steps=30,
                 a=1.0, A=10.0, n_samples=128, min_points=9):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.kernel = SquaredExponential(1.0, np.full(len(self.lower), float(lengthscale)))
        self.noise = noise
        self.q = q
        self.restarts = restarts
        self.steps = steps
        self.a = a
        self.A = A
        self.n_samples = n_samples
        self.min_points = min_points
        self._queue = []
        self._queue_key = None

    def ready(self, n):
        return n >= self.min_points

    def propose(self, points, losses, rng, key=None):
        """Next config (raw coordinates); ``key`` identifies the dataset version."""
        if key is not None and key == self._queue_key and self._queue:
            return self._queue.pop(0)
        span = self.upper - self.lower
        U = (np.asarray(points) - self.lower) / np.where(span > 0, span, 1.0)
        y = np.asarray(losses, dtype=float)
        sd = y.std() if y.std() > 0 else 1.0
        ys = (y - y.mean()) / sd
        state = gp_fit(U, ys, self.kernel, self.noise, prior_mean=0.0)
        batch = multistart_sga(state, self.q, (np.zeros(len(span)), np.ones(len(span))),
                               restarts=self.restarts, steps=self.steps, rng=rng, a=self.a, A=self.A,
                               n_samples=self.n_samples, n_eval=1024, f_star=float(ys.min()))
        out = [self.lower + row * span for row in batch]
        self._queue = out[1:]
        self._queue_key = key
        return out[0]
