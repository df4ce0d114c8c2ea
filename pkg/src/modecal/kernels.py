"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names (``choose_modes``, ``kde_logpdf``, ``cholesky_jvp``) are bound
to the numba variant unless ``MODECAL_NO_NUMBA`` is set. Both variants are
always importable under their ``*_nb`` / ``*_np`` names so they can be
compared against each other.
"""
import math

import numpy as np

from ._accel import HAVE_NUMBA, jit, pick

# ---------------------------------------------------------------------------
# Multinomial logit choice sampling


def choose_modes_np(intercepts, coef, cost, time, transfers, time_scale, u):
    """Sample one mode per agent by inverse-CDF over softmax probabilities.

    ``coef`` is ``(beta_cost, beta_time, beta_transfers)``; ``time_scale``
    multiplies each mode's travel time (congestion). Returns per-mode counts.
    """
    v = intercepts + coef[0] * cost + coef[1] * (time * time_scale) + coef[2] * transfers
    v = v - v.max(axis=1, keepdims=True)
    cum = np.cumsum(np.exp(v), axis=1)
    target = u * cum[:, -1]
    idx = (cum <= target[:, None]).sum(axis=1)
    np.minimum(idx, cost.shape[1] - 1, out=idx)
    return np.bincount(idx, minlength=cost.shape[1]).astype(np.int64)


@jit
def choose_modes_nb(intercepts, coef, cost, time, transfers, time_scale, u):
    n, k = cost.shape
    counts = np.zeros(k, dtype=np.int64)
    v = np.empty(k)
    for a in range(n):
        vmax = -np.inf
        for j in range(k):
            x = (intercepts[j] + coef[0] * cost[a, j]
                 + coef[1] * (time[a, j] * time_scale[j]) + coef[2] * transfers[a, j])
            v[j] = x
            if x > vmax:
                vmax = x
        total = 0.0
        for j in range(k):
            total += math.exp(v[j] - vmax)
            v[j] = total
        target = u[a] * total
        idx = 0
        for j in range(k):
            if v[j] <= target:
                idx += 1
        if idx > k - 1:
            idx = k - 1
        counts[idx] += 1
    return counts


# ---------------------------------------------------------------------------
# Product truncated-Gaussian KDE


def kde_logpdf_np(x, support, bw, log_norm):
    """Log of the mean product-Gaussian kernel over ``support``.

    ``log_norm[i]`` is ``sum_k log(bw_k * Z_ik)`` where ``Z_ik`` is the kernel
    mass of support point ``i`` inside the box along dimension ``k``.
    """
    out = np.empty(x.shape[0])
    n = support.shape[0]
    chunk = max(1, 2_000_000 // max(1, n * support.shape[1]))
    for s in range(0, x.shape[0], chunk):
        z = (x[s:s + chunk, None, :] - support[None, :, :]) / bw
        logk = -0.5 * np.sum(z * z, axis=2) - 0.5 * support.shape[1] * math.log(2 * math.pi) - log_norm
        m = logk.max(axis=1)
        out[s:s + chunk] = m + np.log(np.exp(logk - m[:, None]).sum(axis=1)) - math.log(n)
    return out


@jit
def kde_logpdf_nb(x, support, bw, log_norm):
    m, d = x.shape
    n = support.shape[0]
    out = np.empty(m)
    c = -0.5 * d * math.log(2 * math.pi)
    logk = np.empty(n)
    for r in range(m):
        best = -np.inf
        for i in range(n):
            acc = 0.0
            for j in range(d):
                z = (x[r, j] - support[i, j]) / bw[j]
                acc += z * z
            val = -0.5 * acc + c - log_norm[i]
            logk[i] = val
            if val > best:
                best = val
        total = 0.0
        for i in range(n):
            total += math.exp(logk[i] - best)
        out[r] = best + math.log(total) - math.log(n)
    return out


# ---------------------------------------------------------------------------
# Forward-mode derivative of the Cholesky factorisation


def cholesky_jvp_np(L, dA):
    """Directional derivatives of ``chol(A)`` for a stack of tangents ``dA``.

    Uses the identity ``dL = L * Phi(L^-1 dA L^-T)`` with ``Phi`` taking the
    lower triangle and halving the diagonal.
    """
    Linv = np.linalg.inv(L)
    M = Linv @ dA @ Linv.T
    M = np.tril(M)
    idx = np.arange(L.shape[0])
    M[..., idx, idx] *= 0.5
    return L @ M


@jit
def cholesky_jvp_nb(L, dA):
    p, q, _ = dA.shape
    dL = np.zeros((p, q, q))
    for t in range(p):
        for j in range(q):
            s = dA[t, j, j]
            for k in range(j):
                s -= 2.0 * L[j, k] * dL[t, j, k]
            dL[t, j, j] = s / (2.0 * L[j, j])
            for i in range(j + 1, q):
                s = dA[t, i, j]
                for k in range(j):
                    s -= dL[t, i, k] * L[j, k] + L[i, k] * dL[t, j, k]
                s -= L[i, j] * dL[t, j, j]
                dL[t, i, j] = s / L[j, j]
    return dL


choose_modes = pick(choose_modes_nb, choose_modes_np)
kde_logpdf = pick(kde_logpdf_nb, kde_logpdf_np)
cholesky_jvp = pick(cholesky_jvp_nb, cholesky_jvp_np)

__all__ = [
    "HAVE_NUMBA",
    "choose_modes", "choose_modes_np", "choose_modes_nb",
    "kde_logpdf", "kde_logpdf_np", "kde_logpdf_nb",
    "cholesky_jvp", "cholesky_jvp_np", "cholesky_jvp_nb",
]
