"""Hot kernels: numba-jitted loops with a vectorized numpy fallback.

The jitted path is the default.  Set ``PLUGEST_NO_NUMBA=1`` before import to
force the numpy path (same results, useful for debugging and for the
benchmark in benchmarks/bench_kernels.py).  Both implementations of every
kernel are importable; ``KERNELS`` maps kernel names to (active, numpy) pairs.

All kernels take survival times sorted ascending; risk sets use T_j >= T_i
inclusively, with tied times sharing the risk set of the first index of the
tie block.
"""
from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("PLUGEST_NO_NUMBA", "").strip() not in ("", "0")

if not _FORCE_NUMPY:
    try:
        from numba import njit
        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy implementations

def _tie_block_starts(t_sorted: np.ndarray) -> np.ndarray:
    # index of the first element of each tie block, per observation
    return np.searchsorted(t_sorted, t_sorted, side="left")


def cox_pl_derivs_np(theta: float, z: np.ndarray, t_sorted: np.ndarray):
    """Log partial likelihood, its score and curvature at scalar theta.

    z must be ordered to match t_sorted.  Returns (loglik, score, curv).
    """
    w = np.exp(theta * z)
    first = _tie_block_starts(t_sorted)
    s0 = np.cumsum(w[::-1])[::-1]
    s1 = np.cumsum((z * w)[::-1])[::-1]
    s2 = np.cumsum((z * z * w)[::-1])[::-1]
    r0 = s0[first]
    r1 = s1[first]
    r2 = s2[first]
    ll = float(np.sum(theta * z - np.log(r0)))
    ratio = r1 / r0
    score = float(np.sum(z - ratio))
    curv = float(-np.sum(r2 / r0 - ratio * ratio))
    return ll, score, curv


def cox_baseline_steps_np(theta: float, z: np.ndarray, t_sorted: np.ndarray):
    """Per-event inverse weighted risk sums 1 / sum_{T_j >= T_i} exp(theta z_j)."""
    w = np.exp(theta * z)
    first = _tie_block_starts(t_sorted)
    r0 = np.cumsum(w[::-1])[::-1][first]
    return 1.0 / r0


def inverse_risk_counts_np(t_sorted: np.ndarray) -> np.ndarray:
    """1 / #{j : T_j >= T_i} per observation, times sorted ascending."""
    first = _tie_block_starts(t_sorted)
    return 1.0 / (t_sorted.size - first)


def step_cdf_many_np(locs: np.ndarray, cum: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Right-continuous step CDF at many query points.

    cum is the length n+1 padded cumulative weight array (cum[0] == 0).
    """
    return cum[np.searchsorted(locs, queries, side="right")]


# ---------------------------------------------------------------------------
# numba implementations (same contracts, explicit loops)

if HAVE_NUMBA:

    @njit(cache=True)
    def _cox_pl_derivs_nb(theta, z, t_sorted):
        n = z.size
        ll = 0.0
        score = 0.0
        curv = 0.0
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        i = n - 1
        while i >= 0:
            lo = i
            while lo > 0 and t_sorted[lo - 1] == t_sorted[i]:
                lo -= 1
            for j in range(lo, i + 1):
                w = np.exp(theta * z[j])
                s0 += w
                s1 += z[j] * w
                s2 += z[j] * z[j] * w
            for j in range(lo, i + 1):
                ratio = s1 / s0
                ll += theta * z[j] - np.log(s0)
                score += z[j] - ratio
                curv -= s2 / s0 - ratio * ratio
            i = lo - 1
        return ll, score, curv

    @njit(cache=True)
    def _cox_baseline_steps_nb(theta, z, t_sorted):
        n = z.size
        out = np.empty(n)
        s0 = 0.0
        i = n - 1
        while i >= 0:
            lo = i
            while lo > 0 and t_sorted[lo - 1] == t_sorted[i]:
                lo -= 1
            for j in range(lo, i + 1):
                s0 += np.exp(theta * z[j])
            for j in range(lo, i + 1):
                out[j] = 1.0 / s0
            i = lo - 1
        return out

    @njit(cache=True)
    def _inverse_risk_counts_nb(t_sorted):
        n = t_sorted.size
        out = np.empty(n)
        i = n - 1
        while i >= 0:
            lo = i
            while lo > 0 and t_sorted[lo - 1] == t_sorted[i]:
                lo -= 1
            inv = 1.0 / (n - lo)
            for j in range(lo, i + 1):
                out[j] = inv
            i = lo - 1
        return out

    @njit(cache=True)
    def _step_cdf_many_nb(locs, cum, queries):
        out = np.empty(queries.size)
        for i in range(queries.size):
            out[i] = cum[np.searchsorted(locs, queries[i], side="right")]
        return out

    cox_pl_derivs = _cox_pl_derivs_nb
    cox_baseline_steps = _cox_baseline_steps_nb
    inverse_risk_counts = _inverse_risk_counts_nb
    step_cdf_many = _step_cdf_many_nb
else:
    cox_pl_derivs = cox_pl_derivs_np
    cox_baseline_steps = cox_baseline_steps_np
    inverse_risk_counts = inverse_risk_counts_np
    step_cdf_many = step_cdf_many_np


KERNELS = {
    "cox_pl_derivs": (cox_pl_derivs, cox_pl_derivs_np),
    "cox_baseline_steps": (cox_baseline_steps, cox_baseline_steps_np),
    "inverse_risk_counts": (inverse_risk_counts, inverse_risk_counts_np),
    "step_cdf_many": (step_cdf_many, step_cdf_many_np),
}
