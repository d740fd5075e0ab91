"""Concrete estimators: theta estimators and theta-given submodel estimators.

Submodel estimators take the parameter as an argument and estimate a
functional of the error / baseline distribution; they are plugged into the
combiners in :mod:`plugest.plugin`.  Distribution-valued estimators return
:class:`~plugest.distkit.SignedStepDistribution` values.

All functions are pure in (data, theta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _accel, distkit, models
from .distkit import EvalGrid, SignedStepDistribution, from_points
from .plugin import Estimate, SubmodelEstimator, ThetaEstimator

__all__ = [
    "EstimationError", "PartialLikelihoodResult", "link_residuals",
    "sample_mean", "mean_shift_between_samples", "least_squares_fit",
    "cox_partial_likelihood_fit",
    "variance_about", "moment_of_link", "residual_ecdf",
    "symmetrized_residual_ecdf", "weighted_centered_ecdf", "constrained_ecdf",
    "pooled_shift_ecdf", "cox_baseline_exp_hazard", "cox_baseline_product_limit",
    "nelson_aalen_at",
    "mean_estimator", "two_sample_shift_estimator", "least_squares_estimator",
    "cox_pl_estimator", "half_sample",
    "variance_submodel", "h_moment_submodel", "residual_ecdf_submodel",
    "sym_ecdf_submodel", "weighted_centered_ecdf_submodel",
    "constrained_ecdf_submodel", "two_sample_ecdf_submodel",
    "cox_exp_hazard_submodel", "cox_product_limit_submodel",
    "H_SQUARE", "H_CUBE", "H_IDENTITY",
]


class EstimationError(RuntimeError):
    """An estimator could not produce a value on this dataset."""


# ---------------------------------------------------------------------------
# linkage maps

def link_residuals(data: models.Dataset, theta, link: str) -> np.ndarray:
    """Reconstructed errors t_theta(X_i) for the supported linkage maps.

    location:      x - theta
    regression:    y - theta' z
    standardized:  (y - alpha - beta' z) / sigma, theta = (alpha, beta..., sigma)
    accelerated:   exp(-theta' z) y
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if link == "location":
        _need(data, "location")
        return data.x - theta[0]
    if link == "regression":
        _need(data, "regression")
        return data.y - data.z @ theta
    if link == "standardized":
        _need(data, "regression")
        sigma = theta[-1]
        if sigma <= 0:
            raise EstimationError("standardized link needs sigma > 0")
        return (data.y - theta[0] - data.z @ theta[1:-1]) / sigma
    if link == "accelerated":
        _need(data, "regression")
        return np.exp(-(data.z @ theta)) * data.y
    raise EstimationError(f"unknown link {link!r}")


def _need(data: models.Dataset, schema: str) -> None:
    if data.schema != schema:
        raise EstimationError(f"expected a {schema} dataset, got {data.schema}")


H_SQUARE = ("square", lambda e: e * e)
H_CUBE = ("cube", lambda e: e ** 3)
H_IDENTITY = ("identity", lambda e: e)


# ---------------------------------------------------------------------------
# theta estimators

def sample_mean(data: models.Dataset) -> float:
    _need(data, "location")
    return float(np.mean(data.x))


def mean_shift_between_samples(data: models.Dataset) -> float:
    """zbar - ybar, the linear shift estimator in the two-sample model."""
    _need(data, "two_sample")
    return float(np.mean(data.z) - np.mean(data.y))


def least_squares_fit(data: models.Dataset) -> np.ndarray:
    """(sum z z')^{-1} sum z y; raises on a singular gram matrix."""
    _need(data, "regression")
    gram = data.z.T @ data.z
    rhs = data.z.T @ data.y
    try:
        out = _solve_small(gram, rhs)
    except EstimationError as exc:
        raise EstimationError("singular covariate gram matrix") from exc
    return out


@dataclass(frozen=True)
class PartialLikelihoodResult:
    theta_hat: float
    iterations: int
    final_gradient: float
    converged: bool


_PL_DIVERGE_BOUND = 20.0


def cox_partial_likelihood_fit(data: models.Dataset, tol: float = 1e-10,
                               max_iter: int = 50) -> PartialLikelihoodResult:
    """Newton maximizer of the log partial likelihood, with step halving.

    Starts at theta = 0; converged means |score| <= tol at an interior
    point.  A monotone likelihood (events ordered by covariate) has no
    interior maximizer: the score also vanishes along theta -> +-inf, so any
    estimate beyond +-20 is reported as diverging (converged=False).
    """
    _need(data, "survival")
    z, t = data.z, data.t
    if np.all(z == z[0]):
        raise EstimationError("no covariate variation: partial likelihood is flat")
    order = np.argsort(t, kind="stable")
    zs = np.ascontiguousarray(z[order])
    ts = np.ascontiguousarray(t[order])

    theta = 0.0
    ll, score, curv = _accel.cox_pl_derivs(theta, zs, ts)
    it = 0
    while abs(score) > tol and it < max_iter:
        it += 1
        if curv >= -1e-12:
            return PartialLikelihoodResult(theta, it, score, False)
        step = -score / curv
        new_theta = theta + step
        new = _accel.cox_pl_derivs(new_theta, zs, ts)
        halvings = 0
        # relative band: near the maximum the true gain is below the rounding
        # noise of the summed log likelihood, so an absolute test would stall
        band = 1e-10 * (1.0 + abs(ll))
        while new[0] < ll - band and halvings < 60:
            step *= 0.5
            new_theta = theta + step
            new = _accel.cox_pl_derivs(new_theta, zs, ts)
            halvings += 1
        theta = new_theta
        ll, score, curv = new
        if abs(theta) > _PL_DIVERGE_BOUND:
            return PartialLikelihoodResult(theta, it, score, False)
    converged = bool(abs(score) <= tol and abs(theta) <= _PL_DIVERGE_BOUND)
    return PartialLikelihoodResult(theta, it, score, converged)


# ---------------------------------------------------------------------------
# submodel estimators (theta given)

def variance_about(data: models.Dataset, theta) -> float:
    """Mean squared deviation about the given center: n^{-1} sum (x_i - theta)^2."""
    _need(data, "location")
    th = float(np.atleast_1d(np.asarray(theta, dtype=float))[0])
    return float(np.mean((data.x - th) ** 2))


def moment_of_link(data: models.Dataset, theta, h: Callable[[np.ndarray], np.ndarray],
                   link: str = "location") -> float:
    """Plug-in moment n^{-1} sum h(t_theta(x_i)) of the reconstructed errors."""
    return float(np.mean(h(link_residuals(data, theta, link))))


def residual_ecdf(data: models.Dataset, theta, link: str = "location") -> SignedStepDistribution:
    """Plain empirical CDF of the reconstructed errors (weights 1/n)."""
    e = link_residuals(data, theta, link)
    return from_points(e, np.full(e.size, 1.0 / e.size))


def symmetrized_residual_ecdf(data: models.Dataset, theta) -> SignedStepDistribution:
    """Symmetrized empirical CDF: the empirical CDF of the pooled points {+-e_i}.

    Equals (G_n(x) + 1 - G_n((-x)-)) / 2 with G_n the residual empirical CDF.
    """
    if data.schema == "location":
        e = link_residuals(data, theta, "location")
    else:
        e = link_residuals(data, theta, "regression")
    pooled = np.concatenate([e, -e])
    return from_points(pooled, np.full(pooled.size, 0.5 / e.size))


def weighted_centered_ecdf(data: models.Dataset, theta) -> SignedStepDistribution:
    """Weighted empirical of x_i - theta with weights enforcing a zero mean.

    Atom weights n^{-1} {1 - (x_i - theta)(xbar - theta) / S^2(theta)} with
    S^2(theta) = n^{-1} sum (x_i - theta)^2.  A signed measure: far-tail
    weights can be negative.  Its first moment is 0 by construction.
    """
    _need(data, "location")
    th = float(np.atleast_1d(np.asarray(theta, dtype=float))[0])
    e = data.x - th
    s2 = float(np.mean(e * e))
    if s2 <= 0.0:
        raise EstimationError("all observations equal the given center")
    w = (1.0 - e * float(np.mean(e)) / s2) / e.size
    return from_points(e, w)


def constrained_ecdf(data: models.Dataset, theta, gamma: Callable[[np.ndarray], np.ndarray],
                     link: str = "location") -> SignedStepDistribution:
    """Weighted empirical of the errors under the constraints int gamma dG = 0.

    Atom weights n^{-1} {1 - gbar' M^{-1} gamma(e_i)} with M = n^{-1} sum
    gamma gamma' and gbar the sample mean of gamma.  Degenerate directions
    (gamma spanning the constant function, making the constraint infeasible)
    are rejected.
    """
    e = link_residuals(data, theta, link)
    g = np.asarray(gamma(e), dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] != e.size:
        raise EstimationError("gamma must return one row per observation")
    M = g.T @ g / e.size
    gbar = g.mean(axis=0)
    v = _solve_small(M, gbar)
    proj = float(gbar @ v)
    if proj >= 1.0 - 1e-10:
        raise EstimationError(
            "gamma spans the constant direction: int gamma dG = 0 is infeasible")
    w = (1.0 - g @ v) / e.size
    return from_points(e, w)


def pooled_shift_ecdf(data: models.Dataset, theta) -> SignedStepDistribution:
    """Two-sample pooled empirical: atoms at y_i and z_i - theta, each 1/(2n)."""
    _need(data, "two_sample")
    th = float(np.atleast_1d(np.asarray(theta, dtype=float))[0])
    pooled = np.concatenate([data.y, data.z - th])
    return from_points(pooled, np.full(pooled.size, 0.5 / data.n))


def _cox_sorted(data: models.Dataset, theta):
    _need(data, "survival")
    th = float(np.atleast_1d(np.asarray(theta, dtype=float))[0])
    order = np.argsort(data.t, kind="stable")
    return th, np.ascontiguousarray(data.z[order]), np.ascontiguousarray(data.t[order])


def cox_baseline_exp_hazard(data: models.Dataset, theta, t0: float) -> SignedStepDistribution:
    """Baseline CDF via the exponentiated cumulative hazard.

    G(s) = 1 - exp(-sum_{T_i <= s} 1 / sum_{T_j >= T_i} e^{theta z_j}),
    restricted to the window [0, t0].  Monotone, values in [0, 1).
    """
    th, zs, ts = _cox_sorted(data, theta)
    d = _accel.cox_baseline_steps(th, zs, ts)
    vals = -np.expm1(-np.cumsum(d))
    return _window_steps(ts, vals, t0)


def cox_baseline_product_limit(data: models.Dataset, theta, t0: float) -> SignedStepDistribution:
    """Baseline CDF via the product-limit form.

    G(s) = 1 - prod_{T_i <= s} {1 - 1 / sum_{T_j >= T_i} e^{theta z_j}},
    restricted to the window [0, t0].
    """
    th, zs, ts = _cox_sorted(data, theta)
    d = _accel.cox_baseline_steps(th, zs, ts)
    vals = 1.0 - np.cumprod(1.0 - d)
    return _window_steps(ts, vals, t0)


def _window_steps(ts: np.ndarray, vals: np.ndarray, t0: float) -> SignedStepDistribution:
    if t0 <= 0:
        raise EstimationError("window end must be positive")
    mask = ts <= t0
    if not np.any(mask):
        # no events inside the window: the estimate is identically zero there
        return from_points([t0], [0.0])
    inc = np.diff(np.concatenate(([0.0], vals[mask])))
    return from_points(ts[mask], inc)


def nelson_aalen_at(data: models.Dataset, s: float) -> float:
    """Cumulative sum of inverse (unweighted) risk-set sizes up to s."""
    _need(data, "survival")
    ts = np.sort(data.t, kind="stable")
    inv = _accel.inverse_risk_counts(ts)
    return float(inv[ts <= s].sum())


# ---------------------------------------------------------------------------
# small dense solve (l <= 3 in practice)

def _solve_small(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting and a hard pivot threshold."""
    M = np.array(M, dtype=float)
    b = np.array(b, dtype=float)
    l = M.shape[0]
    if M.shape != (l, l) or b.shape != (l,):
        raise EstimationError("bad shapes for linear solve")
    floor = 1e-12 * max(1.0, float(np.max(np.abs(M))))
    for col in range(l):
        piv = col + int(np.argmax(np.abs(M[col:, col])))
        if abs(M[piv, col]) < floor:
            raise EstimationError("singular matrix in constrained weighting")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        inv = 1.0 / M[col, col]
        for row in range(col + 1, l):
            f = M[row, col] * inv
            M[row, col:] -= f * M[col, col:]
            b[row] -= f * b[col]
    out = np.zeros(l)
    for col in range(l - 1, -1, -1):
        out[col] = (b[col] - M[col, col + 1:] @ out[col + 1:]) / M[col, col]
    return out


# ---------------------------------------------------------------------------
# wrappers for the combiners

def mean_estimator() -> ThetaEstimator:
    from . import influence as _inf
    return ThetaEstimator(fn=lambda d: np.array([sample_mean(d)]), k=1,
                          influence=_inf.mean_influence(), label="sample-mean")


def two_sample_shift_estimator() -> ThetaEstimator:
    from . import influence as _inf
    return ThetaEstimator(fn=lambda d: np.array([mean_shift_between_samples(d)]), k=1,
                          influence=_inf.two_sample_shift_influence(), label="mean-shift")


def least_squares_estimator(k: int) -> ThetaEstimator:
    from . import influence as _inf
    return ThetaEstimator(fn=least_squares_fit, k=k,
                          influence=_inf.least_squares_influence(k), label="least-squares")


def cox_pl_estimator(tol: float = 1e-10, max_iter: int = 50) -> ThetaEstimator:
    from . import influence as _inf

    def fit(data):
        res = cox_partial_likelihood_fit(data, tol=tol, max_iter=max_iter)
        if not res.converged:
            raise EstimationError("partial likelihood maximization did not converge")
        return np.array([res.theta_hat])

    return ThetaEstimator(fn=fit, k=1, influence=_inf.cox_pl_theta_influence(),
                          label="cox-partial-likelihood")


def half_sample(base: ThetaEstimator) -> ThetaEstimator:
    """Deliberately degraded variant: fits theta on the first half only."""
    def fit(data):
        return base(data.take(slice(0, max(2, data.n // 2))))
    return ThetaEstimator(fn=fit, k=base.k, influence=None,
                          label=f"half-sample({base.label})")


def variance_submodel() -> SubmodelEstimator:
    return SubmodelEstimator(fn=lambda d, th: Estimate.of_scalar(variance_about(d, th)),
                             label="variance")


def h_moment_submodel(h_name: str, h: Callable, link: str) -> SubmodelEstimator:
    return SubmodelEstimator(
        fn=lambda d, th: Estimate.of_scalar(moment_of_link(d, th, h, link)),
        label=f"moment[{h_name},{link}]")


def residual_ecdf_submodel(link: str = "location",
                           grid: Optional[EvalGrid] = None) -> SubmodelEstimator:
    return SubmodelEstimator(
        fn=lambda d, th: Estimate.of_dist(residual_ecdf(d, th, link), grid),
        label=f"residual-ecdf[{link}]")


def sym_ecdf_submodel(grid: Optional[EvalGrid] = None) -> SubmodelEstimator:
    return SubmodelEstimator(
        fn=lambda d, th: Estimate.of_dist(symmetrized_residual_ecdf(d, th), grid),
        label="symmetrized-ecdf")


def weighted_centered_ecdf_submodel(grid: Optional[EvalGrid] = None) -> SubmodelEstimator:
    return SubmodelEstimator(
        fn=lambda d, th: Estimate.of_dist(weighted_centered_ecdf(d, th), grid),
        label="weighted-centered-ecdf")


def constrained_ecdf_submodel(gamma: Callable, link: str = "location",
                              grid: Optional[EvalGrid] = None) -> SubmodelEstimator:
    return SubmodelEstimator(
        fn=lambda d, th: Estimate.of_dist(constrained_ecdf(d, th, gamma, link), grid),
        label=f"constrained-ecdf[{link}]")


def two_sample_ecdf_submodel(grid: Optional[EvalGrid] = None) -> SubmodelEstimator:
    return SubmodelEstimator(
        fn=lambda d, th: Estimate.of_dist(pooled_shift_ecdf(d, th), grid),
        label="two-sample-ecdf")


def cox_exp_hazard_submodel(t0: float, grid: Optional[EvalGrid] = None) -> SubmodelEstimator:
    _check_window_grid(grid, t0)
    return SubmodelEstimator(
        fn=lambda d, th: Estimate.of_dist(cox_baseline_exp_hazard(d, th, t0), grid),
        label="cox-exp-hazard")


def cox_product_limit_submodel(t0: float, grid: Optional[EvalGrid] = None) -> SubmodelEstimator:
    _check_window_grid(grid, t0)
    return SubmodelEstimator(
        fn=lambda d, th: Estimate.of_dist(cox_baseline_product_limit(d, th, t0), grid),
        label="cox-product-limit")


def _check_window_grid(grid: Optional[EvalGrid], t0: float) -> None:
    if grid is not None and (grid.points[0] < 0 or grid.points[-1] > t0):
        raise EstimationError("evaluation grid must lie inside the window [0, T0]")
