"""Closed-form influence functions for every estimator in the package.

An :class:`InfluenceEvaluator` is an evaluable map (observation, theta,
truth) -> R^m, vectorized over datasets via :meth:`InfluenceEvaluator.batch`.
Every evaluator here is centered: its mean under the model at theta is zero,
which the test suite checks by Monte Carlo.

Truth-side integrals use closed forms where available; the survival-model
quantities fall back to Simpson quadrature (adaptive for pointwise calls,
dense cumulative tables for batch calls).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _quad, models

__all__ = [
    "InfluenceEvaluator", "zero_influence",
    "variance_influence", "mean_influence", "two_sample_shift_influence",
    "least_squares_influence",
    "symmetrized_cdf_influence", "centered_cdf_influence",
    "cox_score_residual_batch", "cox_efficient_score_influence",
    "cox_pl_theta_influence", "cox_baseline_cdf_influence",
    "cox_submodel_value", "cox_submodel_influence",
    "cox_baseline_full_influence", "precompute_baseline_c",
]


@dataclass(frozen=True)
class InfluenceEvaluator:
    """Vectorized influence function with declared output dimension."""

    fn: Callable[[models.Dataset, np.ndarray, models.ModelTruth], np.ndarray]
    m: int
    label: str

    def batch(self, data: models.Dataset, theta, truth: models.ModelTruth) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.asarray(self.fn(data, theta, truth), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        if out.shape != (data.n, self.m):
            raise ValueError(f"influence {self.label!r} returned shape {out.shape}")
        return out

    def __call__(self, obs, theta, truth: models.ModelTruth) -> np.ndarray:
        return self.batch(_obs_dataset(truth.model.schema, obs), theta, truth)[0]


def _obs_dataset(schema: str, obs) -> models.Dataset:
    if schema == "location":
        return models.Dataset("location", x=np.atleast_1d(np.asarray(obs, dtype=float)))
    if schema == "regression":
        y, z = obs
        return models.Dataset("regression", y=[float(y)],
                              z=np.atleast_2d(np.asarray(z, dtype=float)))
    if schema == "two_sample":
        y, z = obs
        return models.Dataset("two_sample", y=[float(y)], z=[float(z)])
    if schema == "survival":
        z, t = obs
        return models.Dataset("survival", z=[float(z)], t=[float(t)])
    raise models.ModelError(f"unknown schema {schema!r}")


def zero_influence(k: int) -> InfluenceEvaluator:
    return InfluenceEvaluator(fn=lambda d, th, tr: np.zeros((d.n, k)), m=k, label="zero")


# ---------------------------------------------------------------------------
# location / regression / two-sample

def variance_influence() -> InfluenceEvaluator:
    """(x - theta)^2 - sigma^2, the influence of the theta-given variance."""
    def fn(data, theta, truth):
        return (data.x - theta[0]) ** 2 - truth.sigma2
    return InfluenceEvaluator(fn=fn, m=1, label="variance")


def mean_influence() -> InfluenceEvaluator:
    """x - theta, the influence of the sample mean."""
    return InfluenceEvaluator(fn=lambda d, th, tr: d.x - th[0], m=1, label="mean")


def two_sample_shift_influence() -> InfluenceEvaluator:
    """(z - y) - theta, the influence of the mean-shift estimator."""
    return InfluenceEvaluator(fn=lambda d, th, tr: (d.z - d.y) - th[0], m=1,
                              label="two-sample-shift")


def least_squares_influence(k: int) -> InfluenceEvaluator:
    """(E ZZ')^{-1} z (y - theta' z); the gram matrix comes from the truth."""
    def fn(data, theta, truth):
        graminv = np.linalg.inv(truth.gram())
        eps = data.y - data.z @ theta
        return (data.z @ graminv.T) * eps[:, None]
    return InfluenceEvaluator(fn=fn, m=k, label="least-squares")


def symmetrized_cdf_influence(t: float) -> InfluenceEvaluator:
    """(1(e <= t) + 1(-e <= t)) / 2 - G(t) with e the reconstructed error.

    The efficient influence for estimating a symmetric error CDF at t.
    """
    def fn(data, theta, truth):
        if data.schema == "location":
            e = data.x - theta[0]
        else:
            e = data.y - data.z @ theta
        Gt = truth.G(t)
        return 0.5 * ((e <= t).astype(float) + (-e <= t).astype(float)) - Gt
    return InfluenceEvaluator(fn=fn, m=1, label=f"symmetrized-cdf@{t:g}")


def plain_cdf_influence(t: float, link: str = "location") -> InfluenceEvaluator:
    """1(e <= t) - G(t) for the reconstructed error, no constraint correction."""
    def fn(data, theta, truth):
        from .estimators import link_residuals
        e = link_residuals(data, theta, link)
        return (e <= t).astype(float) - truth.G(t)
    return InfluenceEvaluator(fn=fn, m=1, label=f"plain-cdf@{t:g}")


def two_sample_pooled_cdf_influence(t: float) -> InfluenceEvaluator:
    """(1(y <= t) + 1(z - theta <= t)) / 2 - G(t), the pooled ECDF influence."""
    def fn(data, theta, truth):
        a = (data.y <= t).astype(float)
        b = (data.z - theta[0] <= t).astype(float)
        return 0.5 * (a + b) - truth.G(t)
    return InfluenceEvaluator(fn=fn, m=1, label=f"two-sample-cdf@{t:g}")


def h_moment_influence(h_name: str, h, link: str) -> InfluenceEvaluator:
    """h(e) - E h(eps) for the linkage residual e; the mean is closed-form.

    Supports the named moments: square (E = law variance), cube and identity
    (E = 0 by symmetry).
    """
    def fn(data, theta, truth):
        from .estimators import link_residuals
        e = link_residuals(data, theta, link)
        kappa = truth.law.variance if h_name == "square" else 0.0
        return np.asarray(h(e), dtype=float) - kappa
    return InfluenceEvaluator(fn=fn, m=1, label=f"moment[{h_name},{link}]")


def centered_cdf_influence(t: float) -> InfluenceEvaluator:
    """1(x - theta <= t) - G(t) - E[e 1(e <= t)] / sigma^2 * (x - theta).

    The efficient influence for the error CDF at t under the zero-mean
    constraint; the truncated moment is in closed form per error family.
    """
    def fn(data, theta, truth):
        e = data.x - theta[0]
        mt = truth.trunc_first_moment(t)
        return (e <= t).astype(float) - truth.G(t) - (mt / truth.sigma2) * e
    return InfluenceEvaluator(fn=fn, m=1, label=f"centered-cdf@{t:g}")


# ---------------------------------------------------------------------------
# survival model

def cox_score_residual_batch(data: models.Dataset, theta, truth: models.ModelTruth) -> np.ndarray:
    """Efficient score: z(1 - e^{theta z} L(t)) - (S1/S0)(t) + e^{theta z} int_0^t S1/S0 dL.

    Vectorized over the dataset; the trailing integral is in closed form.
    """
    th = float(np.atleast_1d(np.asarray(theta, dtype=float))[0])
    z, t = data.z, data.t
    score = z * (1.0 - np.exp(th * z) * truth.cum_hazard(t))
    correction = truth.s1(t, th) / truth.s0(t, th) \
        - np.exp(th * z) * truth.s_ratio_integral(t, th)
    return score - correction


def cox_efficient_score_influence() -> InfluenceEvaluator:
    return InfluenceEvaluator(
        fn=lambda d, th, tr: cox_score_residual_batch(d, th, tr),
        m=1, label="cox-efficient-score")


def cox_pl_theta_influence() -> InfluenceEvaluator:
    """Istar^{-1} times the efficient score; requires a precomputed Istar."""
    def fn(data, theta, truth):
        if truth.istar is None:
            raise models.ModelError("precompute_istar must run before using this influence")
        return cox_score_residual_batch(data, theta, truth) / truth.istar
    return InfluenceEvaluator(fn=fn, m=1, label="cox-pl-theta")


def cox_baseline_cdf_influence(s: float) -> InfluenceEvaluator:
    """Gbar(s) {1(t <= s)/S0(t) - e^{theta z} int_0^{s^t} dLambda/S0}.

    The influence of the theta-given baseline CDF estimators at s <= T0.
    """
    def fn(data, theta, truth):
        if s > truth.T0 + 1e-12:
            raise models.ModelError("functional point beyond the window T0")
        th = float(theta[0])
        z, t = data.z, data.t
        tc = np.minimum(t, s)
        lam_tilde = truth.cum_hazard_over_s0_batch(tc, th)
        hit = np.where(t <= s, 1.0 / truth.s0(t, th), 0.0)
        return truth.baseline_sf(s) * (hit - np.exp(th * z) * lam_tilde)
    return InfluenceEvaluator(fn=fn, m=1, label=f"cox-baseline-cdf@{s:g}")


def cox_submodel_value(obs, theta, truth: models.ModelTruth, h: Callable,
                       tol: float = 1e-9) -> float:
    """Influence of the theta-given functional int h dG for centered h on [0, T0].

    With N(u) = Gbar(u) h(u) - int_u^{T0} h dG, the value at (z, t) is
    N(t)/S0(t) - e^{theta z} int_0^{t^T0} N(u)/S0(u) dLambda(u); adaptive
    Simpson throughout (pointwise path).  Raises if h is not centered under
    the baseline law (checked by quadrature to 1e-6).
    """
    th = float(np.atleast_1d(np.asarray(theta, dtype=float))[0])
    z, t = float(obs[0]), float(obs[1])
    T0 = truth.T0
    g = truth.baseline_pdf
    _check_centered(truth, h)

    def tail(u):
        return _quad.adaptive_simpson(lambda v: h(v) * g(v), u, T0, tol=tol / 10)

    def N(u):
        if u > T0:
            return 0.0
        return truth.baseline_sf(u) * h(u) - tail(u)

    lam0 = truth.model.lambda0
    outer = _quad.adaptive_simpson(lambda u: N(u) * lam0 / truth.s0(u, th),
                                   0.0, min(t, T0), tol=tol)
    lead = N(t) / truth.s0(t, th) if t <= T0 else 0.0
    return lead - math.exp(th * z) * outer


def _check_centered(truth: models.ModelTruth, h: Callable) -> None:
    total = _quad.adaptive_simpson(lambda v: h(v) * truth.baseline_pdf(v),
                                   0.0, truth.T0, tol=1e-8)
    if abs(total) > 1e-6:
        raise models.ModelError(f"h is not centered under G: int h dG = {total:.3g}")


def cox_submodel_influence(h: Callable) -> InfluenceEvaluator:
    """Batch variant of :func:`cox_submodel_value` using dense Simpson tables.

    h must accept numpy arrays.  Table accuracy is ~1e-4 worst case when h
    has jumps (ample for Monte Carlo averaging); use the pointwise function
    for tight tolerances.
    """
    def fn(data, theta, truth):
        _check_centered(truth, h)
        th = float(theta[0])
        T0 = truth.T0
        lam0 = truth.model.lambda0
        grid_u = np.linspace(0.0, T0, 8193)
        hg = lambda u: np.asarray(h(u), dtype=float) * truth.baseline_pdf(u)
        Jg = _quad.cumulative_at(hg, grid_u, max_panel=T0 / 8192.0)
        Jtot = Jg[-1]

        def n_of(u):
            Ju = np.interp(u, grid_u, Jg)
            return truth.baseline_sf(u) * np.asarray(h(u), dtype=float) - (Jtot - Ju)

        t, z = data.t, data.z
        tc = np.minimum(t, T0)
        K = _quad.cumulative_at(lambda u: n_of(u) * lam0 / truth.s0(u, th),
                                tc, max_panel=T0 / 4096.0)
        lead = np.where(t <= T0, n_of(tc) / truth.s0(tc, th), 0.0)
        return lead - np.exp(th * z) * K

    return InfluenceEvaluator(fn=fn, m=1, label="cox-submodel-h")


def precompute_baseline_c(truth: models.ModelTruth, s: float,
                          mc_n: int = 10 ** 6, seed=7) -> float:
    """MC estimate of c(s) = -E[psi_s score'] cached on the truth object."""
    from .plugin import estimate_c_matrix

    key = ("baseline-cdf", round(float(s), 12))
    cached = truth.cached_c(key)
    if cached is not None:
        return cached
    est = estimate_c_matrix(truth, cox_baseline_cdf_influence(s),
                            np.array([truth.model.theta0]), mc_n=mc_n, seed=seed)
    value = float(est.value[0, 0])
    truth.cache_c(key, value)
    return value


def cox_baseline_full_influence(s: float, c: float | None = None) -> InfluenceEvaluator:
    """Baseline-CDF influence plus c(s) Istar^{-1} times the efficient score.

    The influence of the full plug-in (theta estimated by partial
    likelihood).  `c` defaults to the value cached by
    :func:`precompute_baseline_c`; Istar must be precomputed.
    """
    base = cox_baseline_cdf_influence(s)

    def fn(data, theta, truth):
        cc = c
        if cc is None:
            cc = truth.cached_c(("baseline-cdf", round(float(s), 12)))
            if cc is None:
                raise models.ModelError("run precompute_baseline_c first")
        if truth.istar is None:
            raise models.ModelError("precompute_istar must run first")
        psi = base.batch(data, theta, truth)[:, 0]
        l1s = cox_score_residual_batch(data, theta, truth)
        return psi + cc / truth.istar * l1s

    return InfluenceEvaluator(fn=fn, m=1, label=f"cox-baseline-full@{s:g}")
