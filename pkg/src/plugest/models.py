"""Observation models: samplers, scores and ground-truth quantities.

Four observation schemas are supported -- location, regression, two-sample
and survival -- plus a standardized-regression variant whose parameter
vector is (intercept, slope, scale).  Ground truth lives in
:class:`ModelTruth`, which exposes the analytic quantities influence
functions need (error CDF and density, truncated first moments, cumulative
hazard, weighted risk-set expectations) in closed form wherever the model
configuration allows it.

Estimators never consume knowledge of the covariate distribution; it enters
only through truth-side computations (gram matrices, risk-set expectations).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import ndtr, ndtri

from . import _quad

__all__ = [
    "ModelError", "ErrorLaw", "Dataset",
    "LocationModel", "SymRegressionModel", "StandardizedRegressionModel",
    "TwoSampleModel", "CoxModel", "ModelTruth",
    "sample", "score_theta", "make_truth", "cox_S", "cox_efficient_information",
]

_SYMMETRIC_FAMILIES = ("normal", "logistic", "laplace", "uniform")
_FAMILIES = _SYMMETRIC_FAMILIES + ("exponential",)


class ModelError(ValueError):
    """Bad model configuration or schema mismatch."""


# ---------------------------------------------------------------------------
# error laws

@dataclass(frozen=True)
class ErrorLaw:
    """A centered error distribution with closed-form CDF, density and moments.

    Symmetric families (all centered at 0):
      normal(scale=sigma), logistic(scale=s), laplace(scale=b),
      uniform on (-scale, scale).
    The exponential family (rate = 1/scale) is one-sided and only valid as a
    survival baseline; symmetric-only quantities raise for it.
    """

    family: str
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ModelError(f"unknown error family {self.family!r}")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ModelError("scale must be a positive finite real")

    @property
    def is_symmetric(self) -> bool:
        return self.family in _SYMMETRIC_FAMILIES

    @property
    def variance(self) -> float:
        s = self.scale
        return {
            "normal": s * s,
            "logistic": math.pi ** 2 * s * s / 3.0,
            "laplace": 2.0 * s * s,
            "uniform": s * s / 3.0,
            "exponential": s * s,
        }[self.family]

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        s = self.scale
        if self.family == "normal":
            out = ndtr(t / s)
        elif self.family == "logistic":
            out = 1.0 / (1.0 + np.exp(-t / s))
        elif self.family == "laplace":
            out = np.where(t <= 0, 0.5 * np.exp(np.minimum(t, 0) / s),
                           1.0 - 0.5 * np.exp(-np.maximum(t, 0) / s))
        elif self.family == "uniform":
            out = np.clip((t + s) / (2.0 * s), 0.0, 1.0)
        else:  # exponential on [0, inf), rate 1/scale
            out = np.where(t >= 0, -np.expm1(-np.maximum(t, 0) / s), 0.0)
        return out if out.ndim else float(out)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        s = self.scale
        if self.family == "normal":
            out = np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        elif self.family == "logistic":
            e = np.exp(-np.abs(t) / s)
            out = e / (s * (1.0 + e) ** 2)
        elif self.family == "laplace":
            out = np.exp(-np.abs(t) / s) / (2.0 * s)
        elif self.family == "uniform":
            out = np.where(np.abs(t) <= s, 1.0 / (2.0 * s), 0.0)
        else:
            out = np.where(t >= 0, np.exp(-np.maximum(t, 0) / s) / s, 0.0)
        return out if out.ndim else float(out)

    def location_score(self, x):
        """-g'/g at x, the score of a location shift.

        Zero almost everywhere for the uniform family (flat density); not
        defined for the exponential family.
        """
        x = np.asarray(x, dtype=float)
        s = self.scale
        if self.family == "normal":
            out = x / (s * s)
        elif self.family == "logistic":
            out = (2.0 * self.cdf(x) - 1.0) / s
        elif self.family == "laplace":
            out = np.sign(x) / s
        elif self.family == "uniform":
            out = np.zeros_like(x)
        else:
            raise ModelError("location score undefined for the exponential family")
        return out if out.ndim else float(out)

    def trunc_first_moment(self, t):
        """E[eps * 1(eps <= t)] in closed form.

        normal:   -sigma * phi(t/sigma)
        logistic: s * (F log F + (1-F) log(1-F)), F = G(t)
        laplace:  (t-b)/2 * e^{t/b} for t <= 0, -(t+b)/2 * e^{-t/b} for t > 0
        uniform:  (clip(t)^2 - a^2) / (4a)
        """
        t = np.asarray(t, dtype=float)
        s = self.scale
        if self.family == "normal":
            out = -s * np.exp(-0.5 * (t / s) ** 2) / math.sqrt(2.0 * math.pi)
        elif self.family == "logistic":
            F = np.asarray(self.cdf(t))
            out = s * (np.where(F > 0, F * np.log(np.maximum(F, 1e-300)), 0.0)
                       + np.where(F < 1, (1 - F) * np.log(np.maximum(1 - F, 1e-300)), 0.0))
        elif self.family == "laplace":
            out = np.where(t <= 0,
                           0.5 * (np.minimum(t, 0) - s) * np.exp(np.minimum(t, 0) / s),
                           -0.5 * (np.maximum(t, 0) + s) * np.exp(-np.maximum(t, 0) / s))
        elif self.family == "uniform":
            c = np.clip(t, -s, s)
            out = (c * c - s * s) / (4.0 * s)
        else:
            raise ModelError("truncated moment implemented for symmetric families only")
        return out if out.ndim else float(out)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        s = self.scale
        if self.family == "normal":
            out = s * ndtri(u)
        elif self.family == "logistic":
            out = s * (np.log(u) - np.log1p(-u))
        elif self.family == "laplace":
            out = np.where(u < 0.5, s * np.log(2.0 * u), -s * np.log(2.0 * (1.0 - u)))
        elif self.family == "uniform":
            out = s * (2.0 * u - 1.0)
        else:
            out = -s * np.log1p(-u)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        s = self.scale
        if self.family == "normal":
            return rng.normal(0.0, s, size)
        if self.family == "logistic":
            return rng.logistic(0.0, s, size)
        if self.family == "laplace":
            return rng.laplace(0.0, s, size)
        if self.family == "uniform":
            return rng.uniform(-s, s, size)
        return rng.exponential(s, size)


# ---------------------------------------------------------------------------
# datasets

_SCHEMAS = ("location", "regression", "two_sample", "survival")


@dataclass(frozen=True)
class Dataset:
    """Tagged i.i.d. sample for one observation schema.

    location:   x (n,)
    regression: y (n,), z (n, k)
    two_sample: y (n,), z (n,)
    survival:   z (n,), t (n,)
    """

    schema: str
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.schema not in _SCHEMAS:
            raise ModelError(f"unknown schema {self.schema!r}")
        arrays = {}
        for name in ("x", "y", "z", "t"):
            a = getattr(self, name)
            if a is not None:
                a = np.asarray(a, dtype=float)
                if not np.all(np.isfinite(a)):
                    raise ModelError(f"non-finite values in field {name!r}")
                a.setflags(write=False)
                object.__setattr__(self, name, a)
                arrays[name] = a
        required = {
            "location": ("x",),
            "regression": ("y", "z"),
            "two_sample": ("y", "z"),
            "survival": ("z", "t"),
        }[self.schema]
        if set(arrays) != set(required):
            raise ModelError(f"schema {self.schema!r} needs fields {required}")
        lengths = {a.shape[0] for a in arrays.values()}
        if len(lengths) != 1:
            raise ModelError("field lengths differ")
        if self.schema == "regression":
            if self.z.ndim != 2:
                raise ModelError("regression covariates must be 2-d (n, k)")
        elif any(a.ndim != 1 for a in arrays.values()):
            raise ModelError("fields must be 1-d for this schema")

    @property
    def n(self) -> int:
        for a in (self.x, self.y, self.z, self.t):
            if a is not None:
                return a.shape[0]
        raise ModelError("empty dataset")

    def take(self, idx) -> "Dataset":
        pick = lambda a: None if a is None else a[idx]
        return Dataset(self.schema, x=pick(self.x), y=pick(self.y),
                       z=pick(self.z), t=pick(self.t))

    def split_at(self, lam: int) -> tuple["Dataset", "Dataset"]:
        if not (1 <= lam <= self.n - 1):
            raise ModelError("split point must leave both parts nonempty")
        return self.take(slice(0, lam)), self.take(slice(lam, None))


# ---------------------------------------------------------------------------
# models

def _check_covariate_law(name: str) -> None:
    if name not in ("normal", "bernoulli"):
        raise ModelError(f"unsupported covariate law {name!r}")


@dataclass(frozen=True)
class LocationModel:
    """X = theta + eps with eps ~ law; F(t) = G(t - theta)."""

    theta0: float
    law: ErrorLaw

    def __post_init__(self) -> None:
        if not self.law.is_symmetric:
            raise ModelError("location model needs a symmetric error law")

    schema = "location"
    k = 1


@dataclass(frozen=True)
class SymRegressionModel:
    """Y = theta' Z + eps, eps symmetric about 0 and independent of Z."""

    theta0: np.ndarray
    law: ErrorLaw
    covariate_law: str = "normal"

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta0", np.atleast_1d(np.asarray(self.theta0, dtype=float)))
        if not self.law.is_symmetric:
            raise ModelError("regression errors must be symmetric here")
        _check_covariate_law(self.covariate_law)

    schema = "regression"

    @property
    def k(self) -> int:
        return self.theta0.size


@dataclass(frozen=True)
class StandardizedRegressionModel:
    """Y = alpha + beta Z + sigma eps with eps standardized (var 1).

    The parameter vector is theta = (alpha, beta, sigma); the linkage map
    (y - alpha - beta z) / sigma recovers eps.
    """

    alpha: float
    beta: float
    sigma: float
    law: ErrorLaw
    covariate_law: str = "normal"

    def __post_init__(self) -> None:
        if not self.law.is_symmetric:
            raise ModelError("standardized errors must be symmetric here")
        if abs(self.law.variance - 1.0) > 1e-8:
            raise ModelError("standardized model requires a unit-variance error law")
        if self.sigma <= 0:
            raise ModelError("sigma must be positive")
        _check_covariate_law(self.covariate_law)

    schema = "regression"
    k = 3

    @property
    def theta0(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.sigma])


@dataclass(frozen=True)
class TwoSampleModel:
    """X = (Y, Z) with Y and Z - theta i.i.d. with density g."""

    theta0: float
    law: ErrorLaw

    def __post_init__(self) -> None:
        if not self.law.is_symmetric:
            raise ModelError("two-sample errors must be symmetric here")

    schema = "two_sample"
    k = 1


@dataclass(frozen=True)
class CoxModel:
    """Proportional hazards: hazard e^{theta z} lambda0 at covariate z.

    Baseline is exponential(rate lambda0), so the baseline CDF is
    G(t) = 1 - e^{-lambda0 t} and the cumulative hazard is exactly
    Lambda(t) = lambda0 t = -log(1 - G(t)).  Covariates are Bernoulli(p)
    in {0, 1} (bounded, |Z| <= 1 a.s.).  Observation window [0, T0] must
    satisfy G(T0) <= 0.95 so that S0 stays bounded away from zero.
    No censoring: T is fully observed.
    """

    theta0: float
    lambda0: float = 1.0
    window_T0: float = 2.0
    covariate_p: float = 0.5

    def __post_init__(self) -> None:
        if self.lambda0 <= 0:
            raise ModelError("lambda0 must be positive")
        if not (0.0 <= self.covariate_p <= 1.0):
            raise ModelError("covariate_p must lie in [0, 1]")
        t_max = -math.log(0.05) / self.lambda0  # G(t_max) = 0.95
        if not (0 < self.window_T0 <= t_max):
            raise ModelError(
                f"window_T0 must lie in (0, {t_max:.6g}] so that G(T0) < 1 comfortably")

    schema = "survival"
    k = 1


Model = Union[LocationModel, SymRegressionModel, StandardizedRegressionModel,
              TwoSampleModel, CoxModel]


# ---------------------------------------------------------------------------
# sampling

def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _draw_covariates(rng, law: str, shape) -> np.ndarray:
    if law == "normal":
        return rng.normal(0.0, 1.0, shape)
    return (rng.random(shape) < 0.5).astype(float)


def sample(model: Model, n: int, seed, theta=None) -> Dataset:
    """n i.i.d. observations from the model, deterministic given the seed.

    `theta` overrides the model's true parameter (used for local drift); the
    nuisance part (error law, baseline) is unchanged.
    """
    if n < 2:
        raise ModelError("need n >= 2 observations")
    rng = _as_rng(seed)
    if isinstance(model, LocationModel):
        th = model.theta0 if theta is None else float(np.asarray(theta).reshape(()))
        return Dataset("location", x=th + model.law.sample(rng, n))
    if isinstance(model, SymRegressionModel):
        th = model.theta0 if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
        z = _draw_covariates(rng, model.covariate_law, (n, model.k))
        eps = model.law.sample(rng, n)
        return Dataset("regression", y=z @ th + eps, z=z)
    if isinstance(model, StandardizedRegressionModel):
        if theta is None:
            alpha, beta, sigma = model.alpha, model.beta, model.sigma
        else:
            alpha, beta, sigma = np.asarray(theta, dtype=float)
        z = _draw_covariates(rng, model.covariate_law, (n, 1))
        eps = model.law.sample(rng, n)
        return Dataset("regression", y=alpha + beta * z[:, 0] + sigma * eps, z=z)
    if isinstance(model, TwoSampleModel):
        th = model.theta0 if theta is None else float(np.asarray(theta).reshape(()))
        return Dataset("two_sample", y=model.law.sample(rng, n),
                       z=th + model.law.sample(rng, n))
    if isinstance(model, CoxModel):
        th = model.theta0 if theta is None else float(np.asarray(theta).reshape(()))
        z = (rng.random(n) < model.covariate_p).astype(float)
        # conditional on z, T ~ exponential with rate lambda0 * e^{theta z}
        t = rng.exponential(1.0 / (model.lambda0 * np.exp(th * z)))
        return Dataset("survival", z=z, t=t)
    raise ModelError(f"unknown model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# scores

def score_theta(model: Model, data: Dataset, theta) -> np.ndarray:
    """Per-observation parametric score for theta, shape (n, k).

    location:    -g'/g(x - theta)
    regression:  -z g'/g(y - theta' z)
    standardized (alpha, beta, sigma) with eps = (y - alpha - beta z)/sigma:
                 (l(eps), z l(eps), (eps l(eps) - 1)) / sigma, l = -g'/g
    two-sample:  -g'/g(z - theta)
    survival:    z (1 - e^{theta z} Lambda(t))
    """
    if data.schema != model.schema:
        raise ModelError(f"dataset schema {data.schema!r} does not match model")
    if isinstance(model, LocationModel):
        th = float(np.asarray(theta).reshape(()))
        return model.law.location_score(data.x - th)[:, None]
    if isinstance(model, StandardizedRegressionModel):
        alpha, beta, sigma = np.asarray(theta, dtype=float)
        zz = data.z[:, 0]
        eps = (data.y - alpha - beta * zz) / sigma
        l = model.law.location_score(eps)
        return np.column_stack([l / sigma, zz * l / sigma, (eps * l - 1.0) / sigma])
    if isinstance(model, SymRegressionModel):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        eps = data.y - data.z @ th
        return data.z * model.law.location_score(eps)[:, None]
    if isinstance(model, TwoSampleModel):
        th = float(np.asarray(theta).reshape(()))
        return model.law.location_score(data.z - th)[:, None]
    if isinstance(model, CoxModel):
        th = float(np.asarray(theta).reshape(()))
        lam = model.lambda0 * data.t
        return (data.z * (1.0 - np.exp(th * data.z) * lam))[:, None]
    raise ModelError(f"unknown model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# ground truth

class ModelTruth:
    """Ground-truth parameters plus derived analytic quantities.

    Immutable by convention after the optional precomputation calls
    (``precompute_istar``, ``cache_c``); the Monte Carlo harness only reads.
    """

    def __init__(self, model: Model):
        self.model = model
        self.istar: Optional[float] = None
        self.istar_se: Optional[float] = None
        self._c_cache: dict = {}
        if isinstance(model, CoxModel):
            self.sigma2 = None
        elif isinstance(model, StandardizedRegressionModel):
            self.sigma2 = model.law.variance  # standardized: 1 by construction
        else:
            self.sigma2 = model.law.variance

    # ---- error-law side (symmetric schemas)

    @property
    def law(self) -> ErrorLaw:
        law = getattr(self.model, "law", None)
        if law is None:
            raise ModelError("this model has no symmetric error law")
        return law

    def G(self, t):
        if isinstance(self.model, CoxModel):
            return self.baseline_cdf(t)
        return self.law.cdf(t)

    def g(self, t):
        if isinstance(self.model, CoxModel):
            return self.baseline_pdf(t)
        return self.law.pdf(t)

    def trunc_first_moment(self, t):
        return self.law.trunc_first_moment(t)

    def covariate_mean(self):
        cl = getattr(self.model, "covariate_law", None)
        if cl is None:
            raise ModelError("model has no covariate law")
        return 0.0 if cl == "normal" else 0.5

    def gram(self) -> np.ndarray:
        """E ZZ' for the regression covariate law (identity or Bernoulli 1/2)."""
        if not isinstance(self.model, SymRegressionModel):
            raise ModelError("gram matrix defined for the symmetric regression model")
        k = self.model.k
        if self.model.covariate_law == "normal":
            return np.eye(k)
        return np.full((k, k), 0.25) + 0.25 * np.eye(k)

    # ---- survival side

    def _cox(self) -> CoxModel:
        if not isinstance(self.model, CoxModel):
            raise ModelError("survival quantities defined for the Cox model only")
        return self.model

    @property
    def T0(self) -> float:
        return self._cox().window_T0

    def cum_hazard(self, t):
        """Lambda(t) = lambda0 t = -log(1 - G(t)), exactly."""
        out = self._cox().lambda0 * np.asarray(t, dtype=float)
        return out if out.ndim else float(out)

    def baseline_cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = -np.expm1(-self._cox().lambda0 * t)
        return out if out.ndim else float(out)

    def baseline_pdf(self, t):
        m = self._cox()
        t = np.asarray(t, dtype=float)
        out = m.lambda0 * np.exp(-m.lambda0 * t)
        return out if out.ndim else float(out)

    def baseline_sf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.exp(-self._cox().lambda0 * t)
        return out if out.ndim else float(out)

    def s0(self, t, theta=None):
        """S0(t) = E e^{theta Z} 1(T >= t) = (1-p) e^{-L} + p e^{theta} e^{-e^{theta} L}."""
        m = self._cox()
        th = m.theta0 if theta is None else float(theta)
        p = m.covariate_p
        L = np.asarray(self.cum_hazard(t))
        out = (1.0 - p) * np.exp(-L) + p * math.exp(th) * np.exp(-math.exp(th) * L)
        return out if out.ndim else float(out)

    def s1(self, t, theta=None):
        """S1(t) = E Z e^{theta Z} 1(T >= t) = p e^{theta} e^{-e^{theta} L}."""
        m = self._cox()
        th = m.theta0 if theta is None else float(theta)
        L = np.asarray(self.cum_hazard(t))
        out = m.covariate_p * math.exp(th) * np.exp(-math.exp(th) * L)
        return out if out.ndim else float(out)

    def s_ratio_integral(self, t, theta=None):
        """int_0^t (S1/S0) dLambda, in closed form.

        With V = Lambda(t), a = e^theta - 1, b = 1-p, c = p e^theta the
        substitution u = e^{aV} gives (1/a) log(e^{aV}(b+c) / (b e^{aV} + c)),
        with the a -> 0 limit V c/(b+c) - a V^2 b c / (2 (b+c)^2).
        """
        m = self._cox()
        th = m.theta0 if theta is None else float(theta)
        V = np.asarray(self.cum_hazard(t), dtype=float)
        a = math.exp(th) - 1.0
        b = 1.0 - m.covariate_p
        c = m.covariate_p * math.exp(th)
        if b == 0.0:
            out = np.asarray(V, dtype=float).copy()  # S1/S0 == 1
        elif c == 0.0:
            out = np.zeros_like(V)
        elif abs(a) < 1e-5:
            out = V * c / (b + c) - a * V * V * b * c / (2.0 * (b + c) ** 2)
        elif a > 0:
            out = (math.log(b + c) - np.log(b + c * np.exp(-a * V))) / a
        else:
            out = (a * V + math.log(b + c) - np.log(b * np.exp(a * V) + c)) / a
        return out if out.ndim else float(out)

    def cum_hazard_over_s0(self, s, theta=None, tol: float = 1e-9):
        """int_0^s dLambda / S0, pointwise adaptive quadrature (s <= T0)."""
        m = self._cox()
        th = m.theta0 if theta is None else float(theta)
        s = float(s)
        if s > self.T0 + 1e-12:
            raise ModelError("requested point beyond the observation window T0")
        return _quad.adaptive_simpson(
            lambda u: m.lambda0 / self.s0(u, th), 0.0, s, tol=tol)

    def cum_hazard_over_s0_batch(self, s, theta=None):
        """Vectorized int_0^{s_i} dLambda / S0 for many upper limits in [0, T0]."""
        m = self._cox()
        th = m.theta0 if theta is None else float(theta)
        s = np.asarray(s, dtype=float)
        if np.any(s > self.T0 + 1e-12):
            raise ModelError("requested point beyond the observation window T0")
        return _quad.cumulative_at(lambda u: m.lambda0 / self.s0(u, th), s,
                                   max_panel=self.T0 / 4096.0)

    # ---- Monte Carlo caches

    def precompute_istar(self, mc_n: int = 10 ** 6, seed=2024) -> float:
        cox_efficient_information(self, mc_n=mc_n, seed=seed)
        return self.istar

    def cache_c(self, key, value) -> None:
        self._c_cache[key] = value

    def cached_c(self, key):
        return self._c_cache.get(key)


def make_truth(model: Model) -> ModelTruth:
    return ModelTruth(model)


def cox_S(truth: ModelTruth, i: int, t, theta=None):
    """Weighted risk-set expectation S_i(t) = E Z^i e^{theta Z} 1(T >= t)."""
    if i not in (0, 1):
        raise ModelError("i must be 0 or 1")
    return truth.s0(t, theta) if i == 0 else truth.s1(t, theta)


def cox_efficient_information(truth: ModelTruth, mc_n: int = 10 ** 6, seed=2024) -> tuple[float, float]:
    """Monte Carlo second moment of the efficient score; stored on `truth`.

    Raises when the configuration carries no covariate information (for
    example a degenerate covariate law), which signals a broken setup.
    """
    if mc_n < 10 ** 4:
        raise ModelError("need mc_n >= 10^4 draws")
    from . import influence  # local import; influence only needs truth at call time

    model = truth._cox()
    data = sample(model, mc_n, seed)
    vals = influence.cox_score_residual_batch(data, model.theta0, truth)
    sq = vals * vals
    value = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(mc_n))
    if value < 1e-8:
        raise ModelError("efficient information is numerically zero; "
                         "model carries no covariate information")
    truth.istar = value
    truth.istar_se = se
    return value, se
