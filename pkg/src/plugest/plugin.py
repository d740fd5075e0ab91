"""Generic plug-in machinery: substitution combiners and influence composition.

A submodel estimator maps (data, theta) to an estimate of a functional that
does not itself depend on theta.  The direct combiner evaluates it at an
estimated theta; the split-sample combiner estimates theta on one half and
the functional on the other, then mixes the two half-sample estimates with
weights lambda_n/n and 1 - lambda_n/n.  Distribution-valued estimates are
mixed atom-by-atom, which coincides with CDF-pointwise mixing.

All operations are pure; the two half-sample evaluations are independent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import distkit, models

__all__ = [
    "Estimate", "ThetaEstimator", "SubmodelEstimator", "SplitScheme",
    "direct_substitute", "split_sample_combine", "discretize_theta",
    "compose_full_influence", "estimate_c_matrix", "CMatrixEstimate",
]


@dataclass(frozen=True)
class Estimate:
    """Either a real vector or a signed step distribution (exactly one)."""

    vector: Optional[np.ndarray] = None
    dist: Optional[distkit.SignedStepDistribution] = None
    grid: Optional[distkit.EvalGrid] = None

    def __post_init__(self) -> None:
        if (self.vector is None) == (self.dist is None):
            raise ValueError("exactly one of vector/dist must be set")
        if self.vector is not None:
            v = np.atleast_1d(np.asarray(self.vector, dtype=float))
            v.setflags(write=False)
            object.__setattr__(self, "vector", v)

    @staticmethod
    def of_scalar(v) -> "Estimate":
        return Estimate(vector=np.atleast_1d(np.asarray(v, dtype=float)))

    @staticmethod
    def of_dist(d: distkit.SignedStepDistribution,
                grid: Optional[distkit.EvalGrid] = None) -> "Estimate":
        return Estimate(dist=d, grid=grid)

    @property
    def scalar(self) -> float:
        if self.vector is None or self.vector.size != 1:
            raise ValueError("estimate is not a scalar")
        return float(self.vector[0])


@dataclass(frozen=True)
class ThetaEstimator:
    """A map Dataset -> R^k with its output dimension declared.

    `influence` (when attached) is the estimator's influence function, used
    by the composition rule below.
    """

    fn: Callable[[models.Dataset], np.ndarray]
    k: int
    influence: Optional[object] = None  # InfluenceEvaluator, kept loose to avoid a cycle
    label: str = ""

    def __call__(self, data: models.Dataset) -> np.ndarray:
        out = np.atleast_1d(np.asarray(self.fn(data), dtype=float))
        if out.shape != (self.k,):
            raise ValueError(f"theta estimator {self.label!r} returned shape "
                             f"{out.shape}, expected ({self.k},)")
        return out

    @staticmethod
    def known(theta, label: str = "known-theta") -> "ThetaEstimator":
        """Constant estimator pinning theta; its influence is identically 0."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        from . import influence as _inf
        return ThetaEstimator(fn=lambda data: th, k=th.size,
                              influence=_inf.zero_influence(th.size), label=label)


@dataclass(frozen=True)
class SubmodelEstimator:
    """A map (Dataset, theta) -> Estimate, deterministic given its inputs."""

    fn: Callable[[models.Dataset, np.ndarray], Estimate]
    label: str = ""

    def __call__(self, data: models.Dataset, theta) -> Estimate:
        out = self.fn(data, np.atleast_1d(np.asarray(theta, dtype=float)))
        if not isinstance(out, Estimate):
            raise TypeError(f"submodel estimator {self.label!r} must return an Estimate")
        return out


_GEOMETRIC_CHECK = tuple(int(round(4096 * 1.1 ** j)) for j in range(1, 59) if 4096 * 1.1 ** j <= 10 ** 6)


@dataclass(frozen=True)
class SplitScheme:
    """Half-split sizes lambda_n with lambda_n/n -> 1/2.

    Construction checks 1 <= lambda_n <= n-1 and |lambda_n/n - 1/2| <= 1/n
    exhaustively for n in [2, 4096] and on a geometric sweep up to 10^6.
    """

    lambda_of: Callable[[int], int]

    def __post_init__(self) -> None:
        for n in list(range(2, 4097)) + list(_GEOMETRIC_CHECK):
            lam = self.lambda_of(n)
            if not (1 <= lam <= n - 1):
                raise ValueError(f"lambda_of({n}) = {lam} leaves an empty half")
            if abs(lam / n - 0.5) > 1.0 / n + 1e-15:
                raise ValueError(f"lambda_of({n}) = {lam} drifts from n/2")

    @staticmethod
    def half() -> "SplitScheme":
        global _HALF_SCHEME
        if _HALF_SCHEME is None:
            _HALF_SCHEME = SplitScheme(lambda_of=lambda n: n // 2)
        return _HALF_SCHEME


_HALF_SCHEME: Optional[SplitScheme] = None


def direct_substitute(data: models.Dataset, th: ThetaEstimator,
                      sub: SubmodelEstimator) -> Estimate:
    """Evaluate the submodel estimator at the estimated theta: sub(data, th(data))."""
    return sub(data, th(data))


def split_sample_combine(data: models.Dataset, th: ThetaEstimator,
                         sub: SubmodelEstimator,
                         scheme: Optional[SplitScheme] = None) -> Estimate:
    """Cross plug-in: each half's functional uses theta fitted on the other half.

    Returns (lam/n) sub(first, th(rest)) + (1 - lam/n) sub(rest, th(first)).
    """
    n = data.n
    if n < 4:
        raise ValueError("split-sample combination needs n >= 4")
    scheme = scheme or SplitScheme.half()
    lam = scheme.lambda_of(n)
    first, rest = data.split_at(lam)
    theta_first = th(first)
    theta_rest = th(rest)
    e1 = sub(first, theta_rest)
    e2 = sub(rest, theta_first)
    w1 = lam / n
    w2 = (n - lam) / n
    if (e1.vector is None) != (e2.vector is None):
        raise ValueError("half-sample estimates disagree in kind")
    if e1.vector is not None:
        return Estimate(vector=w1 * e1.vector + w2 * e2.vector)
    mixed = distkit.mix([e1.dist, e2.dist], [w1, w2])
    return Estimate(dist=mixed, grid=e1.grid or e2.grid)


def discretize_theta(theta_hat, zeta: float, n: int) -> np.ndarray:
    """Round theta componentwise to the lattice of meshwidth 2 zeta / sqrt(k n).

    Guarantees sqrt(n) |output - input| <= zeta in Euclidean norm; ties round
    half to even (numpy rounding).
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    th = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    mesh = 2.0 * zeta / math.sqrt(th.size * n)
    return mesh * np.round(th / mesh)


@dataclass(frozen=True)
class CMatrixEstimate:
    """Monte Carlo estimate of the theta-sensitivity matrix with its errors."""

    value: np.ndarray   # (m, k)
    se: np.ndarray      # (m, k)
    mc_n: int


def estimate_c_matrix(truth: models.ModelTruth, psi_kappa, theta,
                      mc_n: int = 10 ** 5, seed=0) -> CMatrixEstimate:
    """Estimate c(theta) = -E[psi_kappa(X; theta) score(X; theta)'] by MC.

    Fresh draws from the model at `theta`; returns the (m, k) average with
    componentwise standard errors.
    """
    if mc_n < 10 ** 4:
        raise ValueError("need mc_n >= 10^4 draws")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    data = models.sample(truth.model, mc_n, seed, theta=theta)
    psi = psi_kappa.batch(data, theta, truth)          # (n, m)
    sc = models.score_theta(truth.model, data, theta)  # (n, k)
    prod = -psi[:, :, None] * sc[:, None, :]           # (n, m, k)
    value = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(mc_n)
    return CMatrixEstimate(value=value, se=se, mc_n=mc_n)


def compose_full_influence(psi_kappa, psi_theta, kappa_prime, c):
    """Influence of the combined estimator: psi_kappa + (kappa' + c) psi_theta."""
    from . import influence as _inf

    kappa_prime = np.atleast_2d(np.asarray(kappa_prime, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if kappa_prime.shape != c.shape:
        raise ValueError("kappa' and c must have equal shapes")
    m, k = kappa_prime.shape
    if psi_kappa.m != m or psi_theta.m != k:
        raise ValueError("influence dimensions incompatible with the (m, k) matrices")
    mat = kappa_prime + c

    def fn(data, theta, truth):
        base = psi_kappa.batch(data, theta, truth)       # (n, m)
        correction = psi_theta.batch(data, theta, truth) @ mat.T  # (n, m)
        return base + correction

    label = f"{psi_kappa.label}+(k'+c){psi_theta.label}"
    return _inf.InfluenceEvaluator(fn=fn, m=m, label=label)
