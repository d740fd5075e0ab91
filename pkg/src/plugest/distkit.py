"""Finite signed step measures on the real line and their CDF evaluation.

Every distribution-function estimate in this package -- plain, weighted and
symmetrized empirical CDFs, survival baseline estimates, bootstrap laws -- is
a finite signed measure: sorted atom locations with real weights.  Weights
may be negative (weighted residual empiricals can dip below zero in the far
tails), so nothing here assumes monotonicity.  Non-monotone tails are
reported as-is; no isotonization is applied.

Values are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

__all__ = ["SignedStepDistribution", "EvalGrid", "from_points", "mix"]

_MASS_TOL = 1e-12


@dataclass(frozen=True)
class SignedStepDistribution:
    """Sorted atoms (location, weight) with right-continuous CDF evaluation.

    Construct through :func:`from_points`, which merges duplicate locations
    by summing their weights.
    """

    locations: np.ndarray
    weights: np.ndarray
    total_mass: float = field(init=False)
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        locs = np.asarray(self.locations, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if locs.ndim != 1 or wts.shape != locs.shape:
            raise ValueError("locations and weights must be 1-d arrays of equal length")
        if locs.size == 0:
            raise ValueError("a step distribution needs at least one atom")
        if not (np.all(np.isfinite(locs)) and np.all(np.isfinite(wts))):
            raise ValueError("non-finite atom location or weight")
        if np.any(np.diff(locs) <= 0):
            raise ValueError("locations must be strictly increasing; merge duplicates first")
        locs.setflags(write=False)
        wts.setflags(write=False)
        cum = np.concatenate(([0.0], np.cumsum(wts)))
        cum.setflags(write=False)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "weights", wts)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "total_mass", float(cum[-1]))

    @property
    def n_atoms(self) -> int:
        return self.locations.size

    def cdf(self, t):
        """Sum of weights at locations <= t (right-continuous in t)."""
        idx = np.searchsorted(self.locations, t, side="right")
        out = self._cum[idx]
        return float(out) if np.isscalar(t) else out

    def cdf_left(self, t):
        """Left limit: sum of weights at locations strictly below t."""
        idx = np.searchsorted(self.locations, t, side="left")
        out = self._cum[idx]
        return float(out) if np.isscalar(t) else out

    def first_moment(self) -> float:
        """Sum of location * weight over all atoms."""
        return float(self.locations @ self.weights)

    def cdf_on(self, grid: "EvalGrid") -> np.ndarray:
        return self.cdf(grid.points)

    def is_monotone(self) -> bool:
        """True when all weights are nonnegative; then cdf is nondecreasing."""
        return bool(np.all(self.weights >= 0.0))

    def scaled(self, c: float) -> "SignedStepDistribution":
        return SignedStepDistribution(self.locations, c * self.weights)

    def to_csv(self, fp: IO[str]) -> None:
        """Write atoms as CSV rows (location, weight) for plotting."""
        fp.write("location,weight\n")
        for loc, w in zip(self.locations, self.weights):
            fp.write(f"{loc:.17g},{w:.17g}\n")


def from_points(xs: Sequence[float], weights: Sequence[float]) -> SignedStepDistribution:
    """Build a signed step distribution, merging duplicate locations.

    Raises on empty input, length mismatch or non-finite entries.
    """
    xs = np.asarray(xs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if xs.shape != weights.shape or xs.ndim != 1:
        raise ValueError("xs and weights must be 1-d and of equal length")
    if xs.size == 0:
        raise ValueError("empty sample")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(weights))):
        raise ValueError("non-finite atom location or weight")
    locs, inverse = np.unique(xs, return_inverse=True)
    merged = np.bincount(inverse, weights=weights, minlength=locs.size)
    return SignedStepDistribution(locs, merged)


def mix(dists: Iterable[SignedStepDistribution], coeffs: Sequence[float]) -> SignedStepDistribution:
    """Convex (or affine) combination: atoms pooled, weights scaled by coeffs."""
    dists = list(dists)
    coeffs = np.asarray(coeffs, dtype=float)
    if len(dists) != coeffs.size or not dists:
        raise ValueError("need one coefficient per distribution")
    locs = np.concatenate([d.locations for d in dists])
    wts = np.concatenate([c * d.weights for d, c in zip(dists, coeffs)])
    return from_points(locs, wts)


@dataclass(frozen=True)
class EvalGrid:
    """Sorted evaluation abscissae for reporting distribution estimates."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("grid must be a nonempty 1-d array")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite grid point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.size

    @staticmethod
    def regular(lo: float, hi: float, count: int) -> "EvalGrid":
        return EvalGrid(np.linspace(lo, hi, count))
