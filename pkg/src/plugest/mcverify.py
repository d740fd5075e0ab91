"""Monte Carlo harness: linearity residuals, efficiency gaps, probes.

Turns the package's asymptotic claims into finite-sample checks.  A
replication draws a dataset at the locally drifted parameter, runs the chosen
combiner, averages the composed influence function over the sample, and
records the scaled remainder

    residual = sqrt(n) | estimate - truth - mean_i psi(X_i; theta_n) |,

which must shrink with n for an asymptotically linear pipeline.

Reproducibility: each (experiment, n, replication) gets its own
counter-based Philox stream derived from the master seed, so results are
bit-identical regardless of execution order or parallelism; aggregation
always runs in replication order.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, IO, Optional, Sequence

import numpy as np

from . import distkit, models
from .plugin import (Estimate, SplitScheme, SubmodelEstimator, ThetaEstimator,
                     direct_substitute, discretize_theta, split_sample_combine)

__all__ = [
    "ExperimentError", "ReplicationRecord", "SummaryStats", "ExperimentResult",
    "GapResult", "ProbeRow", "replication_rng",
    "cdf_functional", "scalar_functional",
    "run_linearity_experiment", "efficiency_gap", "adaptivity_probe",
    "bootstrap_centered_mean", "smoothness_probe",
    "write_records_csv", "write_summary_csv", "model_label",
]

COMBINERS = ("direct", "split", "discretized-direct")


class ExperimentError(RuntimeError):
    """The harness could not complete (bad inputs or too many failures)."""


def _experiment_id(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")


def replication_rng(master_seed: int, experiment: str, n: int, rep: int) -> np.random.Generator:
    """Counter-based stream for one replication, independent across tuples."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(_experiment_id(experiment), int(n), int(rep)))
    return np.random.Generator(np.random.Philox(ss))


def cdf_functional(t: float) -> Callable[[Estimate], float]:
    def fn(est: Estimate) -> float:
        if est.dist is None:
            raise ExperimentError("cdf functional needs a distribution estimate")
        return est.dist.cdf(t)
    fn.label = f"cdf@{t:g}"
    return fn


def scalar_functional(index: int = 0) -> Callable[[Estimate], float]:
    def fn(est: Estimate) -> float:
        if est.vector is None:
            raise ExperimentError("scalar functional needs a vector estimate")
        return float(est.vector[index])
    fn.label = f"vector[{index}]"
    return fn


@dataclass(frozen=True)
class ReplicationRecord:
    """One replication's outputs.

    theta_hat is the full-sample parameter estimate (reported for every
    combiner, including split, where it is informational only).
    """

    rep_id: int
    n: int
    seed_key: str
    theta_hat: tuple
    functional_value: float
    truth_value: float
    influence_mean: float
    residual: float

    def __post_init__(self):
        if not (self.residual >= 0 and np.isfinite(self.residual)):
            raise ExperimentError("residual must be finite and nonnegative")


@dataclass(frozen=True)
class SummaryStats:
    """Aggregates of sqrt(n)(estimate - truth) and of the linearity residuals.

    mc_se is the standard error of `variance` (fourth-moment formula).
    """

    n: int
    reps: int
    mean: float
    variance: float
    median_residual: float
    mc_se: float

    def __post_init__(self):
        if self.reps < 2 or self.variance < 0:
            raise ExperimentError("summary needs reps >= 2 and variance >= 0")


def _summarize(n: int, scaled: np.ndarray, residuals: np.ndarray) -> SummaryStats:
    reps = scaled.size
    mean = float(np.mean(scaled))
    var = float(np.var(scaled, ddof=1))
    centered = scaled - mean
    m4 = float(np.mean(centered ** 4))
    mc_se = math.sqrt(max(m4 - var * var, 0.0) / reps)
    return SummaryStats(n=n, reps=reps, mean=mean, variance=var,
                        median_residual=float(np.median(residuals)), mc_se=mc_se)


@dataclass
class ExperimentResult:
    experiment: str
    model: str
    combiner: str
    records: list
    summaries: list
    failures: int = 0


def _drifted_theta(model, drift_t: float, n: int) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(model.theta0, dtype=float)).copy()
    theta[0] += drift_t / math.sqrt(n)
    return theta


def _combine(combiner: str, data, th: ThetaEstimator, sub: SubmodelEstimator,
             zeta: float, scheme: Optional[SplitScheme]) -> Estimate:
    if combiner == "direct":
        return direct_substitute(data, th, sub)
    if combiner == "split":
        return split_sample_combine(data, th, sub, scheme)
    if combiner == "discretized-direct":
        return sub(data, discretize_theta(th(data), zeta, data.n))
    raise ExperimentError(f"unknown combiner {combiner!r}")


def run_linearity_experiment(truth: models.ModelTruth, theta_est: ThetaEstimator,
                             sub_est: SubmodelEstimator, influence_ev,
                             functional: Callable[[Estimate], float],
                             truth_value: float, n_list: Sequence[int], reps: int,
                             drift_t: float = 0.0, combiner: str = "direct",
                             master_seed: int = 0, zeta: float = 0.1,
                             experiment: str = "experiment",
                             scheme: Optional[SplitScheme] = None,
                             n_jobs: int = 1) -> ExperimentResult:
    """Per-n linearity residuals under local drift theta_n = theta_0 + t/sqrt(n).

    Replications whose estimator raises are excluded and counted; more than
    1% failures fails the whole experiment.
    """
    if reps < 100:
        raise ExperimentError("need reps >= 100")
    if any(n < 20 for n in n_list):
        raise ExperimentError("every n must be at least 20")
    if combiner not in COMBINERS:
        raise ExperimentError(f"unknown combiner {combiner!r}")

    model = truth.model
    records: list = []
    summaries: list = []
    failures = 0

    def one_rep(n: int, theta_n: np.ndarray, rep: int):
        rng = replication_rng(master_seed, experiment, n, rep)
        data = models.sample(model, n, rng, theta=theta_n)
        try:
            est = _combine(combiner, data, theta_est, sub_est, zeta, scheme)
            th_full = theta_est(data)
            val = functional(est)
        except Exception:
            return None
        psi_mean = float(influence_ev.batch(data, theta_n, truth).mean(axis=0)[0])
        residual = math.sqrt(n) * abs(val - truth_value - psi_mean)
        return ReplicationRecord(
            rep_id=rep, n=n, seed_key=f"{master_seed}/{experiment}/{n}/{rep}",
            theta_hat=tuple(float(v) for v in th_full),
            functional_value=val, truth_value=truth_value,
            influence_mean=psi_mean, residual=residual)

    for n in n_list:
        theta_n = _drifted_theta(model, drift_t, n)
        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                outs = list(pool.map(lambda r: one_rep(n, theta_n, r), range(reps)))
        else:
            outs = [one_rep(n, theta_n, r) for r in range(reps)]
        good = [o for o in outs if o is not None]
        failures += reps - len(good)
        good.sort(key=lambda r: r.rep_id)
        records.extend(good)
        vals = np.array([r.functional_value for r in good])
        res = np.array([r.residual for r in good])
        summaries.append(_summarize(n, math.sqrt(n) * (vals - truth_value), res))

    total = reps * len(n_list)
    if failures > 0.01 * total:
        raise ExperimentError(f"{failures}/{total} replications failed (> 1%)")
    return ExperimentResult(experiment=experiment, model=model_label(model),
                            combiner=combiner, records=records,
                            summaries=summaries, failures=failures)


@dataclass(frozen=True)
class GapResult:
    empirical_var: float
    empirical_se: float
    predicted_var: float
    predicted_se: float
    ratio: float
    failures: int


def efficiency_gap(truth: models.ModelTruth, theta_est: ThetaEstimator,
                   sub_est: SubmodelEstimator, influence_ev,
                   functional: Callable[[Estimate], float], truth_value: float,
                   n: int, reps: int, master_seed: int = 0,
                   combiner: str = "direct", predict_mc_n: int = 10 ** 6,
                   experiment: str = "efficiency", n_jobs: int = 1) -> GapResult:
    """Empirical variance of sqrt(n)(estimate - truth) vs the E psi^2 prediction."""
    if reps < 1000:
        raise ExperimentError("need reps >= 1000")
    model = truth.model
    theta0 = np.atleast_1d(np.asarray(model.theta0, dtype=float))

    def one_rep(rep: int):
        rng = replication_rng(master_seed, experiment, n, rep)
        data = models.sample(model, n, rng)
        try:
            est = _combine(combiner, data, theta_est, sub_est, 0.1, None)
            return functional(est)
        except Exception:
            return None

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outs = list(pool.map(one_rep, range(reps)))
    else:
        outs = [one_rep(r) for r in range(reps)]
    vals = np.array([v for v in outs if v is not None])
    failures = reps - vals.size
    if failures > 0.01 * reps:
        raise ExperimentError(f"{failures}/{reps} replications failed (> 1%)")

    scaled = math.sqrt(n) * (vals - truth_value)
    emp_var = float(np.var(scaled, ddof=1))
    centered = scaled - scaled.mean()
    m4 = float(np.mean(centered ** 4))
    emp_se = math.sqrt(max(m4 - emp_var ** 2, 0.0) / vals.size)

    rng = replication_rng(master_seed, experiment + "/predict", n, 2 ** 31 - 1)
    fresh = models.sample(model, predict_mc_n, rng)
    psi = influence_ev.batch(fresh, theta0, truth)[:, 0]
    sq = psi * psi
    pred_var = float(np.mean(sq))
    pred_se = float(np.std(sq, ddof=1) / math.sqrt(predict_mc_n))
    return GapResult(empirical_var=emp_var, empirical_se=emp_se,
                     predicted_var=pred_var, predicted_se=pred_se,
                     ratio=emp_var / pred_var, failures=failures)


@dataclass(frozen=True)
class ProbeRow:
    label: str
    variance: float
    se: float
    ratio_to_first: float


def adaptivity_probe(truth: models.ModelTruth,
                     theta_variants: Sequence[tuple[str, ThetaEstimator]],
                     sub_est: SubmodelEstimator,
                     functional: Callable[[Estimate], float], truth_value: float,
                     n: int, reps: int, master_seed: int = 0,
                     combiner: str = "direct",
                     experiment: str = "adaptivity") -> list[ProbeRow]:
    """Efficiency comparison across theta-estimator variants on shared datasets.

    Identical variants give identical estimates (shared per-replication
    streams), so their variance ratio is exactly 1.
    """
    if len(theta_variants) < 2:
        raise ExperimentError("need at least two theta-estimator variants")
    model = truth.model
    per_variant: list[list[float]] = [[] for _ in theta_variants]
    failures = 0
    for rep in range(reps):
        rng = replication_rng(master_seed, experiment, n, rep)
        data = models.sample(model, n, rng)
        try:
            vals = [functional(_combine(combiner, data, th, sub_est, 0.1, None))
                    for _, th in theta_variants]
        except Exception:
            failures += 1
            continue
        for store, v in zip(per_variant, vals):
            store.append(v)
    if failures > 0.01 * reps:
        raise ExperimentError(f"{failures}/{reps} replications failed (> 1%)")

    rows: list[ProbeRow] = []
    base_var = None
    for (label, _), vals in zip(theta_variants, per_variant):
        scaled = math.sqrt(n) * (np.array(vals) - truth_value)
        var = float(np.var(scaled, ddof=1))
        centered = scaled - scaled.mean()
        m4 = float(np.mean(centered ** 4))
        se = math.sqrt(max(m4 - var * var, 0.0) / scaled.size)
        if base_var is None:
            base_var = var
        rows.append(ProbeRow(label=label, variance=var, se=se,
                             ratio_to_first=var / base_var))
    return rows


def bootstrap_centered_mean(data: models.Dataset, B: int, seed) -> distkit.SignedStepDistribution:
    """Resampling law of sqrt(n)(mean(resample) - xbar), B resamples.

    Estimates the sampling law of the centered, scaled mean.
    """
    if B < 100:
        raise ExperimentError("need B >= 100 bootstrap resamples")
    if data.schema != "location":
        raise ExperimentError("bootstrap of the centered mean needs location data")
    rng = models._as_rng(seed)
    n = data.n
    xbar = float(np.mean(data.x))
    idx = rng.integers(0, n, size=(B, n))
    means = data.x[idx].mean(axis=1)
    vals = math.sqrt(n) * (means - xbar)
    return distkit.from_points(vals, np.full(B, 1.0 / B))


def smoothness_probe(truth: models.ModelTruth, n: int, c: float,
                     zeta_list: Sequence[float], reps: int, master_seed: int = 0,
                     t: float = 0.0,
                     eps_list: Sequence[float] = (0.05, 0.1, 0.2),
                     experiment: str = "smoothness") -> dict:
    """Exceedance frequencies for the local uniform continuity of the
    shifted residual empirical CDF in theta.

    For each zeta, lays a zeta/sqrt(n)-mesh over |theta - theta0| <= c/sqrt(n)
    and records how often sqrt(n) |G_theta,n(t) - G_theta',n(t)| over adjacent
    mesh pairs reaches each epsilon.  Frequencies shrink with zeta.
    """
    if reps < 500:
        raise ExperimentError("need reps >= 500")
    model = truth.model
    if not isinstance(model, models.LocationModel):
        raise ExperimentError("smoothness probe is defined for the location model")
    theta0 = model.theta0
    out = {}
    sqrt_n = math.sqrt(n)
    for zeta in zeta_list:
        if zeta < 0:
            raise ExperimentError("zeta must be nonnegative")
        if zeta == 0.0:
            out[zeta] = {eps: 0.0 for eps in eps_list}
            continue
        half = int(math.ceil(c / zeta))
        grid = theta0 + (np.arange(-half, half + 1) * zeta) / sqrt_n
        hits = {eps: 0 for eps in eps_list}
        for rep in range(reps):
            rng = replication_rng(master_seed, f"{experiment}/z{zeta:g}", n, rep)
            data = models.sample(model, n, rng)
            xs = np.sort(data.x)
            counts = np.searchsorted(xs, t + grid, side="right")
            sup = sqrt_n * np.max(np.diff(counts)) / n
            for eps in eps_list:
                if sup >= eps:
                    hits[eps] += 1
        out[zeta] = {eps: hits[eps] / reps for eps in eps_list}
    return out


# ---------------------------------------------------------------------------
# CSV output (stable schema, 17 significant digits)

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def model_label(model) -> str:
    name = type(model).__name__
    law = getattr(model, "law", None)
    if law is not None:
        return f"{name}[{law.family}({law.scale:g})]"
    if isinstance(model, models.CoxModel):
        return f"{name}[exp({model.lambda0:g}),T0={model.window_T0:g}]"
    return name


def write_records_csv(fp: IO[str], result: ExperimentResult) -> None:
    k = len(result.records[0].theta_hat) if result.records else 1
    theta_cols = ",".join(f"theta_hat_{i}" for i in range(k))
    fp.write(f"experiment,model,combiner,n,rep,seed,{theta_cols},"
             "estimate,truth,influence_mean,residual\n")
    for r in result.records:
        theta_part = ",".join(_fmt(v) for v in r.theta_hat)
        fp.write(f"{result.experiment},{result.model},{result.combiner},"
                 f"{r.n},{r.rep_id},{r.seed_key},{theta_part},"
                 f"{_fmt(r.functional_value)},{_fmt(r.truth_value)},"
                 f"{_fmt(r.influence_mean)},{_fmt(r.residual)}\n")


def write_summary_csv(fp: IO[str], result: ExperimentResult) -> None:
    fp.write("experiment,model,combiner,n,reps,mean,variance,median_residual,mc_se\n")
    for s in result.summaries:
        fp.write(f"{result.experiment},{result.model},{result.combiner},"
                 f"{s.n},{s.reps},{_fmt(s.mean)},{_fmt(s.variance)},"
                 f"{_fmt(s.median_residual)},{_fmt(s.mc_se)}\n")
