"""Built-in acceptance suite: 13 verification criteria at desk scale.

Each criterion is a deterministic, seeded check of an exact identity, an
inequality, or a Monte Carlo prediction with an explicit tolerance.  The
``full`` tier runs every criterion at its stated scale; ``fast`` is a smoke
tier with reduced replication counts (same thresholds, slightly noisier).

Used by both the CLI ``accept`` subcommand and tests/test_acceptance.py.
"""
from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtri

from . import distkit, estimators as est, influence as inf, mcverify as mc, models
from .plugin import ThetaEstimator, compose_full_influence, estimate_c_matrix

__all__ = ["Tier", "FULL", "FAST", "CriterionResult", "ALL_CRITERIA", "run_suite"]


@dataclass(frozen=True)
class Tier:
    name: str
    c1_cases: int
    c2_cases: int
    c3_cases: int
    c4_cases: int
    c5_cases: int
    c6_reps: int
    c6_mc: int
    c7_reps: int
    c7_predict: int
    c8_reps: int
    c8_predict: int
    c9_mc: int
    c10_reps: int
    c10_mc: int
    c10_probe_reps: int
    c11_reps: int
    c12_outer: int
    c12_B: int
    c13_reps: int


FULL = Tier(
    name="full",
    c1_cases=1000, c2_cases=1000, c3_cases=10_000, c4_cases=1000, c5_cases=100,
    c6_reps=1000, c6_mc=10 ** 6,
    c7_reps=5000, c7_predict=10 ** 6,
    c8_reps=4000, c8_predict=10 ** 6,
    c9_mc=10 ** 6,
    c10_reps=3000, c10_mc=10 ** 6, c10_probe_reps=3000,
    c11_reps=2000,
    c12_outer=50, c12_B=2000,
    c13_reps=120,
)

FAST = Tier(
    name="fast",
    c1_cases=200, c2_cases=200, c3_cases=2000, c4_cases=200, c5_cases=30,
    c6_reps=300, c6_mc=10 ** 5,
    c7_reps=1000, c7_predict=2 * 10 ** 5,
    c8_reps=1000, c8_predict=2 * 10 ** 5,
    c9_mc=2 * 10 ** 5,
    c10_reps=1000, c10_mc=2 * 10 ** 5, c10_probe_reps=600,
    c11_reps=1000,
    c12_outer=20, c12_B=500,
    c13_reps=100,
)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        word = "PASS" if self.passed else "FAIL"
        return f"{word} {self.number:2d} {self.name}: {self.detail} [{self.seconds:.1f}s]"


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(tag,))))


def _random_location(rng, n_max=50, n_min=2) -> models.Dataset:
    n = int(rng.integers(n_min, n_max + 1))
    x = rng.normal(rng.uniform(-2, 2), rng.uniform(0.2, 3.0), n)
    return models.Dataset("location", x=x)


# ---------------------------------------------------------------------------
# criteria

def criterion_1(tier: Tier, seed: int) -> CriterionResult:
    """Plugging theta = xbar into the weighted centered ECDF gives the plain
    ECDF of x - xbar, atom-for-atom (weights exact, locations to 1e-12)."""
    t0 = time.perf_counter()
    rng = _rng(seed, 1)
    worst_loc = 0.0
    ok = True
    for _ in range(tier.c1_cases):
        data = _random_location(rng)
        xbar = float(np.mean(data.x))
        got = est.weighted_centered_ecdf(data, xbar)
        want = distkit.from_points(data.x - xbar, np.full(data.n, 1.0 / data.n))
        if got.n_atoms != want.n_atoms or np.any(got.weights != want.weights):
            ok = False
            break
        worst_loc = max(worst_loc, float(np.max(np.abs(got.locations - want.locations))))
        if worst_loc > 1e-12:
            ok = False
            break
    return CriterionResult(1, "plug-in identity at theta = xbar", ok,
                           f"{tier.c1_cases} datasets, max location dev {worst_loc:.2e}",
                           time.perf_counter() - t0)


def criterion_2(tier: Tier, seed: int) -> CriterionResult:
    """The weighted centered ECDF has first moment 0 to 1e-12 for any theta."""
    t0 = time.perf_counter()
    rng = _rng(seed, 2)
    worst = 0.0
    for _ in range(tier.c2_cases):
        data = _random_location(rng)
        theta = float(rng.uniform(-2, 2))
        d = est.weighted_centered_ecdf(data, theta)
        worst = max(worst, abs(d.first_moment()))
    ok = worst <= 1e-12
    return CriterionResult(2, "zero first moment of the centered weights", ok,
                           f"{tier.c2_cases} cases, max |moment| {worst:.2e}",
                           time.perf_counter() - t0)


def criterion_3(tier: Tier, seed: int) -> CriterionResult:
    """Inverse-risk sums never exceed -log(1 - ECDF) where the ECDF is < 1."""
    t0 = time.perf_counter()
    rng = _rng(seed, 3)
    checked = 0
    ok = True
    worst_gap = math.inf
    for _ in range(tier.c3_cases):
        n = int(rng.integers(2, 41))
        t = rng.exponential(1.0, n)
        z = (rng.random(n) < 0.5).astype(float)
        data = models.Dataset("survival", z=z, t=t)
        s = float(rng.uniform(0, np.max(t) * 1.1))
        fhat = float(np.mean(t <= s))
        if fhat >= 1.0:
            continue
        vn = est.nelson_aalen_at(data, s)
        bound = -math.log1p(-fhat)
        worst_gap = min(worst_gap, bound - vn)
        if vn > bound:
            ok = False
            break
        checked += 1
    return CriterionResult(3, "inverse-risk sum bounded by -log(1 - ECDF)", ok,
                           f"{checked} cases with ECDF < 1, min slack {worst_gap:.2e}",
                           time.perf_counter() - t0)


def criterion_4(tier: Tier, seed: int) -> CriterionResult:
    """The symmetrized residual ECDF equals the ECDF of the pooled +-residual
    multiset on a 101-point grid, to 1e-12."""
    t0 = time.perf_counter()
    rng = _rng(seed, 4)
    grid = np.linspace(-3.0, 3.0, 101)
    worst = 0.0
    for _ in range(tier.c4_cases):
        n = int(rng.integers(2, 40))
        k = int(rng.integers(1, 4))
        z = rng.normal(0, 1, (n, k))
        theta_true = rng.normal(0, 1, k)
        y = z @ theta_true + rng.normal(0, 1, n)
        data = models.Dataset("regression", y=y, z=z)
        theta = theta_true + rng.normal(0, 0.3, k)
        d = est.symmetrized_residual_ecdf(data, theta)
        e = y - z @ theta
        pooled = np.concatenate([e, -e])
        oracle = (pooled[None, :] <= grid[:, None]).mean(axis=1)
        worst = max(worst, float(np.max(np.abs(d.cdf(grid) - oracle))))
    ok = worst <= 1e-12
    return CriterionResult(4, "symmetrized ECDF equals pooled +- ECDF", ok,
                           f"{tier.c4_cases} datasets, max dev {worst:.2e}",
                           time.perf_counter() - t0)


def _grid_log_pl(theta_grid: np.ndarray, z: np.ndarray, t: np.ndarray) -> np.ndarray:
    # independent oracle: direct risk-matrix evaluation of the log partial likelihood
    risk = (t[None, :] >= t[:, None]).astype(float)       # risk[i, j] = 1(t_j >= t_i)
    w = np.exp(np.outer(theta_grid, z))                   # (grid, n)
    denom = w @ risk.T                                    # (grid, n): sum_j in risk set of i
    return theta_grid * z.sum() - np.log(denom).sum(axis=1)


def criterion_5(tier: Tier, seed: int) -> CriterionResult:
    """Newton maximizer of the partial likelihood matches a 1e-4 grid search
    (coarse-to-fine, valid by concavity) within 1e-3."""
    t0 = time.perf_counter()
    rng = _rng(seed, 5)
    model = models.CoxModel(theta0=0.5, lambda0=1.0, window_T0=2.0)
    done = 0
    worst = 0.0
    attempts = 0
    while done < tier.c5_cases and attempts < 50 * tier.c5_cases:
        attempts += 1
        n = int(rng.integers(8, 31))
        data = models.sample(model, n, rng)
        if np.all(data.z == data.z[0]):
            continue
        res = est.cox_partial_likelihood_fit(data)
        if not res.converged:
            continue
        coarse = np.arange(-10.0, 10.0 + 1e-9, 0.01)
        ll = _grid_log_pl(coarse, data.z, data.t)
        c0 = coarse[int(np.argmax(ll))]
        fine = np.arange(c0 - 0.02, c0 + 0.02 + 1e-12, 1e-4)
        llf = _grid_log_pl(fine, data.z, data.t)
        theta_grid = fine[int(np.argmax(llf))]
        worst = max(worst, abs(res.theta_hat - theta_grid))
        done += 1
    ok = done >= tier.c5_cases and worst <= 1e-3
    return CriterionResult(5, "Newton matches the grid-search oracle", ok,
                           f"{done} fits, max |Newton - grid| {worst:.2e}",
                           time.perf_counter() - t0)


def _location_pipeline(seed: int, mc_n: int):
    model = models.LocationModel(theta0=0.7, law=models.ErrorLaw("normal", 1.0))
    truth = models.make_truth(model)
    psi_k = inf.centered_cdf_influence(0.0)
    c_est = estimate_c_matrix(truth, psi_k, [model.theta0], mc_n=mc_n, seed=seed + 91)
    psi_full = compose_full_influence(psi_k, inf.mean_influence(),
                                      kappa_prime=[[0.0]], c=c_est.value)
    return model, truth, psi_full


def criterion_6(tier: Tier, seed: int) -> CriterionResult:
    """Linearity decay: the median sqrt(n)-residual of the location error-CDF
    pipeline at n=1600 is at most 0.7x the median at n=100, for drift 0 and 1."""
    t0 = time.perf_counter()
    model, truth, psi_full = _location_pipeline(seed, tier.c6_mc)
    detail = []
    ok = True
    for drift in (0.0, 1.0):
        res = mc.run_linearity_experiment(
            truth, est.mean_estimator(), est.weighted_centered_ecdf_submodel(),
            psi_full, mc.cdf_functional(0.0), truth_value=0.5,
            n_list=[100, 1600], reps=tier.c6_reps, drift_t=drift,
            combiner="direct", master_seed=seed + 6, experiment=f"lin-drift{drift:g}")
        med = {s.n: s.median_residual for s in res.summaries}
        ratio = med[1600] / med[100]
        detail.append(f"drift {drift:g}: ratio {ratio:.3f}")
        ok = ok and (med[1600] <= 0.7 * med[100])
    return CriterionResult(6, "linearity residual decay (location pipeline)", ok,
                           "; ".join(detail) + " (need <= 0.7)",
                           time.perf_counter() - t0)


def criterion_7(tier: Tier, seed: int) -> CriterionResult:
    """Efficiency of the location plug-in: Var sqrt(n)(Ghat(0) - 1/2) within
    10% of 1/4 - 1/(2 pi); the naive known-theta ECDF stays above 0.2."""
    t0 = time.perf_counter()
    model, truth, psi_full = _location_pipeline(seed, tier.c7_predict)
    target = 0.25 - 1.0 / (2.0 * math.pi)
    gap = mc.efficiency_gap(
        truth, est.mean_estimator(), est.weighted_centered_ecdf_submodel(),
        psi_full, mc.cdf_functional(0.0), truth_value=0.5,
        n=2000, reps=tier.c7_reps, master_seed=seed + 7,
        predict_mc_n=tier.c7_predict, experiment="eff-loc")

    plain = inf.InfluenceEvaluator(
        fn=lambda d, th, tr: (d.x - th[0] <= 0.0).astype(float) - 0.5,
        m=1, label="plain-ecdf@0")
    naive = mc.efficiency_gap(
        truth, ThetaEstimator.known(model.theta0), est.residual_ecdf_submodel("location"),
        plain, mc.cdf_functional(0.0), truth_value=0.5,
        n=2000, reps=tier.c7_reps, master_seed=seed + 7,
        predict_mc_n=10 ** 4 if tier.c7_predict < 10 ** 6 else 10 ** 5,
        experiment="eff-loc-naive")
    ok = abs(gap.empirical_var - target) <= 0.10 * target and naive.empirical_var > 0.2
    return CriterionResult(
        7, "location pipeline efficiency", ok,
        f"var {gap.empirical_var:.5f} vs {target:.5f} (+-10%), naive {naive.empirical_var:.4f} > 0.2",
        time.perf_counter() - t0)


def criterion_8(tier: Tier, seed: int) -> CriterionResult:
    """Symmetric-regression efficiency with a merely root-n-consistent theta:
    Var of the symmetrized ECDF at G(t)=0.75 within 10% of 0.0625; the plain
    residual ECDF lands near 0.1875."""
    t0 = time.perf_counter()
    model = models.SymRegressionModel(theta0=np.array([1.0]),
                                      law=models.ErrorLaw("normal", 1.0),
                                      covariate_law="normal")
    truth = models.make_truth(model)
    t_point = float(ndtri(0.75))
    ls = est.least_squares_estimator(1)

    gap_sym = mc.efficiency_gap(
        truth, ls, est.sym_ecdf_submodel(), inf.symmetrized_cdf_influence(t_point),
        mc.cdf_functional(t_point), truth_value=0.75,
        n=2000, reps=tier.c8_reps, master_seed=seed + 8,
        predict_mc_n=tier.c8_predict, experiment="eff-symreg")

    plain = inf.InfluenceEvaluator(
        fn=lambda d, th, tr: (d.y - d.z @ th <= t_point).astype(float) - 0.75,
        m=1, label="plain-residual-ecdf")
    gap_plain = mc.efficiency_gap(
        truth, ls, est.residual_ecdf_submodel("regression"), plain,
        mc.cdf_functional(t_point), truth_value=0.75,
        n=2000, reps=tier.c8_reps, master_seed=seed + 8,
        predict_mc_n=10 ** 4 if tier.c8_predict < 10 ** 6 else 10 ** 5,
        experiment="eff-symreg-naive")

    sym_target, plain_target = 0.0625, 0.1875
    ok = (abs(gap_sym.empirical_var - sym_target) <= 0.10 * sym_target
          and abs(gap_plain.empirical_var - plain_target) <= 0.10 * plain_target)
    return CriterionResult(
        8, "symmetric-regression efficiency gain", ok,
        f"sym {gap_sym.empirical_var:.5f} vs {sym_target} (+-10%), "
        f"plain {gap_plain.empirical_var:.5f} vs {plain_target} (+-10%)",
        time.perf_counter() - t0)


def criterion_9(tier: Tier, seed: int) -> CriterionResult:
    """Sensitivity-matrix estimates: 0 for the variance-location pair, and
    -(1/sigma)(3, 3 E Z, 0) for the cubed standardized residual, to 4 MC se."""
    t0 = time.perf_counter()
    loc = models.LocationModel(theta0=0.25, law=models.ErrorLaw("normal", 1.0))
    truth1 = models.make_truth(loc)
    c1 = estimate_c_matrix(truth1, inf.variance_influence(), [loc.theta0],
                           mc_n=tier.c9_mc, seed=seed + 9)
    ok1 = bool(np.all(np.abs(c1.value) <= 4.0 * c1.se))

    srm = models.StandardizedRegressionModel(alpha=0.5, beta=1.0, sigma=1.5,
                                             law=models.ErrorLaw("normal", 1.0),
                                             covariate_law="bernoulli")
    truth2 = models.make_truth(srm)
    cube = inf.InfluenceEvaluator(
        fn=lambda d, th, tr: est.link_residuals(d, th, "standardized") ** 3,
        m=1, label="cube-moment")
    c2 = estimate_c_matrix(truth2, cube, srm.theta0, mc_n=tier.c9_mc, seed=seed + 10)
    target = -np.array([3.0, 3.0 * 0.5, 0.0]) / srm.sigma
    ok2 = bool(np.all(np.abs(c2.value[0] - target) <= 4.0 * c2.se[0]))
    return CriterionResult(
        9, "sensitivity matrices match the closed forms", ok1 and ok2,
        f"variance pair |c|={float(np.abs(c1.value)):.4f} (4se {4 * float(c1.se):.4f}); "
        f"cubed link c={np.array2string(c2.value[0], precision=3)} vs {np.array2string(target, precision=3)}",
        time.perf_counter() - t0)


def criterion_10(tier: Tier, seed: int) -> CriterionResult:
    """Survival baseline efficiency: empirical variance of both baseline-CDF
    plug-ins within 15% of the predicted E psi^2; half-sample theta inflates
    the variance ratio above 1.05."""
    t0 = time.perf_counter()
    model = models.CoxModel(theta0=math.log(2.0), lambda0=1.0,
                            window_T0=math.log(10.0))
    truth = models.make_truth(model)
    truth.precompute_istar(mc_n=tier.c10_mc, seed=seed + 21)
    s = math.log(2.0)  # G(s) = 0.5
    inf.precompute_baseline_c(truth, s, mc_n=tier.c10_mc, seed=seed + 22)
    psi_full = inf.cox_baseline_full_influence(s)
    pl = est.cox_pl_estimator()

    details = []
    ok = True
    for label, sub in (("exp-hazard", est.cox_exp_hazard_submodel(model.window_T0)),
                       ("product-limit", est.cox_product_limit_submodel(model.window_T0))):
        gap = mc.efficiency_gap(
            truth, pl, sub, psi_full, mc.cdf_functional(s), truth_value=0.5,
            n=1000, reps=tier.c10_reps, master_seed=seed + 23,
            predict_mc_n=tier.c10_mc, experiment=f"eff-cox-{label}")
        rel = abs(gap.empirical_var - gap.predicted_var) / gap.predicted_var
        details.append(f"{label}: emp {gap.empirical_var:.4f} pred {gap.predicted_var:.4f}")
        ok = ok and rel <= 0.15

    probe = mc.adaptivity_probe(
        truth, [("full", pl), ("half", est.half_sample(pl))],
        est.cox_exp_hazard_submodel(model.window_T0), mc.cdf_functional(s),
        truth_value=0.5, n=1000, reps=tier.c10_probe_reps,
        master_seed=seed + 24, experiment="cox-probe")
    ratio = probe[1].ratio_to_first
    ok = ok and ratio > 1.05
    details.append(f"half-sample ratio {ratio:.3f} > 1.05")
    return CriterionResult(10, "survival baseline efficiency", ok,
                           "; ".join(details), time.perf_counter() - t0)


def criterion_11(tier: Tier, seed: int) -> CriterionResult:
    """Split-sample and direct combiners agree: location-pipeline variances at
    n=2000 within 2 combined MC standard errors."""
    t0 = time.perf_counter()
    model, truth, psi_full = _location_pipeline(seed, 10 ** 5)
    kwargs = dict(
        truth=truth, theta_est=est.mean_estimator(),
        sub_est=est.weighted_centered_ecdf_submodel(), influence_ev=psi_full,
        functional=mc.cdf_functional(0.0), truth_value=0.5,
        n=2000, reps=tier.c11_reps, master_seed=seed + 11, predict_mc_n=10 ** 4)
    direct = mc.efficiency_gap(combiner="direct", experiment="split-vs-direct", **kwargs)
    split = mc.efficiency_gap(combiner="split", experiment="split-vs-direct", **kwargs)
    band = 2.0 * math.hypot(direct.empirical_se, split.empirical_se)
    diff = abs(direct.empirical_var - split.empirical_var)
    ok = diff <= band
    return CriterionResult(11, "split vs direct variance agreement", ok,
                           f"|{direct.empirical_var:.5f} - {split.empirical_var:.5f}| = "
                           f"{diff:.5f} <= {band:.5f}",
                           time.perf_counter() - t0)


def criterion_12(tier: Tier, seed: int) -> CriterionResult:
    """Bootstrap law of the centered mean: its variance averages within 15%
    of the sample variance over the outer replications."""
    t0 = time.perf_counter()
    ratios = []
    for rep in range(tier.c12_outer):
        rng = mc.replication_rng(seed + 12, "bootstrap", 200, rep)
        x = rng.normal(0.0, 1.0, 200)
        data = models.Dataset("location", x=x)
        d = mc.bootstrap_centered_mean(data, tier.c12_B, rng)
        mu = d.first_moment()
        var_boot = float(np.sum(d.weights * (d.locations - mu) ** 2))
        s2 = float(np.mean((x - x.mean()) ** 2))
        ratios.append(var_boot / s2)
    avg = float(np.mean(ratios))
    ok = abs(avg - 1.0) <= 0.15
    return CriterionResult(12, "bootstrap variance tracks the sample variance", ok,
                           f"mean ratio {avg:.4f} over {tier.c12_outer} replications",
                           time.perf_counter() - t0)


def criterion_13(tier: Tier, seed: int) -> CriterionResult:
    """Determinism: identical master seeds give byte-identical CSV output,
    serially and with thread parallelism."""
    t0 = time.perf_counter()
    model, truth, psi_full = _location_pipeline(seed, 10 ** 5)

    def run(n_jobs: int) -> str:
        res = mc.run_linearity_experiment(
            truth, est.mean_estimator(), est.weighted_centered_ecdf_submodel(),
            psi_full, mc.cdf_functional(0.0), truth_value=0.5,
            n_list=[48], reps=tier.c13_reps, master_seed=seed + 13,
            experiment="determinism", n_jobs=n_jobs)
        buf = io.StringIO()
        mc.write_records_csv(buf, res)
        mc.write_summary_csv(buf, res)
        return buf.getvalue()

    a, b, c = run(1), run(1), run(4)
    ok = (a == b) and (a == c)
    return CriterionResult(13, "byte-identical reruns, serial and parallel", ok,
                           f"serial rerun match: {a == b}; parallel match: {a == c}",
                           time.perf_counter() - t0)


ALL_CRITERIA: list[Callable[[Tier, int], CriterionResult]] = [
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
    criterion_11, criterion_12, criterion_13,
]


def run_suite(tier: Tier, seed: int = 20240809, echo=print) -> list[CriterionResult]:
    results = []
    for crit in ALL_CRITERIA:
        res = crit(tier, seed)
        results.append(res)
        echo(res.line())
    failed = [r for r in results if not r.passed]
    echo(f"{len(results) - len(failed)}/{len(results)} criteria passed "
         f"({tier.name} tier, seed {seed})")
    return results
