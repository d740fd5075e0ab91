"""Batch front end: flat-keyed experiment configs, CSV output, acceptance runs.

Subcommands:
    run <config>                 parse a config file, run the experiment,
                                 write records.csv and summary.csv
    accept [--tier fast|full] [--seed S]
                                 run the built-in acceptance suite
    list-models                  show model kinds and their config keys

Config files are flat ``key = value`` lines ('#' starts a comment); lists are
comma-separated.  Unknown keys are errors.  Exit codes: 0 success,
1 experiment/criterion failure, 2 config error.

The default output directory is $PLUGEST_OUTPUT_DIR, falling back to the
current directory.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import acceptance, estimators as est, influence as inf, mcverify as mc, models
from .plugin import ThetaEstimator, compose_full_influence, estimate_c_matrix

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "build_pipeline",
           "run_experiment", "main"]


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


_MODEL_KINDS = ("location", "sym_regression", "standardized_regression",
                "two_sample", "cox")
_SUBMODELS = ("weighted_centered_ecdf", "sym_ecdf", "residual_ecdf",
              "two_sample_ecdf", "cox_exp_hazard", "cox_product_limit",
              "variance", "h_moment")
_THETA_ESTIMATORS = ("mean", "two_sample_shift", "least_squares", "cox_pl", "known")
_H_NAMES = {"square": est.H_SQUARE, "cube": est.H_CUBE, "identity": est.H_IDENTITY}


@dataclass
class ExperimentConfig:
    experiment: str = "experiment"
    model: str = "location"
    theta0: tuple = (0.0,)
    error_family: str = "normal"
    error_scale: float = 1.0
    covariate: str = "normal"
    alpha: float = 0.0
    beta: float = 1.0
    sigma: float = 1.0
    lambda0: float = 1.0
    t0_window: float = 2.0
    covariate_p: float = 0.5
    theta_estimator: str = ""
    submodel: str = ""
    h: str = "square"
    link: str = "location"
    functional: str = ""
    combiner: str = "direct"
    n_list: tuple = (100,)
    reps: int = 200
    drift_t: float = 0.0
    master_seed: int = 0
    zeta: float = 0.1
    c_mc: int = 100_000
    jobs: int = 1
    output_dir: str = ""


_PARSERS = {
    "experiment": str,
    "model": str,
    "theta0": lambda v: tuple(float(p) for p in v.split(",")),
    "error_family": str,
    "error_scale": float,
    "covariate": str,
    "alpha": float,
    "beta": float,
    "sigma": float,
    "lambda0": float,
    "t0_window": float,
    "covariate_p": float,
    "theta_estimator": str,
    "submodel": str,
    "h": str,
    "link": str,
    "functional": str,
    "combiner": str,
    "n_list": lambda v: tuple(int(p) for p in v.split(",")),
    "reps": int,
    "drift_t": float,
    "master_seed": int,
    "zeta": float,
    "c_mc": int,
    "jobs": int,
    "output_dir": str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat key = value lines into a validated ExperimentConfig."""
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _PARSERS[key](value))
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.model not in _MODEL_KINDS:
        raise ConfigError(f"key 'model': unknown kind {cfg.model!r}")
    if not cfg.n_list:
        raise ConfigError("key 'n_list': must be nonempty")
    if cfg.reps < 1:
        raise ConfigError("key 'reps': must be at least 1")
    if cfg.combiner not in mc.COMBINERS:
        raise ConfigError(f"key 'combiner': unknown {cfg.combiner!r}")
    if cfg.submodel and cfg.submodel not in _SUBMODELS:
        raise ConfigError(f"key 'submodel': unknown {cfg.submodel!r}")
    if cfg.theta_estimator and cfg.theta_estimator not in _THETA_ESTIMATORS:
        raise ConfigError(f"key 'theta_estimator': unknown {cfg.theta_estimator!r}")
    if cfg.h not in _H_NAMES:
        raise ConfigError(f"key 'h': unknown {cfg.h!r}")
    if cfg.functional and not (cfg.functional == "scalar"
                               or cfg.functional.startswith("cdf_at:")):
        raise ConfigError(f"key 'functional': expected 'scalar' or 'cdf_at:<t>'")
    if cfg.jobs < 1:
        raise ConfigError("key 'jobs': must be at least 1")


_DEFAULT_SUBMODEL = {
    "location": "weighted_centered_ecdf",
    "sym_regression": "sym_ecdf",
    "standardized_regression": "h_moment",
    "two_sample": "two_sample_ecdf",
    "cox": "cox_exp_hazard",
}

_DEFAULT_THETA = {
    "location": "mean",
    "sym_regression": "least_squares",
    "standardized_regression": "known",
    "two_sample": "two_sample_shift",
    "cox": "cox_pl",
}


@dataclass
class Pipeline:
    truth: models.ModelTruth
    theta_est: ThetaEstimator
    sub_est: object
    influence_ev: inf.InfluenceEvaluator
    functional: object
    truth_value: float


def _build_model(cfg: ExperimentConfig):
    law = models.ErrorLaw(cfg.error_family, cfg.error_scale)
    if cfg.model == "location":
        return models.LocationModel(theta0=cfg.theta0[0], law=law)
    if cfg.model == "sym_regression":
        return models.SymRegressionModel(theta0=np.asarray(cfg.theta0), law=law,
                                         covariate_law=cfg.covariate)
    if cfg.model == "standardized_regression":
        return models.StandardizedRegressionModel(
            alpha=cfg.alpha, beta=cfg.beta, sigma=cfg.sigma, law=law,
            covariate_law=cfg.covariate)
    if cfg.model == "two_sample":
        return models.TwoSampleModel(theta0=cfg.theta0[0], law=law)
    return models.CoxModel(theta0=cfg.theta0[0], lambda0=cfg.lambda0,
                           window_T0=cfg.t0_window, covariate_p=cfg.covariate_p)


def _theta_estimator(kind: str, model) -> ThetaEstimator:
    if kind == "mean":
        return est.mean_estimator()
    if kind == "two_sample_shift":
        return est.two_sample_shift_estimator()
    if kind == "least_squares":
        return est.least_squares_estimator(model.k)
    if kind == "cox_pl":
        return est.cox_pl_estimator()
    return ThetaEstimator.known(model.theta0)


def build_pipeline(cfg: ExperimentConfig, seed_offset: int = 1) -> Pipeline:
    """Assemble the model, estimators, influence function and target value."""
    try:
        model = _build_model(cfg)
    except models.ModelError as exc:
        raise ConfigError(str(exc)) from exc
    truth = models.make_truth(model)
    submodel = cfg.submodel or _DEFAULT_SUBMODEL[cfg.model]
    theta_kind = cfg.theta_estimator or _DEFAULT_THETA[cfg.model]
    theta_est = _theta_estimator(theta_kind, model)

    functional = cfg.functional
    if not functional:
        if submodel in ("variance", "h_moment"):
            functional = "scalar"
        elif cfg.model == "cox":
            functional = f"cdf_at:{model.window_T0 / 2.0:g}"
        else:
            functional = "cdf_at:0"

    if functional == "scalar":
        func = mc.scalar_functional()
        t_point = None
    else:
        t_point = float(functional.split(":", 1)[1])
        func = mc.cdf_functional(t_point)

    h_name, h_fn = _H_NAMES[cfg.h]
    try:
        sub_est, psi_kappa, truth_value = _submodel_parts(
            submodel, model, truth, t_point, h_name, h_fn, cfg.link)
    except (models.ModelError, est.EstimationError) as exc:
        raise ConfigError(str(exc)) from exc

    influence_ev = _composed_influence(cfg, model, truth, theta_est, theta_kind,
                                       psi_kappa, t_point, seed_offset)
    return Pipeline(truth=truth, theta_est=theta_est, sub_est=sub_est,
                    influence_ev=influence_ev, functional=func,
                    truth_value=truth_value)


def _submodel_parts(submodel, model, truth, t_point, h_name, h_fn, link):
    if submodel == "variance":
        return est.variance_submodel(), inf.variance_influence(), truth.sigma2
    if submodel == "h_moment":
        link = "standardized" if model.schema == "regression" and \
            isinstance(model, models.StandardizedRegressionModel) else link
        kappa = truth.law.variance if h_name == "square" else 0.0
        return (est.h_moment_submodel(h_name, h_fn, link),
                inf.h_moment_influence(h_name, h_fn, link), kappa)
    if t_point is None:
        raise ConfigError("distribution submodels need a 'cdf_at:<t>' functional")
    if submodel == "weighted_centered_ecdf":
        return (est.weighted_centered_ecdf_submodel(),
                inf.centered_cdf_influence(t_point), truth.G(t_point))
    if submodel == "sym_ecdf":
        return (est.sym_ecdf_submodel(),
                inf.symmetrized_cdf_influence(t_point), truth.G(t_point))
    if submodel == "residual_ecdf":
        link = "regression" if model.schema == "regression" else "location"
        return (est.residual_ecdf_submodel(link),
                inf.plain_cdf_influence(t_point, link), truth.G(t_point))
    if submodel == "two_sample_ecdf":
        return (est.two_sample_ecdf_submodel(),
                inf.two_sample_pooled_cdf_influence(t_point), truth.G(t_point))
    if submodel == "cox_exp_hazard":
        return (est.cox_exp_hazard_submodel(model.window_T0),
                inf.cox_baseline_cdf_influence(t_point), truth.baseline_cdf(t_point))
    if submodel == "cox_product_limit":
        return (est.cox_product_limit_submodel(model.window_T0),
                inf.cox_baseline_cdf_influence(t_point), truth.baseline_cdf(t_point))
    raise ConfigError(f"unknown submodel {submodel!r}")


def _composed_influence(cfg, model, truth, theta_est, theta_kind, psi_kappa,
                        t_point, seed_offset):
    if isinstance(model, models.CoxModel) and t_point is not None:
        truth.precompute_istar(mc_n=max(cfg.c_mc, 10 ** 4), seed=cfg.master_seed + seed_offset)
        inf.precompute_baseline_c(truth, t_point, mc_n=max(cfg.c_mc, 10 ** 4),
                                  seed=cfg.master_seed + seed_offset + 1)
        return inf.cox_baseline_full_influence(t_point)
    if theta_kind == "known" or theta_est.influence is None:
        return psi_kappa
    c_est = estimate_c_matrix(truth, psi_kappa, np.atleast_1d(model.theta0),
                              mc_n=max(cfg.c_mc, 10 ** 4),
                              seed=cfg.master_seed + seed_offset)
    zeros = np.zeros((psi_kappa.m, theta_est.k))
    return compose_full_influence(psi_kappa, theta_est.influence,
                                  kappa_prime=zeros, c=c_est.value)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Path] = None,
                   echo=print) -> mc.ExperimentResult:
    """Run the configured experiment and write records.csv / summary.csv."""
    pipe = build_pipeline(cfg)
    result = mc.run_linearity_experiment(
        pipe.truth, pipe.theta_est, pipe.sub_est, pipe.influence_ev,
        pipe.functional, pipe.truth_value, n_list=list(cfg.n_list),
        reps=cfg.reps, drift_t=cfg.drift_t, combiner=cfg.combiner,
        master_seed=cfg.master_seed, zeta=cfg.zeta,
        experiment=cfg.experiment, n_jobs=cfg.jobs)

    if out_dir is None:
        out_dir = Path(cfg.output_dir or os.environ.get("PLUGEST_OUTPUT_DIR", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "records.csv", "w") as fp:
        mc.write_records_csv(fp, result)
    with open(out_dir / "summary.csv", "w") as fp:
        mc.write_summary_csv(fp, result)

    echo(f"experiment {result.experiment} ({result.model}, {result.combiner}); "
         f"failures {result.failures}")
    echo(f"{'n':>8} {'reps':>6} {'mean':>12} {'variance':>12} "
         f"{'median_resid':>12} {'mc_se':>10}")
    for s in result.summaries:
        echo(f"{s.n:>8} {s.reps:>6} {s.mean:>12.5f} {s.variance:>12.5f} "
             f"{s.median_residual:>12.5f} {s.mc_se:>10.5f}")
    echo(f"wrote {out_dir / 'records.csv'} and {out_dir / 'summary.csv'}")
    return result


def _cmd_run(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (mc.ExperimentError, models.ModelError, est.EstimationError, OSError) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    return 0


def _cmd_accept(args) -> int:
    tier = acceptance.FULL if args.tier == "full" else acceptance.FAST
    started = time.perf_counter()
    results = acceptance.run_suite(tier, seed=args.seed)
    elapsed = time.perf_counter() - started
    if tier is acceptance.FAST and elapsed > 120.0:
        print(f"note: fast tier took {elapsed:.0f}s (soft budget 120s)")
    return 0 if all(r.passed for r in results) else 1


def _cmd_list_models(_args) -> int:
    print("model kinds and their config keys:")
    print("  location                 theta0, error_family, error_scale")
    print("  sym_regression           theta0 (comma list), error_family, error_scale, covariate")
    print("  standardized_regression  alpha, beta, sigma, error_family (unit variance), covariate")
    print("  two_sample               theta0, error_family, error_scale")
    print("  cox                      theta0, lambda0, t0_window, covariate_p")
    print("submodels:", ", ".join(_SUBMODELS))
    print("theta estimators:", ", ".join(_THETA_ESTIMATORS))
    print("combiners:", ", ".join(mc.COMBINERS))
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plugest",
        description="Plug-in estimation experiments and their acceptance checks.")
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config", help="path to a flat key = value config file")
    p_run.set_defaults(fn=_cmd_run)

    p_acc = subs.add_parser("accept", help="run the built-in acceptance suite")
    p_acc.add_argument("--tier", choices=("fast", "full"), default="fast")
    p_acc.add_argument("--seed", type=int, default=20240809)
    p_acc.set_defaults(fn=_cmd_accept)

    p_list = subs.add_parser("list-models", help="list model kinds and options")
    p_list.set_defaults(fn=_cmd_list_models)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
