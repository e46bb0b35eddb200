"""Convergence-study harness shared by the CLI and the test suite.

One adaptive build is run per configuration; whenever the sample count
crosses the next checkpoint budget, the true l1 error of the surrogate is
measured against the oracle on fresh uniform points (these evaluations are
diagnostic and do not count against the build budget).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptive import BuildConfig, SurrogateModel, build


@dataclass(frozen=True)
class ConvergencePoint:
    n: int
    error: float
    aggregate: float


def ladder(n_min: int, n_max: int, factor: float = 1.4) -> list[int]:
    """Geometric budget ladder from about n_min up to exactly n_max."""
    out = []
    x = float(n_min)
    while x < n_max:
        v = int(round(x))
        if not out or v > out[-1]:
            out.append(v)
        x *= factor
    if not out or out[-1] != n_max:
        out.append(n_max)
    return out


def l1_error(
    model: SurrogateModel, oracle, n_mc: int, rng: np.random.Generator
) -> float:
    """Monte Carlo estimate of E|f - surrogate| over the unit box."""
    X = rng.random((n_mc, model.d))
    f = oracle.evaluate_batch(X)[0]
    return float(np.mean(np.abs(f - model.evaluate_batch(X))))


def run_convergence(
    oracle,
    config: BuildConfig,
    checkpoints: list[int],
    n_mc_error: int = 200_000,
    error_seed: int = 1,
) -> tuple[list[ConvergencePoint], SurrogateModel]:
    """Adaptive build with l1-error measurements at checkpoint budgets."""
    checkpoints = sorted(set(checkpoints))
    points: list[ConvergencePoint] = []
    cursor = 0

    def on_step(model: SurrogateModel) -> None:
        nonlocal cursor
        if cursor < len(checkpoints) and model.n >= checkpoints[cursor]:
            while cursor < len(checkpoints) and model.n >= checkpoints[cursor]:
                cursor += 1
            rng = np.random.default_rng([error_seed, model.n])
            points.append(
                ConvergencePoint(
                    n=model.n,
                    error=l1_error(model, oracle, n_mc_error, rng),
                    aggregate=model.aggregate,
                )
            )

    model = build(oracle, config, on_step=on_step)
    return points, model


def fit_slope(ns, errors, decade: float = 10.0) -> float:
    """Log-log least-squares slope over the final decade of sample counts."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    mask = (ns >= ns.max() / decade) & (errors > 0)
    if mask.sum() < 2:
        raise ValueError("need at least two checkpoints in the fitting window")
    return float(np.polyfit(np.log(ns[mask]), np.log(errors[mask]), 1)[0])
