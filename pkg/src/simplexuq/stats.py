"""Output statistics computed on a surrogate model.

Everything here integrates the (cheap) surrogate, never the oracle: moments
and distribution functions come from quadrature nodes or Monte Carlo draws
pushed through ``SurrogateModel.evaluate_batch``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptive import SurrogateModel

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def halton_sequence(d: int, n: int) -> np.ndarray:
    """First ``n`` points of the Halton sequence in d dimensions.

    Bases are the first d primes and indexing starts at 1, so the first
    point is (1/2, 1/3, 1/5, ...).
    """
    if d > len(_PRIMES):
        raise ValueError(f"halton_sequence supports d <= {len(_PRIMES)}")
    out = np.empty((n, d))
    for j in range(d):
        b = _PRIMES[j]
        for i in range(1, n + 1):
            f, r, k = 1.0, 0.0, i
            while k:
                f /= b
                r += f * (k % b)
                k //= b
            out[i - 1, j] = r
    return out


@dataclass(frozen=True)
class QuadratureSpec:
    """Node source for moment integration over [0,1]^d."""

    kind: str = "mc"  # 'mc' | 'qmc-halton'
    n: int = 100_000
    seed: int = 0

    def nodes(self, d: int) -> np.ndarray:
        if self.kind == "mc":
            return np.random.default_rng(self.seed).random((self.n, d))
        if self.kind == "qmc-halton":
            return halton_sequence(d, self.n)
        raise ValueError(f"unknown quadrature kind {self.kind!r}")


def moments(model: SurrogateModel, quad: QuadratureSpec) -> tuple[float, float]:
    """(expectation, variance) under the uniform density, shared node set."""
    vals = model.evaluate_batch(quad.nodes(model.d))
    mean = float(vals.mean())
    var = float(np.mean(vals * vals) - mean * mean)
    return mean, max(var, 0.0)


def expectation(model: SurrogateModel, quad: QuadratureSpec) -> float:
    return moments(model, quad)[0]


def variance(model: SurrogateModel, quad: QuadratureSpec) -> float:
    return moments(model, quad)[1]


@dataclass
class CdfCurve:
    """Piecewise-linear CDF approximation on equidistant value nodes."""

    nodes: np.ndarray
    probs: np.ndarray
    degenerate: bool = False

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.degenerate:
            return (y >= self.nodes[0]).astype(float)
        return np.interp(y, self.nodes, self.probs, left=0.0, right=1.0)


def cdf(
    model: SurrogateModel, n_nodes: int, n_mc: int, rng: np.random.Generator
) -> CdfCurve:
    """Empirical CDF of the model output on a shared Monte Carlo draw set.

    All nodes are evaluated against the same draws, so the curve is
    monotone by construction. A (numerically) constant output collapses to
    a single-step curve at that value.
    """
    draws = np.sort(model.evaluate_batch(rng.random((n_mc, model.d))))
    lo, hi = float(draws[0]), float(draws[-1])
    if hi - lo <= 1e-13 * max(1.0, abs(hi)):
        return CdfCurve(nodes=np.array([hi]), probs=np.array([1.0]), degenerate=True)
    nodes = np.linspace(lo, hi, n_nodes)
    probs = np.searchsorted(draws, nodes, side="right") / n_mc
    return CdfCurve(nodes=nodes, probs=probs)
