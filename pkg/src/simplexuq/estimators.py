"""Per-simplex refinement indicators and their global aggregates.

Three policies are available:

``last-point``
    Volume times the squared hierarchical surplus of the newest vertex of
    the simplex (the mismatch between the oracle and the parent surrogate
    when that vertex was added). Free of extra oracle calls; the initial
    simplices use a bootstrap surplus measured at the box center. The
    global aggregate is the square root of the sum.

``mc-l1``
    Volume times the Monte Carlo mean of ``|g - g_lower|**((p+1)/p)`` over
    the simplex, where ``g_lower`` is the degree-(p-1) comparison surrogate.
    Costs local random draws but no oracle calls. Aggregates by summation.

``vol-order``
    ``volume ** ((p+1)/d + 1)``: a pure volume/order bound driving uniform
    refinement. Aggregates by summation; it tracks no actual error level
    and must not serve as a stopping criterion on its own.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Simplex, sample_unit_simplex_batch
from .surrogate import LocalSurrogate

POLICIES = ("last-point", "mc-l1", "vol-order")


@dataclass
class EstimatorState:
    """Per-simplex estimates plus the bookkeeping the policy needs."""

    policy: str
    n_initial: int
    n_mc_local: int = 200
    estimates: dict[int, float] = field(default_factory=dict)
    # sample index -> |f(x) - parent surrogate(x)| recorded at insertion time
    hierarchical: dict[int, float] = field(default_factory=dict)
    eps_boot: float = 0.0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown estimator policy {self.policy!r}")

    def aggregate(self) -> float:
        return global_aggregate(self)


def estimate_last_point(simplex: Simplex, state: EstimatorState) -> float:
    """vol * surplus**2 for the newest vertex of the simplex."""
    newest = max(simplex.vertex_ids)
    surplus = state.eps_boot if newest < state.n_initial else state.hierarchical[newest]
    return simplex.volume * surplus * surplus


def estimate_mc_l1(
    simplex: Simplex,
    coords: np.ndarray,
    local: LocalSurrogate,
    lower: LocalSurrogate,
    n_mc_local: int,
    rng: np.random.Generator,
) -> float:
    """vol * mean(|g - g_lower|**((p+1)/p)) over uniform draws in the simplex."""
    verts = coords[list(simplex.vertex_ids)]
    s = sample_unit_simplex_batch(verts.shape[1], n_mc_local, rng)
    X = verts[0] + s @ (verts[1:] - verts[0])
    p = max(local.degree, 1)
    diff = np.abs(local.evaluate(X) - lower.evaluate(X))
    return simplex.volume * float(np.mean(diff ** ((p + 1) / p)))


def estimate_volume_order(volume: float, p: int, d: int) -> float:
    """volume ** ((p+1)/d + 1); decreases strictly under any volume split."""
    return volume ** ((p + 1) / d + 1.0)


def global_aggregate(state: EstimatorState) -> float:
    total = float(sum(state.estimates[sid] for sid in sorted(state.estimates)))
    if state.policy == "last-point":
        return float(np.sqrt(total))
    return total
