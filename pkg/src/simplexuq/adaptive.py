"""Adaptive refinement driver.

An oracle is any object with an integer attribute ``d`` that maps a point of
``[0,1]^d`` to ``(value, region_label)`` when called. The driver seeds the
model with the ``2**d`` box corners plus the center, then repeatedly selects
the simplices with the largest error estimates, places one new sample in
each, and refits every surrogate whose stencil could have changed.

Sampling rules: a simplex with a facet on the domain boundary receives its
point on the middle third of its longest edge (keeping boundary faces
populated); interior simplices receive a uniform draw inside the simplex
spanned by their facet centers, which keeps new points away from existing
vertices. Simplices that could not get a regular surrogate (three or more
vertex regions, or a starved region) are flagged and refined first,
regardless of their estimate.

Given the same oracle, configuration and seed, the build is deterministic:
the sample sequence and the logged aggregates repeat bit for bit.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Hashable

import numpy as np

from .errors import (
    BudgetExhausted,
    DegeneratePoint,
    InsufficientPoints,
    MoreThanTwoRegions,
    PlacementFailure,
)
from .estimators import (
    EstimatorState,
    POLICIES,
    estimate_last_point,
    estimate_mc_l1,
    estimate_volume_order,
    global_aggregate,
)
from .geometry import (
    Simplex,
    Triangulation,
    sample_in_simplex,
    subsimplex,
    unit_box_corners,
)
from .samples import SampleSet
from .surrogate import (
    LocalSurrogate,
    build_local_surrogate,
    build_lower_comparator,
    linear_fallback_surrogate,
)

logger = logging.getLogger(__name__)

MODES = ("original", "improved")
LEC_MODES = ("off", "strict", "delta")


class CountingOracle:
    """Wrap an oracle and count its evaluations."""

    def __init__(self, oracle):
        self._oracle = oracle
        self.d = oracle.d
        self.calls = 0

    def __call__(self, x: np.ndarray) -> tuple[float, Hashable]:
        self.calls += 1
        return self._oracle(x)


@dataclass
class BuildConfig:
    """Settings for one adaptive build."""

    p_max: int = 2
    mode: str = "improved"
    lec: str = "off"
    estimator: str = "mc-l1"
    m_ref: float = 1.0  # < 1 means a fraction of the current sample count
    budget: int = 200
    tolerance: float = 0.0  # 0 disables the aggregate stopping test
    seed: int = 0
    n_mc_local: int = 200

    def __post_init__(self):
        if self.p_max < 1:
            raise ValueError("p_max must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.lec not in LEC_MODES:
            raise ValueError(f"lec must be one of {LEC_MODES}")
        if self.estimator not in POLICIES:
            raise ValueError(f"estimator must be one of {POLICIES}")
        if self.m_ref <= 0:
            raise ValueError("m_ref must be positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


def effective_lec(config: BuildConfig, d: int) -> str:
    """LEC setting actually applied to fits.

    Original mode takes the configured value. Improved mode relies on the
    estimator instead of a limiter; only the delta relaxation is kept, and
    only at d >= 4 where extrapolation overshoot gets expensive.
    """
    if config.mode == "original":
        return config.lec
    return "delta" if (config.lec == "delta" and d >= 4) else "off"


@dataclass
class LogRow:
    step: int
    n_samples: int
    n_simplices: int
    aggregate: float
    wall_time: float


@dataclass
class SurrogateModel:
    """Triangulation, samples, per-simplex surrogates and estimator state."""

    samples: SampleSet
    tri: Triangulation
    surrogates: dict[int, LocalSurrogate]
    estimator: EstimatorState
    config: BuildConfig
    build_log: list[LogRow] = field(default_factory=list)
    oracle_info: dict | None = None
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    @property
    def d(self) -> int:
        return self.samples.d

    @property
    def n(self) -> int:
        return self.samples.n

    @property
    def aggregate(self) -> float:
        return global_aggregate(self.estimator)

    def evaluate(self, x: np.ndarray) -> float:
        sid = self.tri.locate(np.asarray(x, dtype=float))
        return float(self.surrogates[sid].evaluate(np.asarray(x, dtype=float)[None])[0])

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        sids = self.tri.locate_batch(X)
        out = np.empty(len(X))
        for sid in np.unique(sids):
            mask = sids == sid
            out[mask] = self.surrogates[int(sid)].evaluate(X[mask])
        return out


def evaluate_model(model: SurrogateModel, x: np.ndarray) -> float:
    return model.evaluate(x)


def _fit_one(model: SurrogateModel, sid: int) -> LocalSurrogate:
    simplex = model.tri.simplices[sid]
    try:
        return build_local_surrogate(
            simplex,
            model.samples,
            model.config.p_max,
            mode=model.config.mode,
            lec=effective_lec(model.config, model.d),
        )
    except (MoreThanTwoRegions, InsufficientPoints):
        return linear_fallback_surrogate(simplex, model.samples)


def _estimate_one(model: SurrogateModel, sid: int, rng: np.random.Generator) -> float:
    simplex = model.tri.simplices[sid]
    local = model.surrogates[sid]
    policy = model.estimator.policy
    if policy == "last-point":
        estimate = estimate_last_point(simplex, model.estimator)
        return max(estimate, _unresolved_floor(simplex, local, 2.0))
    if policy == "mc-l1":
        lower = build_lower_comparator(local, simplex, model.samples)
        estimate = estimate_mc_l1(
            simplex,
            model.tri.coords,
            local,
            lower,
            model.estimator.n_mc_local,
            rng,
        )
        p = max(local.degree, 1)
        return max(estimate, _unresolved_floor(simplex, local, (p + 1) / p))
    return estimate_volume_order(simplex.volume, max(local.degree, 1), model.d)


def _unresolved_floor(simplex: Simplex, local: LocalSurrogate, exponent: float) -> float:
    """Minimum estimate for a cell whose combiner failed both ways.

    The recorded stencil mismatch is a directly measured surrogate-sample
    disagreement that the error estimators cannot see (their comparison
    surrogates inherit the same combiner), so it is converted into the
    policy's own units: volume times mismatch to the policy exponent.
    The floor shrinks with both volume and mismatch, so flagged cells
    attract refinement in proportion to the defect instead of
    monopolizing it.
    """
    if not local.combiner_unresolved:
        return 0.0
    return simplex.volume * local.combine_mismatch ** exponent


def initialize(oracle, config: BuildConfig, rng: np.random.Generator) -> SurrogateModel:
    """Corner-plus-center seeding, first fits and first estimates."""
    d = oracle.d
    n_init = 2 ** d + 1
    if config.budget < n_init:
        raise ValueError(f"budget {config.budget} below the {n_init} seed samples")
    t0 = time.perf_counter()
    samples = SampleSet(d)
    tri = Triangulation.from_box_corners(d)
    for corner in unit_box_corners(d):
        value, label = oracle(corner)
        samples.append(corner, value, label)
    center = np.full(d, 0.5)
    value, label = oracle(center)
    corner_mean = float(samples.values[: 2 ** d].mean())
    tri.insert(center)
    samples.append(center, value, label)
    state = EstimatorState(
        policy=config.estimator,
        n_initial=n_init,
        n_mc_local=config.n_mc_local,
        eps_boot=abs(value - corner_mean),
    )
    model = SurrogateModel(
        samples=samples,
        tri=tri,
        surrogates={},
        estimator=state,
        config=config,
        _t0=t0,
    )
    for sid in sorted(tri.simplices):
        model.surrogates[sid] = _fit_one(model, sid)
        state.estimates[sid] = _estimate_one(model, sid, rng)
    model.build_log.append(
        LogRow(0, samples.n, len(tri.simplices), model.aggregate, time.perf_counter() - t0)
    )
    return model


def _is_boundary(verts: np.ndarray) -> bool:
    """True when some d vertices share a coordinate pinned to 0 or 1."""
    d = verts.shape[1]
    for axis in range(d):
        for bound in (0.0, 1.0):
            if int(np.sum(verts[:, axis] == bound)) >= d:
                return True
    return False


def place_new_point(
    simplex,
    tri: Triangulation,
    samples: SampleSet,
    rng: np.random.Generator,
    pending: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Coordinates for the refinement sample of one simplex.

    Boundary simplices get a point on the middle third of their longest
    edge (ties by lexicographic vertex ids); interior ones a uniform draw
    inside the facet-center subsimplex. Retries on coincidence with stored
    samples or ``pending`` batch points; raises PlacementFailure after 100
    attempts.
    """
    ids = simplex.vertex_ids
    verts = tri.coords[list(ids)]
    boundary = _is_boundary(verts)
    if boundary:
        best, length = None, -1.0
        for k, l in combinations(range(len(ids)), 2):
            e = float(np.sum((verts[k] - verts[l]) ** 2))
            if e > length:
                best, length = (k, l), e
        k, l = best
        x0, x1 = verts[k], verts[l]
    else:
        sub = subsimplex(verts)
    for _ in range(100):
        if boundary:
            x = x0 + ((1.0 + rng.random()) / 3.0) * (x1 - x0)
        else:
            x = sample_in_simplex(sub, rng)
        x = np.clip(x, 0.0, 1.0)
        clear = samples.nearest_distance(x) > 1e-12
        if clear and pending:
            clear = all(float(np.linalg.norm(x - q)) > 1e-12 for q in pending)
        if clear:
            return x
    raise PlacementFailure(f"no admissible point found in simplex {ids}")


def _resolve_m_ref(m_ref: float, n: int) -> int:
    if m_ref < 1.0:
        return max(1, int(round(m_ref * n)))
    return int(round(m_ref))


def refine_step(
    model: SurrogateModel, oracle, rng: np.random.Generator
) -> list[int]:
    """One batch of refinements; returns the new sample indices."""
    config = model.config
    n = model.samples.n
    if n >= config.budget:
        raise BudgetExhausted(f"{n} samples already reach the budget {config.budget}")
    m = min(_resolve_m_ref(config.m_ref, n), config.budget - n)

    order = sorted(
        model.surrogates,
        key=lambda sid: (
            0 if model.surrogates[sid].pending_refinement else 1,
            -model.estimator.estimates[sid],
            sid,
        ),
    )
    selected = order[:m]

    placements: list[tuple[int, np.ndarray]] = []
    pending: list[np.ndarray] = []
    for sid in selected:
        try:
            x = place_new_point(model.tri.simplices[sid], model.tri, model.samples, rng, pending)
        except PlacementFailure:
            logger.warning("no room to refine simplex %d; skipping", sid)
            continue
        placements.append((sid, x))
        pending.append(x)
    if not placements:
        return []

    evaluations = [oracle(x) for _, x in placements]
    surpluses = [
        abs(value - float(model.surrogates[sid].evaluate(x[None])[0]))
        for (sid, x), (value, _) in zip(placements, evaluations)
    ]

    created: set[int] = set()
    removed: set[int] = set()
    new_ids: list[int] = []
    new_points: list[np.ndarray] = []
    new_codes: list[int] = []
    for (sid, x), (value, label), surplus in zip(placements, evaluations, surpluses):
        try:
            idx = model.samples.append(x, value, label)
        except DegeneratePoint:
            logger.warning("skipping near-duplicate refinement point %s", x)
            continue
        vid, made, gone = model.tri.insert(x)
        assert vid == idx
        model.estimator.hierarchical[idx] = surplus
        created |= set(made)
        created -= set(gone)
        removed |= set(gone)
        new_ids.append(idx)
        new_points.append(x)
        new_codes.append(int(model.samples.codes[idx]))
    for sid in removed:
        model.surrogates.pop(sid, None)
        model.estimator.estimates.pop(sid, None)

    # Survivors whose stencil may now include one of the new samples.
    survivors = sorted(set(model.surrogates) - created)
    dirty: set[int] = set()
    if survivors and new_ids:
        cents = np.stack([model.tri.simplices[s].centroid for s in survivors])
        radii = np.array([model.surrogates[s].selection_radius for s in survivors])
        limited = np.array([model.surrogates[s].count_limited for s in survivors])
        regs = [model.surrogates[s].regions for s in survivors]
        r0 = np.array([r[0] if r else -1 for r in regs])
        r1 = np.array([r[1] if r and len(r) > 1 else (r[0] if r else -1) for r in regs])
        for x, code in zip(new_points, new_codes):
            in_region = (r0 == -1) | (r0 == code) | (r1 == code)
            dist = np.sqrt(np.einsum("ij,ij->i", cents - x, cents - x))
            hits = in_region & ((dist <= radii + 1e-12) | limited)
            dirty.update(survivors[i] for i in np.flatnonzero(hits))

    for sid in sorted(created | dirty):
        model.surrogates[sid] = _fit_one(model, sid)
        model.estimator.estimates[sid] = _estimate_one(model, sid, rng)

    model.build_log.append(
        LogRow(
            step=model.build_log[-1].step + 1,
            n_samples=model.samples.n,
            n_simplices=len(model.tri.simplices),
            aggregate=model.aggregate,
            wall_time=time.perf_counter() - model._t0,
        )
    )
    return new_ids


def build(
    oracle,
    config: BuildConfig,
    on_step: Callable[[SurrogateModel], None] | None = None,
) -> SurrogateModel:
    """Run an adaptive build to the budget or the aggregate tolerance."""
    if not hasattr(oracle, "calls"):
        oracle = CountingOracle(oracle)
    rng = np.random.default_rng(config.seed)
    model = initialize(oracle, config, rng)
    if on_step is not None:
        on_step(model)
    while model.samples.n < config.budget:
        if config.tolerance > 0 and model.aggregate <= config.tolerance:
            break
        new_ids = refine_step(model, oracle, rng)
        if not new_ids:
            logger.warning("refinement stalled at n=%d; stopping", model.samples.n)
            break
        if on_step is not None:
            on_step(model)
    return model
