"""Local polynomial surrogates on simplices.

Each simplex carries an interpolating polynomial of (at most) a requested
degree, fitted on a stencil of nearby samples in a monomial basis. The basis
is shifted to the simplex centroid and scaled by the stencil bounding box,
which keeps the Vandermonde matrix well conditioned at small simplex sizes.

Two fitting modes exist. In ``original`` mode the stencil ignores region
labels and a local-extremum-conserving (LEC) limiter may reduce the degree.
In ``improved`` mode the stencil is restricted to samples from the regions
the simplex vertices belong to: one region gives a single one-sided fit,
two regions give a pair of one-sided fits combined with a pointwise max or
min (recovering kinks), three or more raise MoreThanTwoRegions so the
driver can refine the simplex instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import InsufficientPoints, MoreThanTwoRegions, SingularSystem
from .geometry import Simplex
from .samples import SampleSet

COND_LIMIT = 1e12
FIT_RTOL = 1e-8
LEC_TOL = 1e-9
COMBINE_RTOL = 1e-6


def n_coefficients(d: int, p: int) -> int:
    """Dimension of the full polynomial space of degree <= p in d variables."""
    return math.comb(d + p, d)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def monomial_basis(d: int, p: int) -> tuple[tuple[int, ...], ...]:
    """Multi-indices with |alpha| <= p, by total degree then lexicographic."""
    out = []
    for t in range(p + 1):
        out.extend(_compositions(t, d))
    return tuple(out)


@lru_cache(maxsize=None)
def _basis_array(d: int, p: int) -> np.ndarray:
    return np.array(monomial_basis(d, p), dtype=np.int64)


@lru_cache(maxsize=None)
def _barycentric_lattice(d: int, q: int) -> np.ndarray:
    """All (d+1)-part barycentric weights with denominators q, shape (m, d+1)."""
    combos = np.array(list(_compositions(q, d + 1)), dtype=float)
    return combos / q


@dataclass
class Polynomial:
    """Multivariate polynomial in a shifted and scaled monomial basis."""

    exponents: np.ndarray  # (N, d) integer multi-indices
    coeffs: np.ndarray  # (N,)
    center: np.ndarray  # (d,)
    halfwidth: np.ndarray  # (d,)
    degree: int

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        U = (X.reshape(-1, X.shape[-1]) - self.center) / self.halfwidth
        vals = _design_matrix(U, self.exponents) @ self.coeffs
        return float(vals[0]) if single else vals


def _design_matrix(U: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    return np.prod(U[:, None, :] ** exponents[None, :, :], axis=2)


@dataclass(frozen=True)
class Stencil:
    """Sample indices feeding one polynomial fit."""

    point_ids: tuple[int, ...]
    degree: int
    region: int | None  # region code, or None for an unrestricted stencil


def build_stencil(
    simplex: Simplex, samples: SampleSet, p: int, region: int | None = None
) -> Stencil:
    """Nearest-neighbor stencil of exactly ``n_coefficients(d, p)`` samples.

    The simplex vertices (those inside ``region`` if one is given) are always
    included; the remainder are the candidates closest to the simplex
    centroid, ties broken by lower sample index. Raises InsufficientPoints
    when the candidate set is too small for the requested degree.
    """
    d = samples.d
    need = n_coefficients(d, p)
    if region is None:
        cand = np.arange(samples.n)
        forced = list(simplex.vertex_ids)
    else:
        cand = np.flatnonzero(samples.codes == region)
        forced = [v for v in simplex.vertex_ids if samples.codes[v] == region]
    if cand.size < need:
        raise InsufficientPoints(
            f"{cand.size} candidates for a degree-{p} stencil needing {need}"
        )
    diff = samples.coords[cand] - simplex.centroid
    dist = np.einsum("ij,ij->i", diff, diff)
    order = cand[np.lexsort((cand, dist))]
    forced_set = set(forced)
    fill = [int(i) for i in order if i not in forced_set]
    ids = tuple(sorted(forced)) + tuple(fill[: need - len(forced)])
    return Stencil(point_ids=ids, degree=p, region=region)


def stencil_radius(
    simplex: Simplex, samples: SampleSet, p_max: int, region: int | None = None
) -> tuple[float, bool]:
    """Reach of a hypothetical degree-``p_max`` stencil around the centroid.

    Returns ``(radius, count_limited)``. Any future sample closer to the
    centroid than ``radius`` (and matching the region restriction) could
    displace a stencil member, so the surrogate must be refitted. When the
    candidate set cannot even fill the degree-``p_max`` stencil the fit is
    count-limited and every new in-region sample matters.
    """
    d = samples.d
    need = n_coefficients(d, p_max)
    if region is None:
        cand = samples.coords
    else:
        cand = samples.coords[samples.codes == region]
    if cand.shape[0] < need:
        return np.inf, True
    diff = cand - simplex.centroid
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return float(np.partition(dist, need - 1)[need - 1]), False


def fit_interpolant(
    stencil: Stencil, samples: SampleSet, center: np.ndarray
) -> Polynomial:
    """Interpolating polynomial through the stencil samples.

    Solves the Vandermonde system by LU with partial pivoting plus one step
    of iterative refinement. Raises SingularSystem when the pivot-ratio
    condition estimate exceeds COND_LIMIT or the interpolation residual is
    not at rounding level.
    """
    ids = list(stencil.point_ids)
    pts = samples.coords[ids]
    f = samples.values[ids]
    halfwidth = 0.5 * (pts.max(axis=0) - pts.min(axis=0))
    halfwidth[halfwidth < 1e-14] = 1.0
    exponents = _basis_array(samples.d, stencil.degree)
    U = (pts - center) / halfwidth
    V = _design_matrix(U, exponents)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            lu, piv = scipy.linalg.lu_factor(V)
        except Exception as exc:  # LinAlgError on hard singularity
            raise SingularSystem(str(exc)) from exc
        diag = np.abs(np.diag(lu))
        if np.min(diag) == 0.0 or np.max(diag) / np.min(diag) > COND_LIMIT:
            raise SingularSystem(
                f"pivot-ratio condition estimate above {COND_LIMIT:g}"
            )
        coeffs = scipy.linalg.lu_solve((lu, piv), f)
        coeffs = coeffs + scipy.linalg.lu_solve((lu, piv), f - V @ coeffs)
    scale = 1.0 + np.max(np.abs(f))
    if np.max(np.abs(f - V @ coeffs)) > FIT_RTOL * scale:
        raise SingularSystem("interpolation residual above rounding level")
    return Polynomial(
        exponents=exponents,
        coeffs=coeffs,
        center=np.asarray(center, dtype=float).copy(),
        halfwidth=halfwidth,
        degree=stencil.degree,
    )


def _constant(value: float, d: int, center: np.ndarray, halfwidth: np.ndarray) -> Polynomial:
    return Polynomial(
        exponents=np.zeros((1, d), dtype=np.int64),
        coeffs=np.array([value], dtype=float),
        center=center,
        halfwidth=halfwidth,
        degree=0,
    )


@dataclass
class LocalSurrogate:
    """Surrogate attached to one simplex.

    ``sides`` has one polynomial (one-sided) or two (two-sided, ordered by
    ascending region code and combined pointwise with ``combine``).
    """

    sides: tuple[Polynomial, ...]
    stencils: tuple[Stencil, ...]
    combine: str | None  # 'max' | 'min' | None
    regions: tuple[int, ...] | None  # region codes per side, None if unrestricted
    degree: int
    lec_reduced: bool = False
    combine_mismatch: float = 0.0
    combiner_unresolved: bool = False
    pending_refinement: bool = False
    selection_radius: float = np.inf
    count_limited: bool = False

    @property
    def kind(self) -> str:
        return "two-sided" if len(self.sides) == 2 else "one-sided"

    @property
    def poly(self) -> Polynomial:
        return self.sides[0]

    @property
    def poly_low(self) -> Polynomial:
        return self.sides[0]

    @property
    def poly_high(self) -> Polynomial:
        return self.sides[-1]

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        if len(self.sides) == 1:
            return self.sides[0](X)
        a, b = self.sides[0](X), self.sides[1](X)
        return np.maximum(a, b) if self.combine == "max" else np.minimum(a, b)


def lec_check(local, simplex: Simplex, samples: SampleSet, mode: str = "strict") -> bool:
    """Local-extremum-conserving test on a barycentric lattice.

    The surrogate is evaluated on the order-(2p+2) barycentric lattice of
    the simplex; its range must stay within the vertex-value range (strict)
    or within the range widened by half the vertex-value spread (delta).
    """
    if mode == "off":
        return True
    if mode not in ("strict", "delta"):
        raise ValueError(f"unknown LEC mode {mode!r}")
    evaluate = local.evaluate if isinstance(local, LocalSurrogate) else local
    degree = local.degree
    verts = samples.coords[list(simplex.vertex_ids)]
    fvals = samples.values[list(simplex.vertex_ids)]
    weights = _barycentric_lattice(samples.d, 2 * degree + 2)
    g = evaluate(weights @ verts)
    fmin, fmax = float(fvals.min()), float(fvals.max())
    slack = 0.5 * (fmax - fmin) if mode == "delta" else 0.0
    return bool(
        g.min() + slack >= fmin - LEC_TOL and g.max() - slack <= fmax + LEC_TOL
    )


def _fit_side(
    simplex: Simplex,
    samples: SampleSet,
    p_start: int,
    region: int | None,
    lec_mode: str,
) -> tuple[Polynomial, Stencil, bool]:
    """Degree-fallback loop: p_start, p_start - 1, ..., 1."""
    lec_reduced = False
    last_exc: Exception | None = None
    for p in range(p_start, 0, -1):
        try:
            stencil = build_stencil(simplex, samples, p, region)
        except InsufficientPoints as exc:
            last_exc = exc
            continue
        try:
            poly = fit_interpolant(stencil, samples, simplex.centroid)
        except SingularSystem as exc:
            last_exc = exc
            continue
        if p > 1 and lec_mode != "off" and not lec_check(poly, simplex, samples, lec_mode):
            lec_reduced = True
            continue
        return poly, stencil, lec_reduced
    raise InsufficientPoints(
        f"no degree in [1, {p_start}] admits a fit"
        + (f" in region {region}" if region is not None else "")
    ) from last_exc


def build_local_surrogate(
    simplex: Simplex,
    samples: SampleSet,
    p_max: int,
    mode: str = "original",
    lec: str = "off",
) -> LocalSurrogate:
    """Fit the surrogate for one simplex.

    ``lec`` is applied as given in original mode; in improved mode callers
    are expected to pass the already-resolved setting (delta limiting is
    only worthwhile at higher dimensions and is applied to one-region fits).
    """
    d = samples.d
    if mode == "original":
        poly, stencil, lec_reduced = _fit_side(simplex, samples, p_max, None, lec)
        radius, limited = stencil_radius(simplex, samples, p_max, None)
        return LocalSurrogate(
            sides=(poly,),
            stencils=(stencil,),
            combine=None,
            regions=None,
            degree=poly.degree,
            lec_reduced=lec_reduced,
            selection_radius=radius,
            count_limited=limited,
        )
    if mode != "improved":
        raise ValueError(f"unknown mode {mode!r}")

    vertex_codes = sorted({int(samples.codes[v]) for v in simplex.vertex_ids})
    if len(vertex_codes) > 2:
        raise MoreThanTwoRegions(
            f"vertices of simplex {simplex.vertex_ids} span {len(vertex_codes)} regions"
        )
    if len(vertex_codes) == 1:
        region = vertex_codes[0]
        poly, stencil, lec_reduced = _fit_side(simplex, samples, p_max, region, lec)
        radius, limited = stencil_radius(simplex, samples, p_max, region)
        return LocalSurrogate(
            sides=(poly,),
            stencils=(stencil,),
            combine=None,
            regions=(region,),
            degree=poly.degree,
            lec_reduced=lec_reduced,
            selection_radius=radius,
            count_limited=limited,
        )

    # Two regions: independent one-sided fits, combined with max or min.
    sides, stencils = [], []
    for region in vertex_codes:
        poly, stencil, _ = _fit_side(simplex, samples, p_max, region, "off")
        sides.append(poly)
        stencils.append(stencil)
    train = sorted(set(stencils[0].point_ids) | set(stencils[1].point_ids))
    pts = samples.coords[train]
    f = samples.values[train]
    lo, hi = sides[0](pts), sides[1](pts)
    scale = 1.0 + np.abs(f)
    mismatch = {
        "max": float(np.max(np.abs(np.maximum(lo, hi) - f) / scale)),
        "min": float(np.max(np.abs(np.minimum(lo, hi) - f) / scale)),
    }
    unresolved = False
    if mismatch["max"] <= COMBINE_RTOL:
        combine = "max"
    elif mismatch["min"] <= COMBINE_RTOL:
        combine = "min"
    else:
        # Neither combiner reproduces the samples: the one-sided fits
        # disagree with the kink geometry inside this cell. Keep the less
        # bad combiner and flag the cell; the driver floors its error
        # estimate by the recorded mismatch so refinement stays drawn to
        # it until the disagreement resolves.
        combine = "max" if mismatch["max"] <= mismatch["min"] else "min"
        unresolved = True
    radii = [stencil_radius(simplex, samples, p_max, r) for r in vertex_codes]
    return LocalSurrogate(
        sides=tuple(sides),
        stencils=tuple(stencils),
        combine=combine,
        regions=tuple(vertex_codes),
        degree=min(s.degree for s in sides),
        combine_mismatch=mismatch[combine],
        combiner_unresolved=unresolved,
        selection_radius=max(r for r, _ in radii),
        count_limited=any(lim for _, lim in radii),
    )


def linear_fallback_surrogate(simplex: Simplex, samples: SampleSet) -> LocalSurrogate:
    """Unrestricted linear interpolant on the vertices, flagged for refinement.

    Used when a simplex cannot get a proper surrogate yet (three or more
    vertex regions, or a region without enough samples); keeps the model
    evaluable everywhere while the driver forces the simplex to be refined.
    """
    stencil = Stencil(point_ids=tuple(simplex.vertex_ids), degree=1, region=None)
    poly = fit_interpolant(stencil, samples, simplex.centroid)
    return LocalSurrogate(
        sides=(poly,),
        stencils=(stencil,),
        combine=None,
        regions=None,
        degree=1,
        pending_refinement=True,
        selection_radius=np.inf,
        count_limited=True,
    )


def build_lower_comparator(
    local: LocalSurrogate, simplex: Simplex, samples: SampleSet
) -> LocalSurrogate:
    """Degree-(p-1) comparison surrogate for error estimation.

    Each side is refitted one degree lower by least squares on the same
    stencil; a linear side degrades to the constant minimum of its stencil
    values. Two-sided surrogates keep their combiner.
    """
    sides = []
    for poly, stencil in zip(local.sides, local.stencils):
        ids = list(stencil.point_ids)
        f = samples.values[ids]
        if poly.degree <= 1:
            sides.append(_constant(float(f.min()), samples.d, poly.center, poly.halfwidth))
            continue
        exponents = _basis_array(samples.d, poly.degree - 1)
        U = (samples.coords[ids] - poly.center) / poly.halfwidth
        V = _design_matrix(U, exponents)
        coeffs = np.linalg.lstsq(V, f, rcond=None)[0]
        sides.append(
            Polynomial(
                exponents=exponents,
                coeffs=coeffs,
                center=poly.center,
                halfwidth=poly.halfwidth,
                degree=poly.degree - 1,
            )
        )
    return LocalSurrogate(
        sides=tuple(sides),
        stencils=local.stencils,
        combine=local.combine,
        regions=local.regions,
        degree=max(local.degree - 1, 0),
    )
