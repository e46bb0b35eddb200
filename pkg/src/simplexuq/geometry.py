"""Simplex geometry and incremental n-dimensional Delaunay triangulation.

Coordinates live in the closed unit box ``[0, 1]^d``. The triangulation is
seeded with the ``2**d`` box corners (so the convex hull is always the box
itself) and grown one point at a time with the Bowyer-Watson algorithm:
collect the simplices whose circumsphere contains the new point, carve out
that cavity and reconnect its boundary facets to the new vertex.

Predicates are evaluated with relative tolerances. Near-zero in-sphere or
orientation determinants are resolved by a deterministic cavity repair step
(facets are processed in sorted vertex-id order), so the same insertion
sequence always produces the same triangulation.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePoint,
    DegenerateSimplex,
    PointLocationFailure,
    PredicateFailure,
)

INSPHERE_RTOL = 1e-10
DEGENERACY_RTOL = 1e-10
COINCIDENT_TOL = 1e-12
BARY_TOL = 1e-12


def unit_box_corners(d: int) -> np.ndarray:
    """Corners of [0,1]^d in binary counting order, shape (2**d, d)."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=d)))


def simplex_volume(vertices: np.ndarray) -> float:
    """Volume of the simplex spanned by ``vertices`` ((d+1, d) array)."""
    vertices = np.asarray(vertices, dtype=float)
    d = vertices.shape[1]
    det = np.linalg.det(vertices[1:] - vertices[0])
    return abs(det) / math.factorial(d)

def simplex_centroid(vertices: np.ndarray) -> np.ndarray:
    return np.asarray(vertices, dtype=float).mean(axis=0)


def barycentric_coordinates(vertices: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``x`` w.r.t. a non-degenerate simplex."""
    vertices = np.asarray(vertices, dtype=float)
    rest = np.linalg.solve((vertices[1:] - vertices[0]).T, np.asarray(x) - vertices[0])
    return np.concatenate([[1.0 - rest.sum()], rest])


def sample_unit_simplex(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the unit simplex {s_i >= 0, sum s_i <= 1}.

    Uses the exponential-spacings construction: draw d+1 standard
    exponentials, normalize by their total, drop the last coordinate.
    """
    while True:
        u = rng.random(d + 1)
        if np.any(u == 0.0):
            continue
        e = -np.log(u)
        return e[:d] / e.sum()


def sample_unit_simplex_batch(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform draws from the unit simplex, shape (n, d)."""
    u = np.clip(rng.random((n, d + 1)), 1e-300, None)
    e = -np.log(u)
    return e[:, :d] / e.sum(axis=1, keepdims=True)


def sample_in_simplex(vertices: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the interior of an arbitrary simplex."""
    vertices = np.asarray(vertices, dtype=float)
    s = sample_unit_simplex(vertices.shape[1], rng)
    return vertices[0] + (vertices[1:] - vertices[0]).T @ s


def subsimplex(vertices: np.ndarray) -> np.ndarray:
    """The interior simplex whose vertices are the facet centers.

    Vertex l of the result is the centroid of the facet opposite vertex l,
    i.e. the mean of the other d vertices. Its volume is vol / d**d.
    """
    vertices = np.asarray(vertices, dtype=float)
    d = vertices.shape[1]
    return (vertices.sum(axis=0) - vertices) / d


@dataclass
class Simplex:
    """One simplex of the triangulation (vertex ids are sorted)."""

    vertex_ids: tuple[int, ...]
    volume: float
    centroid: np.ndarray
    orient: int
    _v0: np.ndarray | None = field(default=None, repr=False)
    _binv: np.ndarray | None = field(default=None, repr=False)


def _hadamard_rows(m: np.ndarray) -> float:
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    return float(np.prod(norms)) + 1e-300


class Triangulation:
    """Incremental Delaunay triangulation of points in [0,1]^d."""

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)
        self._coords = np.empty((max(32, 2 ** d + 1), d))
        self._n_vertices = 0
        self.simplices: dict[int, Simplex] = {}
        self._facets: dict[frozenset[int], list[int]] = {}
        self._next_id = 0
        self.generation = 0
        self._hint: int | None = None
        # Sign of the in-sphere determinant for a point strictly inside the
        # circumsphere of a positively oriented simplex; depends on d only.
        self._inside_sign = self._calibrate_inside_sign(self.d)

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def from_box_corners(cls, d: int) -> "Triangulation":
        """Triangulation of the 2**d corners of [0,1]^d.

        All corners lie on a common sphere, so any triangulation of them is
        Delaunay; we use the standard one induced by coordinate orderings
        (d! simplices of volume 1/d! each).
        """
        tri = cls(d)
        for corner in unit_box_corners(d):
            tri._append_vertex(corner)
        for perm in itertools.permutations(range(d)):
            bits = [0] * d
            ids = [0]
            for axis in perm:
                bits[axis] = 1
                ids.append(sum(b << (d - 1 - i) for i, b in enumerate(bits)))
            tri._add_simplex(tuple(sorted(ids)))
        tri.generation += 1
        return tri

    @property
    def n_vertices(self) -> int:
        return self._n_vertices

    @property
    def coords(self) -> np.ndarray:
        """(n_vertices, d) view of vertex coordinates. Do not mutate."""
        return self._coords[: self._n_vertices]

    def total_volume(self) -> float:
        return float(sum(self.simplices[sid].volume for sid in sorted(self.simplices)))

    def neighbors(self, sid: int) -> list[int | None]:
        """Facet-adjacent simplex ids, entry k opposite the k-th vertex."""
        rec = self.simplices[sid]
        out: list[int | None] = []
        for k in range(self.d + 1):
            facet = frozenset(rec.vertex_ids[:k] + rec.vertex_ids[k + 1:])
            owners = self._facets.get(facet, ())
            other = [o for o in owners if o != sid]
            out.append(other[0] if other else None)
        return out

    # ------------------------------------------------------------------
    # internals

    @staticmethod
    def _calibrate_inside_sign(d: int) -> int:
        verts = np.vstack([np.zeros(d), np.eye(d)])
        q = verts.mean(axis=0)
        rel = verts - q
        m = np.hstack([rel, np.einsum("ij,ij->i", rel, rel)[:, None]])
        return 1 if np.linalg.det(m) > 0 else -1

    def _append_vertex(self, p: np.ndarray) -> int:
        if self._n_vertices == self._coords.shape[0]:
            self._coords = np.vstack([self._coords, np.empty_like(self._coords)])
        self._coords[self._n_vertices] = p
        self._n_vertices += 1
        return self._n_vertices - 1

    def _make_record(self, ids: tuple[int, ...]) -> Simplex:
        verts = self._coords[list(ids)]
        edges = verts[1:] - verts[0]
        det = np.linalg.det(edges)
        if abs(det) <= DEGENERACY_RTOL * _hadamard_rows(edges):
            raise DegenerateSimplex(f"simplex {ids} has numerically zero volume")
        return Simplex(
            vertex_ids=ids,
            volume=abs(det) / math.factorial(self.d),
            centroid=verts.mean(axis=0),
            orient=1 if det > 0 else -1,
        )

    def _add_simplex(self, ids: tuple[int, ...], rec: Simplex | None = None) -> int:
        if rec is None:
            rec = self._make_record(ids)
        sid = self._next_id
        self._next_id += 1
        self.simplices[sid] = rec
        for k in range(self.d + 1):
            facet = frozenset(ids[:k] + ids[k + 1:])
            self._facets.setdefault(facet, []).append(sid)
        return sid

    def _remove_simplex(self, sid: int) -> None:
        rec = self.simplices.pop(sid)
        ids = rec.vertex_ids
        for k in range(self.d + 1):
            facet = frozenset(ids[:k] + ids[k + 1:])
            owners = self._facets[facet]
            owners.remove(sid)
            if not owners:
                del self._facets[facet]

    def _insphere(self, sid: int, p: np.ndarray) -> int:
        """+1 if p is strictly inside the circumsphere, -1 outside, 0 tie."""
        rec = self.simplices[sid]
        rel = self._coords[list(rec.vertex_ids)] - p
        m = np.hstack([rel, np.einsum("ij,ij->i", rel, rel)[:, None]])
        det = np.linalg.det(m)
        if abs(det) <= INSPHERE_RTOL * _hadamard_rows(m):
            return 0
        sign = 1 if det > 0 else -1
        return 1 if sign * rec.orient == self._inside_sign else -1

    def _coplanar_with(self, facet_ids: tuple[int, ...], p: np.ndarray) -> bool:
        verts = self._coords[list(facet_ids)]
        edges = np.vstack([verts[1:] - verts[0], (p - verts[0])[None]]) \
            if self.d > 1 else (p - verts[0])[None]
        det = np.linalg.det(edges)
        return abs(det) <= DEGENERACY_RTOL * _hadamard_rows(edges)

    def _bary(self, sid: int, x: np.ndarray) -> np.ndarray:
        rec = self.simplices[sid]
        if rec._binv is None:
            verts = self._coords[list(rec.vertex_ids)]
            rec._v0 = verts[0].copy()
            rec._binv = np.linalg.inv((verts[1:] - verts[0]).T)
        rest = rec._binv @ (x - rec._v0)
        return np.concatenate([[1.0 - rest.sum()], rest])

    def _walk(self, x: np.ndarray, hint: int | None = None) -> int:
        sid = hint if hint in self.simplices else self._hint
        if sid not in self.simplices:
            sid = min(self.simplices)
        seen: set[int] = set()
        for _ in range(4 * len(self.simplices) + 16):
            if sid in seen:
                break
            seen.add(sid)
            b = self._bary(sid, x)
            k = int(np.argmin(b))
            if b[k] >= -BARY_TOL:
                return sid
            nxt = self.neighbors(sid)[k]
            if nxt is None:
                break
            sid = nxt
        # Robust fallback: scan everything, keep the best containment score.
        best_sid, best_score = -1, -np.inf
        for s in sorted(self.simplices):
            score = float(np.min(self._bary(s, x)))
            if score > best_score:
                best_sid, best_score = s, score
        if best_score < -1e-9:
            raise PointLocationFailure(f"point {x} lies outside the triangulated domain")
        return best_sid

    # ------------------------------------------------------------------
    # queries

    def locate(self, x: np.ndarray, hint: int | None = None) -> int:
        """Id of a simplex containing ``x``; ties go to the smallest id."""
        x = np.asarray(x, dtype=float)
        start = self._walk(x, hint)
        best = start
        stack = [start]
        seen = {start}
        while stack:
            sid = stack.pop()
            for nb in self.neighbors(sid):
                if nb is None or nb in seen:
                    continue
                seen.add(nb)
                if float(np.min(self._bary(nb, x))) >= -BARY_TOL:
                    stack.append(nb)
                    best = min(best, nb)
        self._hint = best
        return best

    def locate_batch(self, X: np.ndarray) -> np.ndarray:
        """Vectorized point location through a uniform grid over the box.

        Returns the smallest containing simplex id per row of ``X``.
        """
        X = np.asarray(X, dtype=float)
        ids = sorted(self.simplices)
        d = self.d
        g = int(np.clip(round(len(ids) ** (1.0 / d)), 1, 48))
        # Register each simplex in every grid cell its bbox touches.
        cells: dict[int, list[int]] = {}
        strides = np.array([g ** (d - 1 - i) for i in range(d)])
        for sid in ids:
            verts = self._coords[list(self.simplices[sid].vertex_ids)]
            lo = np.clip(np.floor(verts.min(axis=0) * g).astype(int), 0, g - 1)
            hi = np.clip(np.floor(verts.max(axis=0) * g).astype(int), 0, g - 1)
            for combo in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))):
                cells.setdefault(int(np.dot(combo, strides)), []).append(sid)
        # Lazily build the affine inverses for all simplices.
        for sid in ids:
            if self.simplices[sid]._binv is None:
                self._bary(sid, self._coords[self.simplices[sid].vertex_ids[0]])
        pt_cells = np.clip(np.floor(X * g).astype(int), 0, g - 1) @ strides
        out = np.full(len(X), -1, dtype=np.int64)
        order = np.argsort(pt_cells, kind="stable")
        sorted_cells = pt_cells[order]
        boundaries = np.flatnonzero(np.diff(sorted_cells)) + 1
        groups = np.split(order, boundaries)
        for grp in groups:
            cand = cells.get(int(pt_cells[grp[0]]), [])
            if not cand:
                continue
            pts = X[grp]
            v0s = np.stack([self.simplices[s]._v0 for s in cand])
            binvs = np.stack([self.simplices[s]._binv for s in cand])
            diff = pts[None, :, :] - v0s[:, None, :]
            rest = np.einsum("cij,ckj->cki", binvs, diff)
            b0 = 1.0 - rest.sum(axis=2)
            inside = (rest.min(axis=2) >= -BARY_TOL) & (b0 >= -BARY_TOL)
            found = inside.any(axis=0)
            first = inside.argmax(axis=0)
            cand_arr = np.asarray(cand, dtype=np.int64)
            out[grp[found]] = cand_arr[first[found]]
        missing = np.flatnonzero(out < 0)
        for i in missing:
            out[i] = self.locate(X[i])
        return out

    # ------------------------------------------------------------------
    # insertion

    def insert(self, p: np.ndarray) -> tuple[int, list[int], list[int]]:
        """Bowyer-Watson insertion of ``p``.

        Returns (vertex id, created simplex ids, removed simplex ids).
        Raises DegeneratePoint for a coincident point and PredicateFailure
        if the conflict cavity cannot be stabilized.
        """
        p = np.asarray(p, dtype=float)
        if p.shape != (self.d,):
            raise ValueError(f"expected point of shape ({self.d},)")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError(f"point {p} lies outside [0,1]^{self.d}")
        if self._n_vertices:
            diff = self.coords - p
            if np.min(np.einsum("ij,ij->i", diff, diff)) <= COINCIDENT_TOL ** 2:
                raise DegeneratePoint(f"point {p} coincides with an existing vertex")

        start = self._walk(p)
        conflict = {start}
        stack = [start]
        while stack:
            sid = stack.pop()
            for nb in self.neighbors(sid):
                if nb is None or nb in conflict:
                    continue
                if self._insphere(nb, p) > 0:
                    conflict.add(nb)
                    stack.append(nb)

        # Stabilize the cavity: a boundary facet coplanar with p would spawn
        # a degenerate simplex. On the hull that facet is simply split (skip
        # it); inside, absorb the neighbor across it and try again.
        skip: set[frozenset[int]] = set()
        for _ in range(len(self.simplices) + 1):
            boundary: list[tuple[tuple[int, ...], int | None]] = []
            for sid in sorted(conflict):
                ids = self.simplices[sid].vertex_ids
                for k in range(self.d + 1):
                    facet = ids[:k] + ids[k + 1:]
                    owners = self._facets[frozenset(facet)]
                    others = [o for o in owners if o != sid]
                    other = others[0] if others else None
                    if other is None or other not in conflict:
                        boundary.append((facet, other))
            absorb = set()
            for facet, other in sorted(boundary):
                if frozenset(facet) in skip:
                    continue
                if self._coplanar_with(facet, p):
                    if other is None:
                        skip.add(frozenset(facet))
                    else:
                        absorb.add(other)
            if not absorb:
                break
            conflict |= absorb
        else:
            raise PredicateFailure(f"conflict cavity for {p} did not stabilize")

        # Build all replacement records before mutating, so a borderline
        # degeneracy cannot leave the triangulation half-updated.
        vid = self._append_vertex(p)
        try:
            new_recs = [
                (tuple(sorted(facet + (vid,))), None)
                for facet, _ in sorted(boundary)
                if frozenset(facet) not in skip
            ]
            new_recs = [(ids, self._make_record(ids)) for ids, _ in new_recs]
        except DegenerateSimplex as exc:
            self._n_vertices -= 1
            raise PredicateFailure(f"unstable cavity boundary for {p}: {exc}") from exc
        removed = sorted(conflict)
        for sid in removed:
            self._remove_simplex(sid)
        created = [self._add_simplex(ids, rec) for ids, rec in new_recs]
        self.generation += 1
        self._hint = created[0] if created else None
        return vid, created, removed


def delaunay_insert(tri: Triangulation, p: np.ndarray) -> Triangulation:
    """Insert ``p`` into ``tri`` in place and return it."""
    tri.insert(p)
    return tri
