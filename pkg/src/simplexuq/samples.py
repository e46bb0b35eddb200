"""Growable store of sample points with oracle values and region labels.

Indices are stable: a sample keeps the index it was appended with. By
convention (enforced by the adaptive driver, not here) the first ``2**d``
entries are the corners of the unit box and entry ``2**d`` is its center.
"""
from __future__ import annotations

from typing import Hashable

import numpy as np

from .errors import DegeneratePoint
from .geometry import COINCIDENT_TOL


class SampleSet:
    """Coordinates, values and region labels of all oracle evaluations.

    Region labels are opaque hashable identifiers; they are interned to
    dense integer codes (``codes``) for fast restriction queries. The raw
    labels stay available through ``labels``.
    """

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)
        self._coords = np.empty((32, d))
        self._values = np.empty(32)
        self._codes = np.empty(32, dtype=np.int64)
        self._n = 0
        self.labels: list[Hashable] = []
        self._label_codes: dict[Hashable, int] = {}

    @property
    def n(self) -> int:
        return self._n

    def __len__(self) -> int:
        return self._n

    @property
    def coords(self) -> np.ndarray:
        """(n, d) view of the sample coordinates. Do not mutate."""
        return self._coords[: self._n]

    @property
    def values(self) -> np.ndarray:
        return self._values[: self._n]

    @property
    def codes(self) -> np.ndarray:
        """(n,) integer region codes aligned with ``coords``."""
        return self._codes[: self._n]

    def label_code(self, label: Hashable) -> int:
        """Intern ``label`` and return its dense integer code."""
        code = self._label_codes.get(label)
        if code is None:
            code = len(self._label_codes)
            self._label_codes[label] = code
        return code

    def _grow(self) -> None:
        cap = 2 * self._coords.shape[0]
        self._coords = np.vstack([self._coords, np.empty_like(self._coords)])
        self._values = np.resize(self._values, cap)
        self._codes = np.resize(self._codes, cap)

    def nearest_distance(self, x: np.ndarray) -> float:
        """Euclidean distance from ``x`` to the closest stored sample."""
        if self._n == 0:
            return np.inf
        diff = self.coords - x
        return float(np.sqrt(np.min(np.einsum("ij,ij->i", diff, diff))))

    def append(self, x: np.ndarray, value: float, label: Hashable) -> int:
        """Store a sample and return its index.

        Raises DegeneratePoint if ``x`` coincides with an existing sample
        within ``COINCIDENT_TOL``.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected point of shape ({self.d},), got {x.shape}")
        if self.nearest_distance(x) <= COINCIDENT_TOL:
            raise DegeneratePoint(f"point {x} coincides with an existing sample")
        if self._n == self._coords.shape[0]:
            self._grow()
        idx = self._n
        self._coords[idx] = x
        self._values[idx] = value
        self._codes[idx] = self.label_code(label)
        self.labels.append(label)
        self._n += 1
        return idx
