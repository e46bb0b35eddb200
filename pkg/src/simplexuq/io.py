"""Serialization: model files and CSV output.

A model file is the magic line ``SSCMODEL1`` followed by one JSON document
holding the build configuration, the oracle description and the sample list
(coordinates, values, labels). Everything else (triangulation, surrogates)
is rebuilt deterministically on load by replaying the insertion order, so
loading never calls the oracle.
"""
from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .adaptive import BuildConfig, SurrogateModel, _fit_one
from .errors import InvalidModelFile
from .estimators import EstimatorState
from .geometry import Triangulation, unit_box_corners
from .samples import SampleSet

MODEL_MAGIC = "SSCMODEL1"


def save_model(model: SurrogateModel, path) -> None:
    payload = {
        "version": 1,
        "d": model.d,
        "config": asdict(model.config),
        "oracle": model.oracle_info,
        "points": model.samples.coords.tolist(),
        "values": model.samples.values.tolist(),
        "labels": list(model.samples.labels),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_MAGIC + "\n")
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> SurrogateModel:
    """Rebuild a surrogate model from its sample list.

    The estimator state is restarted empty (the per-sample history it
    tracks is not stored); statistics and evaluation do not need it.
    """
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != MODEL_MAGIC:
            raise InvalidModelFile(f"expected magic {MODEL_MAGIC!r}, found {magic!r}")
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidModelFile(f"malformed model payload: {exc}") from exc
    try:
        d = int(payload["d"])
        config = BuildConfig(**payload["config"])
        points = np.asarray(payload["points"], dtype=float)
        values = payload["values"]
        labels = payload["labels"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModelFile(f"missing or invalid model fields: {exc}") from exc
    n_init = 2 ** d + 1
    if len(points) < n_init:
        raise InvalidModelFile("model holds fewer samples than the seed layout")
    if not np.array_equal(points[: 2 ** d], unit_box_corners(d)):
        raise InvalidModelFile("first samples are not the box corners")
    tri = Triangulation.from_box_corners(d)
    samples = SampleSet(d)
    for i in range(2 ** d):
        samples.append(points[i], values[i], labels[i])
    for i in range(2 ** d, len(points)):
        tri.insert(points[i])
        samples.append(points[i], values[i], labels[i])
    model = SurrogateModel(
        samples=samples,
        tri=tri,
        surrogates={},
        estimator=EstimatorState(policy=config.estimator, n_initial=n_init),
        config=config,
        oracle_info=payload.get("oracle"),
    )
    for sid in sorted(tri.simplices):
        model.surrogates[sid] = _fit_one(model, sid)
    return model


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
