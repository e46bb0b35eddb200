import numpy as np
import pytest

from simplexuq.adaptive import BuildConfig, build
from simplexuq.errors import InvalidModelFile
from simplexuq.io import load_model, save_model, write_csv
from simplexuq.testbed import make_test_oracle


def test_model_roundtrip_evaluates_identically(tmp_path):
    oracle = make_test_oracle("clipped-sine", 2, 0.7)
    model = build(oracle, BuildConfig(p_max=2, mode="improved", budget=70, seed=0))
    model.oracle_info = {"kind": "clipped-sine", "d": 2, "threshold": 0.7}
    path = tmp_path / "model.ssc"
    save_model(model, path)
    twin = load_model(path)
    assert twin.d == 2 and twin.n == model.n
    assert twin.config == model.config
    assert twin.oracle_info == model.oracle_info
    assert set(twin.tri.simplices) == set(model.tri.simplices)
    X = np.random.default_rng(1).random((2000, 2))
    assert np.array_equal(model.evaluate_batch(X), twin.evaluate_batch(X))


def test_model_roundtrip_preserves_exact_floats(tmp_path):
    oracle = make_test_oracle("smooth-sine", 1, 0.7)
    model = build(oracle, BuildConfig(p_max=3, budget=25, seed=5))
    path = tmp_path / "m.ssc"
    save_model(model, path)
    twin = load_model(path)
    assert np.array_equal(twin.samples.coords, model.samples.coords)
    assert np.array_equal(twin.samples.values, model.samples.values)
    assert twin.samples.labels == model.samples.labels


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ssc"
    path.write_text("NOTAMODEL\n{}\n")
    with pytest.raises(InvalidModelFile):
        load_model(path)


def test_load_rejects_truncated_payload(tmp_path):
    path = tmp_path / "trunc.ssc"
    path.write_text("SSCMODEL1\n{\"version\": 1, \"d\": 2\n")
    with pytest.raises(InvalidModelFile):
        load_model(path)


def test_load_rejects_missing_fields(tmp_path):
    path = tmp_path / "fields.ssc"
    path.write_text('SSCMODEL1\n{"version": 1, "d": 2}\n')
    with pytest.raises(InvalidModelFile):
        load_model(path)


def test_load_rejects_non_corner_layout(tmp_path):
    path = tmp_path / "layout.ssc"
    payload = (
        '{"version": 1, "d": 1, "config": {}, "oracle": null, '
        '"points": [[0.3], [1.0], [0.5]], "values": [0, 1, 2], "labels": [1, 1, 1]}'
    )
    path.write_text("SSCMODEL1\n" + payload + "\n")
    with pytest.raises(InvalidModelFile):
        load_model(path)


def test_write_csv_full_precision(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [(1, 0.1), (2, 1.0 / 3.0)])
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b"
    assert lines[1].split(",") == ["1", "0.10000000000000001"]
    assert float(lines[2].split(",")[1]) == 1.0 / 3.0
