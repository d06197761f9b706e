import json

import numpy as np
import numpy.testing as npt
import pytest

from lpvred import serialize
from lpvred.lpv import build_variation_dataset, full_order_lpv
from lpvred.nnet import TrainConfig, train
from lpvred.pca import fit_pca
from lpvred.simulate import ConstantSignal, integrate_rk4


def test_container_round_trip(tmp_path):
    arrays = {
        "a": np.arange(12.0).reshape(3, 4),
        "b": np.array([1, 2, 3], dtype=np.int64),
        "flag": np.array([1, 0, 1], dtype=np.uint8),
    }
    path = tmp_path / "t.bin"
    serialize.write_container(path, "test-kind", {"alpha": 1.5, "name": "x"}, arrays)
    kind, meta, loaded = serialize.read_container(path)
    assert kind == "test-kind"
    assert meta == {"alpha": 1.5, "name": "x"}
    for k in arrays:
        npt.assert_array_equal(loaded[k], arrays[k])


def test_container_kind_checked(tmp_path):
    path = tmp_path / "t.bin"
    serialize.write_container(path, "alpha", {}, {"x": np.zeros(2)})
    with pytest.raises(ValueError):
        serialize.read_container(path, expect_kind="beta")
    with open(tmp_path / "junk.bin", "wb") as fh:
        fh.write(b"not a container")
    with pytest.raises(ValueError):
        serialize.read_container(tmp_path / "junk.bin")


def test_container_bytes_deterministic(tmp_path):
    arrays = {"x": np.linspace(0, 1, 7)}
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    serialize.write_container(p1, "k", {"s": 1}, arrays)
    serialize.write_container(p2, "k", {"s": 1}, arrays)
    assert p1.read_bytes() == p2.read_bytes()


def test_sample_set_round_trip(tmp_path, benchmark_dataset):
    path = tmp_path / "ds.lpvd"
    serialize.save_sample_set(path, benchmark_dataset)
    loaded = serialize.load_sample_set(path)
    npt.assert_array_equal(loaded.X, benchmark_dataset.X)
    npt.assert_array_equal(loaded.U, benchmark_dataset.U)
    npt.assert_array_equal(loaded.traj_id, benchmark_dataset.traj_id)
    assert loaded.seed == benchmark_dataset.seed
    assert loaded.model_name == benchmark_dataset.model_name


def test_trajectory_round_trip_and_csv(tmp_path, benchmark):
    tr = integrate_rk4(benchmark, np.array([1.0, 0.0, 0.5]), ConstantSignal([0.3]), h=0.01, T=1.0)
    path = tmp_path / "traj.bin"
    serialize.save_trajectory(path, tr)
    loaded = serialize.load_trajectory(path)
    npt.assert_array_equal(loaded.X, tr.X)
    assert loaded.h == tr.h
    csv_path = tmp_path / "traj.csv"
    serialize.trajectory_to_csv(csv_path, tr)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,x0,x1,x2,u0"
    assert len(lines) == tr.n_valid + 1
    first = [float(v) for v in lines[1].split(",")]
    npt.assert_allclose(first, [0.0, 1.0, 0.0, 0.5, 0.3])


def test_lpv_round_trip(tmp_path, benchmark):
    lpv = full_order_lpv(benchmark)
    lpv.region_lo = -np.ones(lpv.n_theta)
    lpv.region_hi = np.ones(lpv.n_theta)
    path = tmp_path / "m.lpvm"
    serialize.save_lpv(path, lpv)
    loaded = serialize.load_lpv(path)
    npt.assert_array_equal(loaded.M0, lpv.M0)
    npt.assert_array_equal(loaded.coeffs, lpv.coeffs)
    npt.assert_array_equal(loaded.region_lo, lpv.region_lo)
    assert loaded.layout == lpv.layout
    assert loaded.method == "full-order"


def test_pca_round_trip(tmp_path, benchmark, benchmark_split, benchmark_variation):
    vtrain, _ = benchmark_variation
    _, val = benchmark_split
    red = fit_pca(vtrain, "minmax", 2)
    path = tmp_path / "r.lpvm"
    serialize.save_pca(path, red)
    loaded = serialize.load_pca(path)
    npt.assert_array_equal(loaded.U_s, red.U_s)
    npt.assert_array_equal(loaded.singular_values, red.singular_values)
    npt.assert_array_equal(loaded.reduced_theta(benchmark, val.X, val.U),
                           red.reduced_theta(benchmark, val.X, val.U))


def test_dnn_round_trip(tmp_path, benchmark, benchmark_split, benchmark_variation):
    vtrain, vval = benchmark_variation
    _, val = benchmark_split
    cfg = TrainConfig(learning_rate=1e-3, epochs=3, hidden=(8,), seed=5)
    red = train(benchmark, vtrain, vval, 2, cfg)
    path = tmp_path / "n.lpvn"
    serialize.save_dnn(path, red)
    loaded = serialize.load_dnn(path)
    npt.assert_array_equal(loaded.encode(benchmark, val.X, val.U),
                           red.encode(benchmark, val.X, val.U))
    npt.assert_array_equal(loaded.predict_pi(benchmark, val), red.predict_pi(benchmark, val))
    assert loaded.config.hidden == (8,)
    assert loaded.history["best_epoch"] == red.history["best_epoch"]


def test_csv_float_formatting_round_trips(tmp_path):
    values = [0.1, 1e-17, 123456.789012345, float(np.float64(np.pi))]
    path = tmp_path / "v.csv"
    serialize.write_csv(path, ["v"], ([v] for v in values))
    lines = path.read_text().splitlines()[1:]
    for text, v in zip(lines, values):
        assert float(text) == v


def test_manifest_stable(tmp_path):
    f1 = tmp_path / "x.json"
    serialize.write_json(f1, {"a": 1})
    m1 = serialize.write_manifest(tmp_path / "m1.json", tmp_path, [f1], "0.1.0", "cafe")
    m2 = serialize.write_manifest(tmp_path / "m2.json", tmp_path, [f1], "0.1.0", "cafe")
    assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
    assert m1 == m2
    assert m1["files"][0]["path"] == "x.json"


def test_spectrum_and_error_csv(tmp_path, benchmark, benchmark_split, benchmark_variation):
    from lpvred.metrics import evaluate_reduction

    vtrain, vval = benchmark_variation
    _, val = benchmark_split
    red = fit_pca(vtrain, "minmax", 2)
    serialize.spectrum_to_csv(tmp_path / "s.csv", red.singular_values, "minmax")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "index,singular_value,normalization"
    assert len(rows) == len(red.singular_values) + 1

    rep = evaluate_reduction(benchmark, red, val, vval)
    serialize.error_reports_to_csv(tmp_path / "e.csv", [rep])
    body = (tmp_path / "e.csv").read_text().splitlines()
    assert len(body) == 5  # header + four measures
    assert body[1].startswith("pca,minmax,2,validation,")
