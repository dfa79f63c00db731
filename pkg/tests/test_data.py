import math

import numpy as np
import pytest

from copyforge.core import Dataset
from copyforge.data import (
    ColumnSchema,
    DataParseError,
    SchemaError,
    apply_standardize,
    fit_standardize,
    load_bundled,
    load_csv,
    make_moons,
    make_volume_imbalance,
    stratified_split,
    volume_imbalance_radius,
)

SCHEMA = ColumnSchema(
    kinds={"a": "numeric", "color": "nominal", "cls": "target"},
    categories={"color": ["red", "green"], "cls": ["no", "yes"]},
)


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_standardize_three_values():
    ds = Dataset([[1.0], [2.0], [3.0]], [0, 1, 0], k=2)
    scaler, out = fit_standardize(ds)
    assert scaler.mean[0] == 2.0
    assert np.allclose(out.X[:, 0], [-1.224744871391589, 0.0, 1.224744871391589])


def test_standardize_drops_constant_column():
    ds = Dataset([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]], [0, 1, 0], k=2)
    scaler, out = fit_standardize(ds)
    assert scaler.dropped == (1,)
    assert out.dim == 1
    test = apply_standardize(scaler, Dataset([[2.0, 7.0]], [0], k=2))
    assert test.X.tolist() == [[0.0]]


def test_standardize_round_trip():
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(3, 2, (50, 3)), rng.integers(0, 2, 50), k=2)
    scaler, out = fit_standardize(ds)
    assert np.allclose(out.X.mean(axis=0), 0)
    assert np.allclose(out.X.std(axis=0), 1)
    assert np.allclose(scaler.inverse_transform(out.X), ds.X)


def test_load_csv_encodes_nominal_and_target(tmp_path):
    p = _write(tmp_path, "a,color,cls\n1.5,red,no\n2.5,green,yes\n")
    ds = load_csv(p, SCHEMA)
    assert ds.X.tolist() == [[1.5, 0.0], [2.5, 1.0]]
    assert ds.y.tolist() == [0, 1]
    assert ds.class_names == ("no", "yes")


def test_load_csv_drops_missing_rows(tmp_path):
    p = _write(tmp_path, "a,color,cls\n1,red,no\n?,red,yes\n3,green,\n4,green,yes\n")
    ds, rep = load_csv(p, SCHEMA, return_report=True)
    assert len(ds) == 2
    assert rep.rows_read == 4 and rep.rows_dropped == 2


def test_load_csv_unknown_category_is_an_error(tmp_path):
    p = _write(tmp_path, "a,color,cls\n1,blue,no\n")
    with pytest.raises(DataParseError):
        load_csv(p, SCHEMA)


def test_load_csv_all_rows_dropped(tmp_path):
    p = _write(tmp_path, "a,color,cls\n?,red,no\n")
    with pytest.raises(DataParseError):
        load_csv(p, SCHEMA)


def test_load_csv_missing_column(tmp_path):
    p = _write(tmp_path, "a,cls\n1,no\n")
    with pytest.raises(SchemaError):
        load_csv(p, SCHEMA)


def test_schema_validation():
    with pytest.raises(SchemaError):
        ColumnSchema(kinds={"a": "numeric"})
    with pytest.raises(SchemaError):
        ColumnSchema(kinds={"a": "nominal", "t": "target"})
    with pytest.raises(SchemaError):
        ColumnSchema(kinds={"a": "nominal", "t": "target"}, categories={"a": ["x", "x"]})


def test_stratified_split_counts():
    ds = Dataset(np.arange(20.0).reshape(-1, 1), [0] * 10 + [1] * 10, k=2)
    train, test = stratified_split(ds, 0.4, seed=0)
    assert len(train) == 12 and len(test) == 8
    assert np.bincount(test.y).tolist() == [4, 4]


def test_stratified_split_two_member_class():
    ds = Dataset([[0.0], [1.0]], [0, 0], k=1)
    train, test = stratified_split(ds, 0.2, seed=0)
    assert len(train) == 1 and len(test) == 1


def test_stratified_split_is_seeded():
    ds = make_moons(100, seed=3)
    a = stratified_split(ds, 0.2, seed=5)[1].X
    b = stratified_split(ds, 0.2, seed=5)[1].X
    assert np.array_equal(a, b)


def test_moons_noise_free_radius():
    ds = make_moons(200, noise_std=0.0, seed=0)
    upper = ds.X[ds.y == 0]
    lower = ds.X[ds.y == 1]
    assert np.allclose(np.hypot(upper[:, 0], upper[:, 1]), 1.0)
    assert np.allclose(np.hypot(lower[:, 0] - 1.0, lower[:, 1] - 0.5), 1.0)


def test_volume_imbalance_balanced_labels():
    ds = make_volume_imbalance(1000, seed=0)
    assert np.bincount(ds.y).tolist() == [500, 500]
    r = volume_imbalance_radius()
    inside = np.hypot(ds.X[:, 0], ds.X[:, 1]) <= r
    assert np.array_equal(inside, ds.y == 1)
    assert math.pi * r**2 / 49.0 == pytest.approx(0.05)


def test_volume_imbalance_uniform_fraction():
    rng = np.random.default_rng(0)
    P = rng.uniform(-3.5, 3.5, (10_000, 2))
    frac = np.mean(np.hypot(P[:, 0], P[:, 1]) <= volume_imbalance_radius())
    assert abs(frac - 0.05) <= 0.03


def test_bundled_datasets_load():
    iris = load_bundled("iris")
    assert len(iris) == 150 and iris.k == 3 and iris.dim == 4
    assert np.bincount(iris.y).tolist() == [50, 50, 50]
    bc = load_bundled("breast-cancer-wisc")
    assert len(bc) == 683 and bc.k == 2 and bc.dim == 9
    with pytest.raises(ValueError):
        load_bundled("nope")
