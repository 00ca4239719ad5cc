import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ffca.archetype import Archetype
from ffca.datasets import (GENERATORS, Dataset, gen_credit_loan, gen_deceptive_world, gen_feature_engineering_world,
                           gen_ground_truth, gen_linear_world, gen_nonlinearity_example, gen_volatility_example,
                           inject_leak, inject_spurious, load_csv, split_indices, write_csv)
from ffca.errors import DataError, InsufficientDataError

from oracles import lstsq_r2, pearson


@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_generators_bitwise_deterministic(name):
    a, _ = GENERATORS[name](1000, 7)
    b, _ = GENERATORS[name](1000, 7)
    c, _ = GENERATORS[name](1000, 8)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert np.array_equal(a.val_idx, b.val_idx)
    assert a.X.tobytes() != c.X.tobytes()


def test_minimum_sizes():
    with pytest.raises(InsufficientDataError):
        gen_credit_loan(999, 0)
    with pytest.raises(InsufficientDataError):
        gen_ground_truth(99, 0)
    with pytest.raises(ValueError):
        gen_deceptive_world("other", 1000, 0)


def test_ground_truth_layout():
    data, roles, handle = gen_ground_truth(500, 0)
    assert data.d == 8 and data.X.min() >= -1 and data.X.max() <= 1
    assert handle.function.coefficient({3: 2}) == 15.0
    assert handle.function.coefficient({5: 1, 6: 1}) == 8.0
    assert roles.partners_of("hidden_interactor") == ["interactive_catalyst"]
    assert {roles.expected(n) for n in data.feature_names} == set(Archetype)


def test_credit_loan_oracle():
    data, roles = gen_credit_loan(4000, 0)
    X, y = data.X, data.y
    assert lstsq_r2(X, y) <= 0.5
    extra = np.column_stack([X, (X[:, 1] - 0.5) * (X[:, 2] - 0.5), (X[:, 3] - 0.5) ** 2])
    assert lstsq_r2(extra, y) >= 0.95
    assert roles.partners == [("base_interactor", "partner_interactor")]
    assert data.provenance["params"] == {"simple": 2.0, "interaction": 12.0, "square": 5.0}


def test_feature_engineering_oracle():
    data, _ = gen_feature_engineering_world(4000, 0)
    X, y = data.X, data.y
    assert lstsq_r2(X, y) < 0.05
    extra = np.column_stack([X, X[:, 0] ** 2, X[:, 1] * X[:, 2]])
    assert lstsq_r2(extra, y) >= 0.6
    assert abs(pearson(y, X[:, 0])) < 0.05


def test_deceptive_worlds():
    full, roles = gen_deceptive_world("full", 5000, 0)
    ablated, aroles = gen_deceptive_world("ablated", 5000, 0)
    assert ablated.d == full.d - 1 and "num_recent_inquiries" not in ablated.feature_names
    assert aroles.partners == [] and roles.partners_of("credit_history_len") == ["num_recent_inquiries"]
    assert abs(pearson(full.column("applicant_id_hash"), full.y)) < 0.05
    # variance left after the two linear drivers: the product explains most of it, then nothing is left
    def rest(d):
        return d.y - 24.0 * d.column("annual_income") - 7.0 * d.column("loan_purpose_impact")
    chl = full.column("credit_history_len")
    product = (chl - 0.5) * (full.column("num_recent_inquiries") - 0.5)
    assert lstsq_r2(chl[:, None], rest(full)) < 0.01
    assert lstsq_r2(np.column_stack([chl, product]), rest(full)) > 0.5
    assert lstsq_r2(ablated.column("credit_history_len")[:, None], rest(ablated)) < 0.01


def test_volatility_example_slices():
    data, roles = gen_volatility_example(4000, 0)
    flag = data.column("loan_purpose_Personal")
    assert set(np.unique(flag).tolist()) == {0.0, 1.0}
    dti, y = data.column("debt_to_income"), data.y
    slopes = []
    for v in (0.0, 1.0):
        m = flag == v
        A = np.column_stack([dti[m], data.column("annual_income")[m], np.ones(m.sum())])
        slopes.append(np.linalg.lstsq(A, y[m], rcond=None)[0][0])
    assert abs(slopes[0]) < 1.0 and slopes[1] > 8.0
    assert roles.expected("debt_to_income") is Archetype.VOLATILE_SPECIALIST


def test_nonlinearity_vertex():
    data, roles = gen_nonlinearity_example(2000, 0)
    p = data.provenance["params"]
    ages = np.linspace(0, 1, 101)
    risk = p["curvature"] * (ages - p["vertex"]) ** 2
    assert ages[np.argmin(risk)] == p["vertex"]
    assert roles.expected("age") is Archetype.NONLINEAR_DRIVER


def test_inject_spurious():
    base, _ = gen_linear_world(6000, 0)
    out = inject_spurious(base, seed=1)
    col = out.column("spurious_feature")
    assert out.d == base.d + 1 and np.array_equal(out.X[:, :base.d], base.X)
    assert pearson(col[base.train_idx], base.y[base.train_idx]) > 0.9
    assert len(base.val_idx) >= 1000
    assert abs(pearson(col[base.val_idx], base.y[base.val_idx])) < 0.1
    with pytest.raises(ValueError):
        inject_spurious(base, strength=1.5)


def test_inject_leak():
    base, _ = gen_linear_world(3000, 0)
    exact = inject_leak(base)
    assert exact.d == base.d + 1 and np.array_equal(exact.X[:, :base.d], base.X)
    assert pearson(exact.column("leaky_feature"), base.y) == pytest.approx(1.0, abs=1e-12)
    r = [pearson(inject_leak(base, s, 3).column("leaky_feature"), base.y) for s in (0.1, 0.5, 2.0)]
    assert r[0] > r[1] > r[2]


def test_load_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    d = load_csv(p, "y")
    assert d.n == 3 and d.feature_names == ["a", "b"] and d.y.tolist() == [3.0, 6.0, 9.0]
    with pytest.raises(DataError, match="'target'"):
        load_csv(p, "target")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,2\nabc,3\n")
    with pytest.raises(DataError, match="line 3.*'a'"):
        load_csv(bad, "y")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_csv(empty, "y")
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv", "y")


def test_csv_round_trip(tmp_path):
    data, _ = gen_linear_world(200, 0)
    write_csv(data, tmp_path / "lin.csv")
    back = load_csv(tmp_path / "lin.csv", "target")
    assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)
    side = json.loads((tmp_path / "lin.csv.provenance.json").read_text())
    assert side["provenance"]["generator"] == "linear"


def test_dataset_rejects_bad_split():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 1)), np.zeros(3), ["a"], "regression", [0, 1], [1, 2])
    with pytest.raises(DataError):
        Dataset(np.full((2, 1), np.nan), np.zeros(2), ["a"], "regression", [0], [1])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5000), st.integers(0, 2 ** 32 - 1))
def test_split_disjoint_and_covering(n, seed):
    tr, va = split_indices(n, seed)
    assert len(np.intersect1d(tr, va)) == 0
    assert np.array_equal(np.sort(np.concatenate([tr, va])), np.arange(n))
