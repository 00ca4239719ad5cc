"""Synthetic worlds with known feature roles, pathology injectors and CSV ingestion.

All generators draw from ``numpy.random.default_rng(seed)`` and are bitwise
deterministic. Unless stated otherwise features are uniform on ``[0, 1]``
(so the analysis-time rank map is close to the identity) and the target
noise is Gaussian with a standard deviation of 5% of the noiseless signal's.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .archetype import Archetype
from .errors import DataError, InsufficientDataError
from .functions import Polynomial
from .model import TaskKind

NOISE_FRACTION = 0.05
VAL_FRACTION = 0.2


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    task: TaskKind
    train_idx: np.ndarray
    val_idx: np.ndarray
    provenance: dict = field(default_factory=dict)
    target_name: str = "target"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.task = TaskKind(self.task)
        self.train_idx = np.asarray(self.train_idx, dtype=np.intp)
        self.val_idx = np.asarray(self.val_idx, dtype=np.intp)
        n, d = self.X.shape
        if len(self.y) != n or len(self.feature_names) != d:
            raise DataError("X, y and feature_names disagree in size")
        if len(set(self.feature_names)) != d:
            raise DataError("feature names must be unique")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DataError("dataset contains NaN or infinite values")
        both = np.concatenate([self.train_idx, self.val_idx])
        if len(both) != n or not np.array_equal(np.sort(both), np.arange(n)):
            raise DataError("train/validation split must be disjoint and cover every row")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def with_columns(self, names, columns, provenance: dict) -> "Dataset":
        cols = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns]) if names else np.empty((self.n, 0))
        return Dataset(np.hstack([self.X, cols]), self.y.copy(), self.feature_names + list(names), self.task,
                       self.train_idx.copy(), self.val_idx.copy(), provenance, self.target_name)


@dataclass
class RoleSpec:
    """Designed archetype and dominant component per feature, plus interaction partners."""

    roles: dict
    partners: list = field(default_factory=list)

    def __post_init__(self):
        self.roles = {k: (Archetype(a), c) for k, (a, c) in self.roles.items()}
        pairs = set()
        for a, b in self.partners:
            pairs.add(tuple(sorted((a, b))))
        self.partners = sorted(pairs)

    def expected(self, name: str) -> Archetype:
        return self.roles[name][0]

    def partners_of(self, name: str) -> list[str]:
        return sorted({b if a == name else a for a, b in self.partners if name in (a, b)})

    def to_dict(self) -> dict:
        return {"roles": {k: {"archetype": a.value, "component": c} for k, (a, c) in self.roles.items()},
                "partners": [list(p) for p in self.partners]}


def split_indices(n: int, seed: int, val_fraction: float = VAL_FRACTION):
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(val_fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _require(n: int, minimum: int, name: str):
    if n < minimum:
        raise InsufficientDataError(f"{name} needs n >= {minimum}, got {n}")


def _finish(name, X, signal, names, seed, rng, params, task=TaskKind.REGRESSION) -> Dataset:
    noise_sd = NOISE_FRACTION * float(np.std(signal))
    y = signal + rng.normal(0.0, noise_sd, size=len(signal)) if noise_sd > 0 else signal.copy()
    train_idx, val_idx = split_indices(len(y), seed)
    prov = {"generator": name, "seed": seed, "n": len(y), "params": params, "noise_sd": noise_sd}
    return Dataset(X, y, list(names), task, train_idx, val_idx, prov)


# ground truth -----------------------------------------------------------------------------------

GROUND_TRUTH_FEATURES = [
    "workhorse", "stable_contributor", "noise", "nonlinear_driver",
    "volatile_specialist", "hidden_interactor", "interactive_catalyst", "complex_driver",
]
CONTEXT_VALUES = (-2.0, 2.0)


def ground_truth_function() -> Polynomial:
    """The deterministic 8-feature function; variable 8 is the latent context."""
    w, st, nz, nl, vol, hid, cat, cd = range(8)
    ctx = 8
    terms = [
        (30.0, {w: 1}),
        (12.0, {st: 1}),
        (15.0, {nl: 2}),
        (8.0, {vol: 1, ctx: 1}),
        (0.1, {hid: 1}),
        (8.0, {hid: 1, cat: 1}),
        (24.0, {cat: 1}),
        (25.0, {cd: 1}),
        (12.0, {cd: 2}),
        (4.0, {cd: 1, ctx: 1}),
    ]
    return Polynomial(8, terms, n_context=1)


@dataclass
class GroundTruthHandle:
    """The ground-truth function together with the latent context of every dataset row."""

    function: Polynomial
    context: np.ndarray

    def at_rows(self, data: Dataset, rows):
        rows = np.asarray(rows)
        return data.X[rows], self.function.bind(self.context[rows])


def gen_ground_truth(n: int, seed: int):
    """Returns ``(Dataset, RoleSpec, GroundTruthHandle)``; inputs are uniform on ``[-1, 1]``."""
    _require(n, 100, "gen_ground_truth")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 8))
    context = rng.choice(np.array(CONTEXT_VALUES), size=n)
    fn = ground_truth_function()
    signal = fn.bind(context).score(X)
    params = {"terms": [[c, {str(k): p for k, p in pw.items()}] for c, pw in fn.terms],
              "context_values": list(CONTEXT_VALUES), "input_range": [-1.0, 1.0]}
    data = _finish("ground_truth", X, signal, GROUND_TRUTH_FEATURES, seed, rng, params)
    roles = RoleSpec({
        "workhorse": (Archetype.SIMPLE_WORKHORSE, "impact"),
        "stable_contributor": (Archetype.STABLE_CONTRIBUTOR, "impact"),
        "noise": (Archetype.NOISE_CANDIDATE, "none"),
        "nonlinear_driver": (Archetype.NONLINEAR_DRIVER, "nonlinearity"),
        "volatile_specialist": (Archetype.VOLATILE_SPECIALIST, "volatility"),
        "hidden_interactor": (Archetype.HIDDEN_INTERACTOR, "interaction"),
        "interactive_catalyst": (Archetype.INTERACTIVE_CATALYST, "interaction"),
        "complex_driver": (Archetype.COMPLEX_DRIVER, "impact"),
    }, [("hidden_interactor", "interactive_catalyst")])
    return data, roles, GroundTruthHandle(fn, context)


# credit loan ------------------------------------------------------------------------------------

CREDIT_LOAN = {"simple": 2.0, "interaction": 12.0, "square": 5.0}


def gen_credit_loan(n: int, seed: int):
    """Simple driver, one interacting pair, one curved feature and two noise columns.

    The product term carries about two thirds of the target variance, so a
    model that cannot represent it stays near R^2 = 0.25.
    """
    _require(n, 1000, "gen_credit_loan")
    rng = np.random.default_rng(seed)
    names = ["simple_driver", "base_interactor", "partner_interactor", "nonlinear_feature", "noise_1", "noise_2"]
    X = rng.uniform(0.0, 1.0, size=(n, len(names)))
    a, b, c = CREDIT_LOAN["simple"], CREDIT_LOAN["interaction"], CREDIT_LOAN["square"]
    signal = a * X[:, 0] + b * (X[:, 1] - 0.5) * (X[:, 2] - 0.5) + c * (X[:, 3] - 0.5) ** 2
    data = _finish("credit_loan", X, signal, names, seed, rng, dict(CREDIT_LOAN))
    roles = RoleSpec({
        "simple_driver": (Archetype.SIMPLE_WORKHORSE, "impact"),
        "base_interactor": (Archetype.HIDDEN_INTERACTOR, "interaction"),
        "partner_interactor": (Archetype.HIDDEN_INTERACTOR, "interaction"),
        "nonlinear_feature": (Archetype.NONLINEAR_DRIVER, "nonlinearity"),
        "noise_1": (Archetype.NOISE_CANDIDATE, "none"),
        "noise_2": (Archetype.NOISE_CANDIDATE, "none"),
    }, [("base_interactor", "partner_interactor")])
    return data, roles


# feature engineering ----------------------------------------------------------------------------

FEATURE_ENGINEERING = {"square": 12.0, "interaction": 12.0, "coupling": 3.0, "center": 0.5}


def gen_feature_engineering_world(n: int, seed: int):
    """Target built only from a centred square and two products; no linear terms."""
    _require(n, 1000, "gen_feature_engineering_world")
    rng = np.random.default_rng(seed)
    names = ["dti_ratio", "loan_purpose_risk", "num_recent_inquiries", "employment_stability_score"]
    X = rng.uniform(0.0, 1.0, size=(n, 4))
    p = FEATURE_ENGINEERING
    Z = X - p["center"]
    signal = p["square"] * Z[:, 0] ** 2 + p["interaction"] * Z[:, 1] * Z[:, 2] + p["coupling"] * Z[:, 3] * Z[:, 1]
    data = _finish("feature_engineering", X, signal, names, seed, rng, dict(p))
    roles = RoleSpec({
        "dti_ratio": (Archetype.NONLINEAR_DRIVER, "nonlinearity"),
        "loan_purpose_risk": (Archetype.HIDDEN_INTERACTOR, "interaction"),
        "num_recent_inquiries": (Archetype.HIDDEN_INTERACTOR, "interaction"),
        "employment_stability_score": (Archetype.STABLE_CONTRIBUTOR, "interaction"),
    }, [("loan_purpose_risk", "num_recent_inquiries")])
    return data, roles


# deceptive two-world ablation -------------------------------------------------------------------

DECEPTIVE = {"income": 24.0, "purpose": 7.0, "interaction": 28.0}


def gen_deceptive_world(which: str, n: int, seed: int):
    """``full``: income + purpose + credit_history_len x num_recent_inquiries + id noise.

    ``ablated``: regenerated from the same seed without num_recent_inquiries
    and without the product term.
    """
    if which not in ("full", "ablated"):
        raise ValueError("which must be 'full' or 'ablated'")
    _require(n, 1000, "gen_deceptive_world")
    rng = np.random.default_rng(seed)
    names = ["annual_income", "credit_history_len", "num_recent_inquiries", "loan_purpose_impact", "applicant_id_hash"]
    X = rng.uniform(0.0, 1.0, size=(n, 5))
    p = DECEPTIVE
    signal = p["income"] * X[:, 0] + p["purpose"] * X[:, 3]
    roles = {
        "annual_income": (Archetype.SIMPLE_WORKHORSE, "impact"),
        "credit_history_len": (Archetype.HIDDEN_INTERACTOR, "interaction"),
        "num_recent_inquiries": (Archetype.HIDDEN_INTERACTOR, "interaction"),
        "loan_purpose_impact": (Archetype.STABLE_CONTRIBUTOR, "impact"),
        "applicant_id_hash": (Archetype.NOISE_CANDIDATE, "none"),
    }
    partners = [("credit_history_len", "num_recent_inquiries")]
    params = dict(p)
    if which == "full":
        signal = signal + p["interaction"] * (X[:, 1] - 0.5) * (X[:, 2] - 0.5)
    else:
        X = np.delete(X, 2, axis=1)
        names.remove("num_recent_inquiries")
        del roles["num_recent_inquiries"]
        roles["credit_history_len"] = (Archetype.NOISE_CANDIDATE, "none")
        partners = []
        params["interaction"] = 0.0
    params["world"] = which
    data = _finish(f"deceptive_{which}", X, signal, names, seed, rng, params)
    return data, RoleSpec(roles, partners)


# appendix demonstrations ------------------------------------------------------------------------

def gen_volatility_example(n: int, seed: int):
    """debt_to_income matters for personal loans only; the purpose flag is binary."""
    _require(n, 1000, "gen_volatility_example")
    rng = np.random.default_rng(seed)
    names = ["debt_to_income", "loan_purpose_Personal", "annual_income", "noise"]
    X = rng.uniform(0.0, 1.0, size=(n, 4))
    X[:, 1] = (rng.uniform(size=n) < 0.5).astype(np.float64)
    params = {"gated_slope": 10.0, "income": 3.0}
    signal = params["gated_slope"] * X[:, 0] * X[:, 1] + params["income"] * X[:, 2]
    data = _finish("volatility_example", X, signal, names, seed, rng, params)
    roles = RoleSpec({
        "debt_to_income": (Archetype.VOLATILE_SPECIALIST, "volatility"),
        "loan_purpose_Personal": (Archetype.HIDDEN_INTERACTOR, "interaction"),
        "annual_income": (Archetype.STABLE_CONTRIBUTOR, "impact"),
        "noise": (Archetype.NOISE_CANDIDATE, "none"),
    }, [("debt_to_income", "loan_purpose_Personal")])
    return data, roles


def gen_nonlinearity_example(n: int, seed: int):
    """Risk is U-shaped in age with its minimum at age = 0.5."""
    _require(n, 1000, "gen_nonlinearity_example")
    rng = np.random.default_rng(seed)
    names = ["age", "annual_income", "noise"]
    X = rng.uniform(0.0, 1.0, size=(n, 3))
    params = {"curvature": 12.0, "vertex": 0.5, "income": 2.0}
    signal = params["curvature"] * (X[:, 0] - params["vertex"]) ** 2 + params["income"] * X[:, 1]
    data = _finish("nonlinearity_example", X, signal, names, seed, rng, params)
    roles = RoleSpec({
        "age": (Archetype.NONLINEAR_DRIVER, "nonlinearity"),
        "annual_income": (Archetype.STABLE_CONTRIBUTOR, "impact"),
        "noise": (Archetype.NOISE_CANDIDATE, "none"),
    })
    return data, roles


def gen_linear_world(n: int, seed: int):
    """Purely additive linear target; the healthy reference for diagnostics."""
    _require(n, 100, "gen_linear_world")
    rng = np.random.default_rng(seed)
    names = ["x_strong", "x_medium", "x_weak", "x_noise"]
    X = rng.uniform(0.0, 1.0, size=(n, 4))
    coef = [4.0, 2.0, 1.0, 0.0]
    signal = X @ np.array(coef)
    data = _finish("linear", X, signal, names, seed, rng, {"coefficients": coef})
    roles = RoleSpec({
        "x_strong": (Archetype.SIMPLE_WORKHORSE, "impact"),
        "x_medium": (Archetype.STABLE_CONTRIBUTOR, "impact"),
        "x_weak": (Archetype.STABLE_CONTRIBUTOR, "impact"),
        "x_noise": (Archetype.NOISE_CANDIDATE, "none"),
    })
    return data, roles


# injectors --------------------------------------------------------------------------------------

def _zscore(v):
    sd = float(np.std(v))
    return (v - np.mean(v)) / (sd if sd > 0 else 1.0)


def inject_spurious(base: Dataset, strength: float = 0.98, seed: int = 0) -> Dataset:
    """Append a column that tracks the target on training rows and is pure noise on validation rows."""
    if base.task is not TaskKind.REGRESSION:
        raise DataError("inject_spurious needs a regression dataset")
    if not len(base.train_idx) or not len(base.val_idx):
        raise DataError("inject_spurious needs a train/validation split")
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    col = rng.normal(size=base.n)
    tr = base.train_idx
    col[tr] = strength * _zscore(base.y[tr]) + np.sqrt(1.0 - strength ** 2) * col[tr]
    prov = {"generator": "inject_spurious", "strength": strength, "seed": seed, "base": base.provenance}
    return base.with_columns(["spurious_feature"], [col], prov)


def inject_leak(base: Dataset, noise_sd: float = 0.0, seed: int = 0) -> Dataset:
    """Append ``leaky_feature = y + N(0, noise_sd)`` on every row."""
    if base.task is not TaskKind.REGRESSION:
        raise DataError("inject_leak needs a regression dataset")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    rng = np.random.default_rng(seed)
    col = base.y + (rng.normal(0.0, noise_sd, size=base.n) if noise_sd > 0 else 0.0)
    prov = {"generator": "inject_leak", "noise_sd": noise_sd, "seed": seed, "base": base.provenance}
    return base.with_columns(["leaky_feature"], [col], prov)


def unit_scale(data: Dataset) -> Dataset:
    """Min-max scale, on training-row statistics, every column whose training range leaves ``[0, 1]``.

    Derivatives are measured in rank coordinates on ``[0, 1]`` without a
    chain-rule factor, so a column that lives on another scale would have
    its impact reported per raw unit. Columns already inside ``[0, 1]`` are
    left untouched.
    """
    tr = data.X[data.train_idx] if len(data.train_idx) else data.X
    lo, hi = tr.min(axis=0), tr.max(axis=0)
    X = data.X.copy()
    scaled = {}
    for j, name in enumerate(data.feature_names):
        if (lo[j] < 0.0 or hi[j] > 1.0) and hi[j] > lo[j]:
            X[:, j] = (X[:, j] - lo[j]) / (hi[j] - lo[j])
            scaled[name] = [float(lo[j]), float(hi[j])]
    if not scaled:
        return data
    prov = {"generator": "unit_scale", "scaled": scaled, "base": data.provenance}
    return Dataset(X, data.y.copy(), list(data.feature_names), data.task, data.train_idx.copy(),
                   data.val_idx.copy(), prov, data.target_name)


GENERATORS = {
    "ground_truth": lambda n, seed: gen_ground_truth(n, seed)[:2],
    "credit_loan": gen_credit_loan,
    "feature_engineering": gen_feature_engineering_world,
    "deceptive_full": lambda n, seed: gen_deceptive_world("full", n, seed),
    "deceptive_ablated": lambda n, seed: gen_deceptive_world("ablated", n, seed),
    "volatility_example": gen_volatility_example,
    "nonlinearity_example": gen_nonlinearity_example,
    "linear": gen_linear_world,
}


# csv --------------------------------------------------------------------------------------------

def load_csv(path, target_column: str, task=TaskKind.REGRESSION, seed: int = 0) -> Dataset:
    """Read a numeric CSV with a header row and split it 80/20 with ``seed``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if target_column not in header:
        raise DataError(f"target column {target_column!r} not found in {path}; columns: {header}")
    if len(rows) < 2:
        raise DataError(f"{path} has a header but no data rows")
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {i} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at line {i}, column {header[j]!r}") from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path} contains NaN or infinite cells")
    t = header.index(target_column)
    X = np.delete(values, t, axis=1)
    names = header[:t] + header[t + 1:]
    task = TaskKind(task)
    if task is TaskKind.CLASSIFICATION:
        y = values[:, t]
        if not np.all(y == np.round(y)) or y.min() < 0:
            raise DataError("classification targets must be non-negative class indices")
    train_idx, val_idx = split_indices(len(values), seed)
    prov = {"generator": "csv", "path": str(path), "seed": seed}
    return Dataset(X, values[:, t], names, task, train_idx, val_idx, prov, target_column)


def write_csv(data: Dataset, path) -> None:
    """Write the data as CSV plus a ``<path>.provenance.json`` sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.feature_names + [data.target_name])
        for row, target in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(target))])
    side = {"provenance": data.provenance, "task": data.task.value,
            "val_idx": data.val_idx.tolist()}
    Path(str(path) + ".provenance.json").write_text(json.dumps(side, indent=2, sort_keys=True))
