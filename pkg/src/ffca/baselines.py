"""Reference attribution methods, closed-form ridge regression and signature robustness."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .archetype import Archetype, archetype_agreement, classify
from .errors import DimensionMismatchError, InteractionUnavailableError, SingularSystemError
from .model import Mlp, ModelFunction, TaskKind, forward_batch, with_smoothed_activations
from .signature import AnalysisConfig, compute_signatures, signature_correlation
from .training import loss_and_metric, r2_score

METHODS = ("permutation", "gradient", "sampled_shapley")


@dataclass
class ImportanceVector:
    values: np.ndarray
    method: str
    feature_names: list[str] | None = None
    attributions: np.ndarray | None = None  # per-sample values, Shapley only

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        self.values = np.asarray(self.values, dtype=np.float64)


def _score_fn(model, task):
    if isinstance(model, Mlp):
        fn = ModelFunction(model, task)
        return fn.score
    return model.score


def permutation_importance(model: Mlp, data, repeats: int = 5, seed: int = 0) -> ImportanceVector:
    """Mean drop of the validation metric when one column is shuffled, floored at zero."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    X = np.asarray(data.X)[data.val_idx]
    y = np.asarray(data.y)[data.val_idx]
    base = loss_and_metric(model, X, y, data.task)[1]
    drops = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        total = 0.0
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(len(X)), j]
            total += base - loss_and_metric(model, Xp, y, data.task)[1]
        drops[j] = max(total / repeats, 0.0)
    return ImportanceVector(drops, "permutation", list(data.feature_names))


def gradient_importance(model, X, task=TaskKind.REGRESSION, feature_names=None) -> ImportanceVector:
    """Mean absolute input gradient in the coordinates ``X`` is given in."""
    fn = ModelFunction(model, task) if isinstance(model, Mlp) else model
    G = fn.gradients(np.asarray(X, dtype=np.float64))
    return ImportanceVector(np.abs(G).mean(axis=0), "gradient", feature_names)


def sampled_shapley(model, X, baseline=None, n_permutations: int = 64, seed: int = 0,
                    task=TaskKind.REGRESSION, feature_names=None) -> ImportanceVector:
    """Permutation-sampling Shapley values of the scalar score against one baseline point.

    Features are switched from ``baseline`` to ``x`` one at a time in random
    order; each feature is credited with the change it causes. Within one
    permutation the credits telescope to ``f(x) - f(baseline)``. The
    importance is the mean absolute attribution over the rows of ``X``;
    per-row attributions are kept in ``attributions``.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    m, d = X.shape
    b = X.mean(axis=0) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if b.shape != (d,):
        raise DimensionMismatchError(f"baseline must have length {d}")
    score = _score_fn(model, task)
    rng = np.random.default_rng(seed)
    phi = np.zeros((m, d))
    rows = np.arange(m)
    for _ in range(n_permutations):
        order = rng.permuted(np.tile(np.arange(d), (m, 1)), axis=1)
        Z = np.broadcast_to(b, (m, d)).copy()
        prev = score(Z)
        for step in range(d):
            k = order[:, step]
            Z[rows, k] = X[rows, k]
            cur = score(Z)
            phi[rows, k] += cur - prev
            prev = cur
    phi /= n_permutations
    return ImportanceVector(np.abs(phi).mean(axis=0), "sampled_shapley", feature_names, phi)


def importance_table_csv(feature_names, columns: dict) -> str:
    """Side-by-side table: one row per feature, one column per method or signature component."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature"] + list(columns))
    for i, name in enumerate(feature_names):
        w.writerow([name] + [repr(float(np.asarray(v)[i])) for v in columns.values()])
    return buf.getvalue()


# ridge ------------------------------------------------------------------------------------------

@dataclass
class RidgeModel:
    weights: np.ndarray
    intercept: float
    lam: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.intercept


def ridge_fit(X, y, lam: float = 1.0) -> RidgeModel:
    """Solve ``(Xc'Xc + lam I) w = Xc'yc`` on centred data; the intercept is not penalised."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0 or len(X) != len(y):
        raise DimensionMismatchError("X and y must be non-empty with matching rows")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    A = Xc.T @ Xc + lam * np.eye(X.shape[1])
    if lam == 0 and np.linalg.matrix_rank(A) < X.shape[1]:
        raise SingularSystemError("X'X is singular; use lam > 0")
    w = np.linalg.solve(A, Xc.T @ yc)
    return RidgeModel(w, float(ym - xm @ w), float(lam))


def ridge_r2(m: RidgeModel, X, y) -> float:
    return r2_score(y, m.predict(X))


def engineer_features(data, diagnosis, matrix):
    """Add ``<f>^2`` for each NonlinearDriver and ``<f_i>*<f_j>`` for each interactor's top partner."""
    if matrix is None or any(c.levels.get("X") is None for c in diagnosis):
        raise InteractionUnavailableError("feature engineering needs a full-Hessian diagnosis")
    names = list(data.feature_names)
    index = {n: i for i, n in enumerate(names)}
    mindex = {n: i for i, n in enumerate(matrix.feature_names)}
    new_names, new_cols, pairs = [], [], []
    for c in diagnosis:
        if c.archetype is Archetype.NONLINEAR_DRIVER:
            i = index[c.feature]
            new_names.append(f"{c.feature}^2")
            new_cols.append(data.X[:, i] ** 2)
    for c in diagnosis:
        if c.archetype in (Archetype.HIDDEN_INTERACTOR, Archetype.INTERACTIVE_CATALYST):
            partner = matrix.feature_names[matrix.top_partner(mindex[c.feature])]
            pair = tuple(sorted((index[c.feature], index[partner])))
            if pair not in pairs:
                pairs.append(pair)
    for i, j in pairs:
        new_names.append(f"{names[i]}*{names[j]}")
        new_cols.append(data.X[:, i] * data.X[:, j])
    if not new_names:
        return data
    prov = {"generator": "engineer_features", "added": new_names, "base": data.provenance}
    return data.with_columns(new_names, new_cols, prov)


# robustness -------------------------------------------------------------------------------------

def perturb_weights(model: Mlp, sigma: float, seed: int = 0, relative: bool = False) -> Mlp:
    """Copy of ``model`` with i.i.d. Gaussian noise on every weight and bias.

    With ``relative=True`` the noise sd of each layer is ``sigma`` times the
    standard deviation of that layer's weights.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    out = model.copy()
    for W, b in zip(out.weights, out.biases):
        sd = sigma * (float(np.std(W)) if relative else 1.0)
        W += rng.normal(0.0, sd, size=W.shape) if sd > 0 else 0.0
        b += rng.normal(0.0, sd, size=b.shape) if sd > 0 else 0.0
    return out


def _flat(signatures) -> np.ndarray:
    return np.array([v for s in signatures for v in s.vector() if not np.isnan(v)])


def robustness_report(model: Mlp, sigmas, U, task=TaskKind.REGRESSION, config: AnalysisConfig | None = None,
                      seeds=(0, 1, 2, 3, 4), feature_names=None, relative: bool = True) -> list[dict]:
    """Signature correlation and archetype agreement of perturbed copies against the original.

    ``U`` is the analysis set in analysis coordinates. Results are averaged
    over ``seeds``.
    """
    config = config or AnalysisConfig(hessian_mode="full")
    beta = config.beta

    def run(m):
        return compute_signatures(with_smoothed_activations(m, beta), U, task, config, feature_names).signatures

    ref = run(model)
    ref_vec, ref_cls = _flat(ref), classify(ref)
    report = []
    for sigma in sigmas:
        rs, agree = [], []
        for seed in seeds:
            sigs = run(perturb_weights(model, sigma, seed, relative))
            rs.append(signature_correlation(ref_vec, _flat(sigs)))
            agree.append(archetype_agreement(ref_cls, classify(sigs)))
        report.append({"sigma": float(sigma), "pearson_r": float(np.mean(rs)), "agreement": float(np.mean(agree)),
                       "per_seed_r": [float(r) for r in rs]})
    return report
