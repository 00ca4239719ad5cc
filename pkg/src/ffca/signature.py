"""Aggregation of input derivatives into per-feature 4D signatures."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, SmoothingRequiredError, UndefinedCorrelationError
from .model import DEFAULT_BETA, DEFAULT_HESSIAN_CAP, Mlp, ModelFunction, TaskKind, with_smoothed_activations
from .normalize import RankMap, ScalerParams, normalize_for_analysis

COMPONENTS = ("impact", "volatility", "nonlinearity", "interaction")


@dataclass
class AnalysisConfig:
    sample_size: int = 512
    hessian_mode: str = "diagonal"
    beta: float = DEFAULT_BETA
    seed: int = 0
    hessian_cap: int = DEFAULT_HESSIAN_CAP

    def __post_init__(self):
        if self.hessian_mode not in ("diagonal", "full"):
            raise ValueError(f"hessian_mode must be 'diagonal' or 'full', got {self.hessian_mode!r}")
        if self.sample_size < 1 or not self.beta > 0:
            raise ValueError("sample_size must be positive and beta > 0")

    @property
    def full(self) -> bool:
        return self.hessian_mode == "full"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FeatureSignature:
    feature_name: str
    impact: float
    volatility: float
    nonlinearity: float
    interaction: float | None = None
    # interaction / (d - 1); comparable across models with different d
    interaction_mean: float | None = None

    def vector(self) -> list[float]:
        return [self.impact, self.volatility, self.nonlinearity,
                float("nan") if self.interaction is None else self.interaction]

    def to_dict(self) -> dict:
        d = {"feature": self.feature_name, "impact": self.impact, "volatility": self.volatility,
             "nonlinearity": self.nonlinearity}
        if self.interaction is not None:
            d["interaction"] = self.interaction
            d["interaction_mean"] = self.interaction_mean
        return d

    @classmethod
    def from_dict(cls, d) -> "FeatureSignature":
        return cls(d["feature"], d["impact"], d["volatility"], d["nonlinearity"],
                   d.get("interaction"), d.get("interaction_mean"))


@dataclass
class InteractionMatrix:
    """Mean absolute second derivative for every feature pair (diagonal included)."""

    values: np.ndarray
    feature_names: list[str]

    def top_partner(self, i: int) -> int:
        row = self.values[i].copy()
        row[i] = -np.inf
        return int(np.argmax(row))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(self.feature_names))
        for name, row in zip(self.feature_names, self.values):
            w.writerow([name] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "InteractionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        names = rows[0][1:]
        return cls(np.array([[float(v) for v in r[1:]] for r in rows[1:]]), names)


@dataclass
class SignatureResult:
    signatures: list[FeatureSignature]
    interaction: InteractionMatrix | None = None
    mode: str = "diagonal"

    def by_name(self) -> dict[str, FeatureSignature]:
        return {s.feature_name: s for s in self.signatures}

    def component(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) if getattr(s, name) is not None else np.nan for s in self.signatures])


def _as_function(model, task, config: AnalysisConfig):
    if isinstance(model, Mlp):
        if not model.smooth:
            raise SmoothingRequiredError("analyse the smoothed view from with_smoothed_activations()")
        return ModelFunction(model, task or TaskKind.REGRESSION, hessian_cap=config.hessian_cap)
    if isinstance(model, ModelFunction) and not model.model.smooth:
        raise SmoothingRequiredError("analyse the smoothed view from with_smoothed_activations()")
    return model


def compute_signatures(model, X_analysis, task=None, config: AnalysisConfig | None = None,
                       feature_names=None) -> SignatureResult:
    """Impact, volatility, non-linearity and (full mode only) interaction per feature.

    ``model`` is a smoothed :class:`Mlp` or any object implementing the
    derivative interface of :class:`ffca.model.ModelFunction`. ``X_analysis``
    holds the points, already in analysis coordinates.
    """
    config = config or AnalysisConfig()
    fn = _as_function(model, task, config)
    X = np.asarray(X_analysis, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise InsufficientDataError("analysis set is empty")
    d = X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(d)]

    matrix = None
    if config.full:
        G, H = fn.hessians(X)
        absH = np.abs(H).mean(axis=0)
        D = np.diagonal(H, axis1=1, axis2=2)
        matrix = InteractionMatrix(absH, names)
        inter = absH.sum(axis=1) - np.diagonal(absH)
    else:
        G, D = fn.hessian_diagonals(X)
        inter = None

    impact = np.abs(G).mean(axis=0)
    volatility = G.var(axis=0)
    nonlin = np.abs(D).mean(axis=0)
    sigs = []
    for i in range(d):
        x_i = x_mean = None
        if inter is not None:
            x_i = float(inter[i])
            x_mean = x_i / (d - 1) if d > 1 else 0.0
        sigs.append(FeatureSignature(names[i], float(impact[i]), float(volatility[i]), float(nonlin[i]), x_i, x_mean))
    return SignatureResult(sigs, matrix, config.hessian_mode)


def interaction_matrix(model, X_analysis, task=None, config: AnalysisConfig | None = None,
                       feature_names=None) -> InteractionMatrix:
    config = config or AnalysisConfig(hessian_mode="full")
    if not config.full:
        config = AnalysisConfig(**{**config.to_dict(), "hessian_mode": "full"})
    return compute_signatures(model, X_analysis, task, config, feature_names).interaction


def signature_correlation(a, b) -> float:
    """Pearson correlation of two equally long vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two 1-D vectors of equal length >= 2")
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(np.sum(da * da)), np.sqrt(np.sum(db * db))
    if na == 0.0 or nb == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    return float(np.clip(np.sum(da * db) / (na * nb), -1.0, 1.0))


def select_analysis_rows(y, task, sample_size: int, seed: int, candidates=None, n_strata: int = 10) -> np.ndarray:
    """Stratified subsample of row indices (target quantiles or classes).

    Returns all candidates when there are no more than ``sample_size``.
    """
    y = np.asarray(y)
    cand = np.arange(len(y)) if candidates is None else np.asarray(candidates)
    if len(cand) <= sample_size:
        return np.sort(cand)
    rng = np.random.default_rng(seed)
    yc = y[cand]
    if TaskKind(task) is TaskKind.CLASSIFICATION:
        labels = np.unique(yc, return_inverse=True)[1]
    else:
        ranks = np.argsort(np.argsort(yc, kind="stable"), kind="stable")
        labels = ranks * n_strata // len(yc)
    groups = [cand[labels == g] for g in np.unique(labels)]
    quota = np.array([len(g) for g in groups], dtype=np.float64) * sample_size / len(cand)
    take = np.floor(quota).astype(int)
    for g in np.argsort(-(quota - take), kind="stable")[: sample_size - take.sum()]:
        take[g] += 1
    chosen = [rng.choice(g, size=t, replace=False) for g, t in zip(groups, take) if t]
    return np.sort(np.concatenate(chosen))


@dataclass
class AnalysisResult:
    result: SignatureResult
    rows: np.ndarray
    coordinates: np.ndarray
    scaler: ScalerParams
    rank_map: RankMap
    extra: dict = field(default_factory=dict)

    @property
    def signatures(self) -> list[FeatureSignature]:
        return self.result.signatures


def analysis_points(data, config: AnalysisConfig, transforms=None):
    """Pick the analysis rows from the validation split and normalise them."""
    candidates = data.val_idx if len(data.val_idx) else None
    rows = select_analysis_rows(data.y, data.task, config.sample_size, config.seed, candidates)
    U, scaler, rank_map = normalize_for_analysis(np.asarray(data.X)[rows], transforms)
    return rows, U, scaler, rank_map


def analyze(model: Mlp, data, config: AnalysisConfig | None = None, transforms=None, points=None) -> AnalysisResult:
    """Static analysis: select and normalise the analysis set, smooth, aggregate.

    ``points`` may carry a precomputed ``(rows, U, scaler, rank_map)`` tuple
    so repeated captures use one fixed analysis set.
    """
    config = config or AnalysisConfig()
    rows, U, scaler, rank_map = points if points is not None else analysis_points(data, config, transforms)
    view = with_smoothed_activations(model, config.beta)
    result = compute_signatures(view, U, data.task, config, data.feature_names)
    return AnalysisResult(result, rows, U, scaler, rank_map)


def signatures_to_json(signatures) -> str:
    return json.dumps([s.to_dict() for s in signatures], indent=2)


def write_signatures(path, signatures) -> None:
    Path(path).write_text(signatures_to_json(signatures))


def read_signatures(path) -> list[FeatureSignature]:
    return [FeatureSignature.from_dict(d) for d in json.loads(Path(path).read_text())]
