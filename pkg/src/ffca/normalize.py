"""Analysis-time input normalisation: z-scoring followed by a marginal rank-uniform map.

These transforms only produce the coordinates in which derivatives are
measured. Training and inference never see their output.

Note that the rank-uniform map is invariant under any strictly increasing
per-column transform, so the z-score step never changes the final
coordinates. The scaler is still fitted and kept because reports use it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, InsufficientDataError

STD_FLOOR = 1e-12


@dataclass
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray
    fitted_on: int

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "fitted_on": self.fitted_on}

    @classmethod
    def from_dict(cls, d) -> "ScalerParams":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64), int(d["fitted_on"]))


@dataclass
class RankMap:
    """Sorted copy of every fitted column."""

    columns: list[np.ndarray]

    @property
    def n_fit(self) -> int:
        return len(self.columns[0])

    def to_dict(self) -> dict:
        return {"columns": [c.tolist() for c in self.columns]}

    @classmethod
    def from_dict(cls, d) -> "RankMap":
        return cls([np.array(c, dtype=np.float64) for c in d["columns"]])


def _matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {X.shape}")
    return X


def fit_scaler(X) -> ScalerParams:
    X = _matrix(X)
    if len(X) < 2:
        raise InsufficientDataError("fit_scaler needs at least 2 rows")
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return ScalerParams(X.mean(axis=0), std, len(X))


def apply_zscore(params: ScalerParams, X) -> np.ndarray:
    X = _matrix(X)
    if X.shape[1] != len(params.mean):
        raise DimensionMismatchError(f"scaler was fitted on {len(params.mean)} columns, got {X.shape[1]}")
    return (X - params.mean) / params.std


def fit_rank_map(X) -> RankMap:
    X = _matrix(X)
    if len(X) < 2:
        raise InsufficientDataError("fit_rank_map needs at least 2 rows")
    return RankMap([np.sort(X[:, j]) for j in range(X.shape[1])])


def apply_rank_uniform(rank_map: RankMap, X) -> np.ndarray:
    """Map each value to its mid-rank among the fitted values, scaled to ``[0, 1]``.

    ``rank = below + (ties - 1) / 2`` where ``below`` counts fitted values
    strictly smaller and ``ties`` counts equal ones; the result is
    ``rank / (n_fit - 1)`` clipped to ``[0, 1]``. Values between two fitted
    points land halfway between their ranks, so the map is monotone.
    """
    X = _matrix(X)
    if X.shape[1] != len(rank_map.columns):
        raise DimensionMismatchError(f"rank map was fitted on {len(rank_map.columns)} columns, got {X.shape[1]}")
    out = np.empty_like(X)
    denom = rank_map.n_fit - 1
    for j, col in enumerate(rank_map.columns):
        below = np.searchsorted(col, X[:, j], side="left")
        upto = np.searchsorted(col, X[:, j], side="right")
        rank = below + (upto - below - 1) / 2.0
        out[:, j] = np.clip(rank / denom, 0.0, 1.0)
    return out


def normalize_for_analysis(X, precomputed: tuple[ScalerParams, RankMap] | None = None):
    """z-score then rank-uniform. Fits both transforms on ``X`` unless given.

    Returns ``(U, scaler, rank_map)``.
    """
    X = _matrix(X)
    if precomputed is None:
        scaler = fit_scaler(X)
        Z = apply_zscore(scaler, X)
        rank_map = fit_rank_map(Z)
    else:
        scaler, rank_map = precomputed
        Z = apply_zscore(scaler, X)
    return apply_rank_uniform(rank_map, Z), scaler, rank_map


def save_transforms(path, scaler: ScalerParams, rank_map: RankMap) -> None:
    Path(path).write_text(json.dumps({"scaler": scaler.to_dict(), "rank_map": rank_map.to_dict()}))


def load_transforms(path) -> tuple[ScalerParams, RankMap]:
    d = json.loads(Path(path).read_text())
    return ScalerParams.from_dict(d["scaler"]), RankMap.from_dict(d["rank_map"])
