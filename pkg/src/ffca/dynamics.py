"""Signature tracking during training and diagnostics over the resulting history.

Series helpers take an optional ``epochs`` sequence. When given, results are
reported as epoch labels; otherwise as positions in the series.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FeatureSetDriftError, InsufficientDataError, UndefinedTakeoffError
from .model import TaskKind
from .signature import AnalysisConfig, FeatureSignature, analysis_points, analyze
from .training import TrainConfig, train


@dataclass
class HistoryEntry:
    epoch: int
    signatures: list[FeatureSignature]
    train_metric: float
    val_metric: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "signatures": [s.to_dict() for s in self.signatures],
                "train_metric": self.train_metric, "val_metric": self.val_metric}

    @classmethod
    def from_dict(cls, d) -> "HistoryEntry":
        return cls(int(d["epoch"]), [FeatureSignature.from_dict(s) for s in d["signatures"]],
                   float(d["train_metric"]), float(d["val_metric"]))


@dataclass
class SignatureHistory:
    entries: list[HistoryEntry] = field(default_factory=list)
    task: TaskKind = TaskKind.REGRESSION
    fingerprints: dict = field(default_factory=dict)

    def append(self, entry: HistoryEntry) -> None:
        if self.entries:
            if entry.epoch <= self.entries[-1].epoch:
                raise ValueError(f"epoch {entry.epoch} does not follow {self.entries[-1].epoch}")
            if [s.feature_name for s in entry.signatures] != self.feature_names:
                raise FeatureSetDriftError(f"feature set changed at epoch {entry.epoch}")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def feature_names(self) -> list[str]:
        return [s.feature_name for s in self.entries[0].signatures] if self.entries else []

    @property
    def epochs(self) -> np.ndarray:
        return np.array([e.epoch for e in self.entries], dtype=np.int64)

    def series(self, feature: str, component: str) -> np.ndarray:
        i = self.feature_names.index(feature)
        vals = [getattr(e.signatures[i], component) for e in self.entries]
        return np.array([np.nan if v is None else v for v in vals], dtype=np.float64)

    def component_matrix(self, component: str) -> np.ndarray:
        """``(captures, features)`` array of one component."""
        return np.array([[np.nan if getattr(s, component) is None else getattr(s, component)
                          for s in e.signatures] for e in self.entries], dtype=np.float64)

    def metric_series(self, which: str = "val") -> np.ndarray:
        return np.array([getattr(e, f"{which}_metric") for e in self.entries], dtype=np.float64)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict()) + "\n" for e in self.entries)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str, task=TaskKind.REGRESSION) -> "SignatureHistory":
        h = cls(task=TaskKind(task))
        for line in text.splitlines():
            if line.strip():
                h.append(HistoryEntry.from_dict(json.loads(line)))
        return h

    @classmethod
    def read(cls, path, task=TaskKind.REGRESSION) -> "SignatureHistory":
        return cls.from_jsonl(Path(path).read_text(), task)


def dataset_fingerprint(data) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.X).tobytes())
    h.update(np.ascontiguousarray(data.y).tobytes())
    h.update(json.dumps(data.feature_names).encode())
    return h.hexdigest()


def config_fingerprint(*configs) -> str:
    payload = json.dumps([c.to_dict() for c in configs], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def track(model, data, train_config: TrainConfig, analysis_config: AnalysisConfig | None = None,
          transforms=None):
    """Train ``model`` and capture signatures every ``capture_interval`` epochs.

    Every capture uses the same analysis rows and fitted transforms.
    Returns ``(trained_model, epoch_log, history)``.
    """
    analysis_config = analysis_config or AnalysisConfig()
    if train_config.epochs % train_config.capture_interval:
        raise ValueError("capture_interval must divide the number of epochs")
    points = analysis_points(data, analysis_config, transforms)
    history = SignatureHistory(task=TaskKind(data.task), fingerprints={
        "dataset": dataset_fingerprint(data),
        "config": config_fingerprint(train_config, analysis_config),
    })

    def capture(epoch, view, metrics):
        res = analyze(view, data, analysis_config, points=points)
        history.append(HistoryEntry(epoch, res.signatures, metrics.train_metric, metrics.val_metric))

    trained, log = train(model, data, train_config, on_epoch=capture)
    return trained, log, history


def mean_volatility_series(h: SignatureHistory) -> np.ndarray:
    if not len(h):
        raise InsufficientDataError("history is empty")
    return h.component_matrix("volatility").mean(axis=1)


def _label(i, epochs):
    return int(epochs[i]) if epochs is not None else i


def detect_volatility_spike(series, window: int = 5, k: float = 3.0, epochs=None, sustain: int = 2):
    """First point above ``mean + k * std`` of the preceding ``window`` points.

    The jump counts only if the next ``sustain`` points also stay above that
    window mean. Returns ``None`` when no such point exists or the series is
    not longer than the window.
    """
    s = np.asarray(series, dtype=np.float64)
    if window < 1 or len(s) <= window:
        return None
    for t in range(window, len(s) - sustain):
        base = s[t - window:t]
        mu, sd = base.mean(), base.std()
        if s[t] > mu + k * sd and np.all(s[t + 1:t + 1 + sustain] > mu):
            return _label(t, epochs)
    return None


def takeoff_epoch(series, fraction: float = 0.5, epochs=None):
    """First point where the series reaches ``fraction`` of its final value."""
    s = np.asarray(series, dtype=np.float64)
    if not len(s):
        raise InsufficientDataError("empty series")
    final = s[-1]
    if not final > 0:
        raise UndefinedTakeoffError(f"final value {final} is not positive")
    return _label(int(np.argmax(s >= fraction * final)), epochs)


@dataclass
class TakeoffRecord:
    feature: str
    component: str
    epoch: int | None


@dataclass
class HierarchyReport:
    takeoffs: list[TakeoffRecord]
    impact_before_interaction: bool | None

    def to_dict(self) -> dict:
        return {"takeoffs": [asdict(t) for t in self.takeoffs],
                "impact_before_interaction": self.impact_before_interaction}


def hierarchical_order(h: SignatureHistory, roles, fraction: float = 0.5) -> HierarchyReport:
    """Take-off epoch of each feature's designated component.

    ``roles`` maps feature name to component name ("impact", "nonlinearity",
    "interaction", ...) or is a :class:`~ffca.datasets.RoleSpec`. The flag is
    true when every impact feature takes off strictly before the earliest
    interaction take-off, and ``None`` when either side is undefined.
    """
    mapping = {k: v[1] for k, v in roles.roles.items()} if hasattr(roles, "roles") else dict(roles)
    comp_attr = {"impact": "impact", "volatility": "volatility", "nonlinearity": "nonlinearity",
                 "interaction": "interaction"}
    epochs = h.epochs
    records = []
    for feature in h.feature_names:
        comp = mapping.get(feature)
        if comp not in comp_attr:
            continue
        try:
            ep = takeoff_epoch(h.series(feature, comp), fraction, epochs)
        except UndefinedTakeoffError:
            ep = None
        records.append(TakeoffRecord(feature, comp, ep))
    imp = [r.epoch for r in records if r.component == "impact"]
    inter = [r.epoch for r in records if r.component == "interaction"]
    if not imp or not inter or None in imp or None in inter:
        flag = None
    else:
        flag = max(imp) < min(inter)
    return HierarchyReport(records, flag)


@dataclass(frozen=True)
class DiagnosisThresholds:
    leak_perfect_r2: float = 0.99
    leak_perfect_accuracy: float = 0.995
    leak_window: float = 0.2
    dominance_ratio: float = 5.0
    divergence_r2: float = 0.3
    divergence_accuracy: float = 0.15
    underfit_r2: float = 0.5
    underfit_accuracy: float = 0.5
    flat_fraction: float = 0.1
    spike_window: int = 5
    spike_k: float = 3.0


@dataclass
class PathologyVerdict:
    kind: str
    evidence: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "evidence": self.evidence}


HEALTHY, UNDERFIT, OVERFIT_SPURIOUS, DATA_LEAKAGE = "Healthy", "Underfit", "OverfitSpurious", "DataLeakage"


def _dominance(impacts) -> tuple[int, float]:
    v = np.asarray(impacts, dtype=np.float64)
    top = int(np.argmax(v))
    rest = float(v.sum() - v[top])
    return top, (math.inf if rest == 0 else float(v[top] / rest))


def diagnose(h: SignatureHistory, thresholds: DiagnosisThresholds | None = None) -> PathologyVerdict:
    """Leakage, then spurious overfitting, then underfitting; otherwise healthy."""
    t = thresholds or DiagnosisThresholds()
    if len(h) < 5:
        raise InsufficientDataError(f"diagnose needs at least 5 captures, history has {len(h)}")
    cls = h.task is TaskKind.CLASSIFICATION
    perfect = t.leak_perfect_accuracy if cls else t.leak_perfect_r2
    gap_needed = t.divergence_accuracy if cls else t.divergence_r2
    floor = t.underfit_accuracy if cls else t.underfit_r2
    epochs = h.epochs
    val = h.metric_series("val")
    tr = h.metric_series("train")
    impacts = h.component_matrix("impact")
    names = h.feature_names

    horizon = t.leak_window * epochs[-1]
    for c in range(len(h)):
        if epochs[c] > horizon:
            break
        top, ratio = _dominance(impacts[c])
        if val[c] >= perfect and ratio >= t.dominance_ratio:
            return PathologyVerdict(DATA_LEAKAGE, {
                "epoch": int(epochs[c]), "val_metric": float(val[c]), "dominant_feature": names[top],
                "dominance_ratio": ratio})

    spike = detect_volatility_spike(mean_volatility_series(h), t.spike_window, t.spike_k, epochs)
    gap = float(tr[-1] - val[-1])
    if spike is not None and gap >= gap_needed:
        return PathologyVerdict(OVERFIT_SPURIOUS, {"spike_epoch": spike, "divergence_gap": gap,
                                                   "final_val_metric": float(val[-1])})

    scale = float(np.max(impacts[-1]))
    curv = h.component_matrix("nonlinearity")
    inter = h.component_matrix("interaction")
    character = float(np.nanmax(np.concatenate([curv.ravel(), inter.ravel()])))
    flat = scale > 0 and character < t.flat_fraction * scale
    if val[-1] < floor and flat:
        return PathologyVerdict(UNDERFIT, {"final_val_metric": float(val[-1]), "max_character": character,
                                           "impact_scale": scale})

    return PathologyVerdict(HEALTHY, {"final_val_metric": float(val[-1]), "divergence_gap": gap,
                                      "spike_epoch": spike})


# spatial metrics --------------------------------------------------------------------------------

@dataclass
class ImpactGrid:
    values: np.ndarray
    epoch: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or min(self.values.shape) < 3:
            raise ValueError("impact grid must be 2-D with both sides >= 3")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("impact grid entries must be finite and non-negative")

    @classmethod
    def from_impacts(cls, impacts, shape, epoch=None) -> "ImpactGrid":
        """Arrange per-position impacts (row-major feature order) into a grid."""
        return cls(np.asarray(impacts, dtype=np.float64).reshape(shape), epoch)


def _as_grid(grid) -> np.ndarray:
    return grid.values if isinstance(grid, ImpactGrid) else ImpactGrid(grid).values


def fbr(grid, crop_fraction: float = 0.5) -> float:
    """Mean impact in the centred crop over mean impact outside it.

    Returns ``inf`` when the periphery carries no impact at all.
    """
    g = _as_grid(grid)
    if not 0 < crop_fraction < 1:
        raise ValueError("crop_fraction must lie in (0, 1)")
    h, w = g.shape
    ch, cw = int(round(crop_fraction * h)), int(round(crop_fraction * w))
    if not (1 <= ch < h and 1 <= cw < w):
        raise ValueError("grid too small for this crop fraction")
    r0, c0 = (h - ch) // 2, (w - cw) // 2
    mask = np.zeros(g.shape, dtype=bool)
    mask[r0:r0 + ch, c0:c0 + cw] = True
    # divide by the maximum first so a uniform grid averages exact ones
    top = g.max()
    if top > 0:
        g = g / top
    inner, outer = g[mask].mean(), g[~mask].mean()
    if outer == 0:
        return math.inf
    return float(inner / outer)


def com_distance(grid) -> float:
    g = _as_grid(grid)
    total = g.sum()
    if not total > 0:
        raise ValueError("center of mass is undefined for an all-zero grid")
    h, w = g.shape
    rows, cols = np.indices(g.shape)
    r = float((g * rows).sum() / total)
    c = float((g * cols).sum() / total)
    return math.hypot(r - (h - 1) / 2, c - (w - 1) / 2)


def drift_epoch(fbr_series, threshold: float = 0.5, epochs=None):
    """First point from which FBR stays below ``threshold`` to the end of the series."""
    s = np.asarray(fbr_series, dtype=np.float64)
    if not len(s):
        raise InsufficientDataError("empty series")
    below = s < threshold
    if not below[-1]:
        return None
    i = len(s) - 1
    while i > 0 and below[i - 1]:
        i -= 1
    return _label(i, epochs)
