"""Experiment configuration, scripted protocols and run manifests.

Every run owns one output directory. All JSON is written with sorted keys
and ``repr`` floats so reruns with the same seed give identical bytes; the
only exceptions are wall-clock timings (``manifest.json`` ``timing`` and
the scaling experiment's time table).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from . import datasets as ds
from .archetype import classify, classifications_to_json
from .baselines import (
    engineer_features,
    gradient_importance,
    importance_table_csv,
    permutation_importance,
    ridge_fit,
    ridge_r2,
    robustness_report,
    sampled_shapley,
)
from .dynamics import (
    diagnose,
    hierarchical_order,
    mean_volatility_series,
    track,
    _dominance,
)
from .errors import ConfigError, DataError
from .model import Mlp, ModelFunction, TaskKind, init_model, load_model, model_to_dict, with_smoothed_activations
from .normalize import save_transforms
from .signature import (
    AnalysisConfig,
    analysis_points,
    analyze,
    compute_signatures,
    select_analysis_rows,
    signature_correlation,
    signatures_to_json,
)
from .svg import emit_svg
from .training import TrainConfig, train

N_DEFAULT = 4000
CAPACITY = {"low": [1], "high": [64, 64, 64]}
COMPONENTS = ("impact", "volatility", "nonlinearity", "interaction")


@contextmanager
def stage(name: str):
    """Tag any exception escaping the block with the pipeline stage it came from."""
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


# configuration ----------------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """JSON schema::

        {"name": str,
         "dataset": {"generator": <datasets.GENERATORS key>, "n": int, "seed": int,
                     "inject": [{"kind": "leak", "noise_sd": float} | {"kind": "spurious", "strength": float}],
                     "unit_scale": bool}
                  | {"csv": path, "target": column, "task": "regression"|"classification"},
         "model": {"capacity": "low"|"high"} | {"layer_dims": [hidden widths]} | {"checkpoint": path},
         "train": TrainConfig fields, "analysis": AnalysisConfig fields, "out": directory}
    """

    name: str = "custom"
    dataset: dict = field(default_factory=lambda: {"generator": "credit_loan", "n": N_DEFAULT, "seed": 0})
    model: dict = field(default_factory=lambda: {"capacity": "high"})
    train: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    out: str = "ffca_out"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            train_cfg = TrainConfig(**d.get("train", {}))
            analysis_cfg = AnalysisConfig(**d.get("analysis", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(d.get("name", "custom"), dict(d.get("dataset", cls().dataset)), dict(d.get("model", cls().model)),
                  train_cfg, analysis_cfg, str(d.get("out", "ffca_out")))
        if "generator" not in cfg.dataset and "csv" not in cfg.dataset:
            raise ConfigError("dataset needs either 'generator' or 'csv'")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        return {"name": self.name, "dataset": self.dataset, "model": self.model, "train": self.train.to_dict(),
                "analysis": self.analysis.to_dict(), "out": self.out}

    def override(self, seed=None, hessian=None, beta=None, capture_interval=None, out=None) -> "ExperimentConfig":
        d = self.to_dict()
        if seed is not None:
            d["train"]["seed"] = seed
            d["analysis"]["seed"] = seed
            d["dataset"] = {**d["dataset"], "seed": seed} if "generator" in d["dataset"] else d["dataset"]
        if hessian is not None:
            d["analysis"]["hessian_mode"] = hessian
        if beta is not None:
            d["analysis"]["beta"] = beta
        if capture_interval is not None:
            d["train"]["capture_interval"] = capture_interval
        if out is not None:
            d["out"] = out
        return ExperimentConfig.from_dict(d)


def build_dataset(spec: dict):
    """Returns ``(Dataset, RoleSpec or None)``."""
    if "csv" in spec:
        data = ds.load_csv(spec["csv"], spec.get("target", "target"), spec.get("task", "regression"),
                           spec.get("seed", 0))
        roles = None
    else:
        gen = ds.GENERATORS.get(spec["generator"])
        if gen is None:
            raise ConfigError(f"unknown generator {spec['generator']!r}; valid: {sorted(ds.GENERATORS)}")
        data, roles = gen(int(spec.get("n", N_DEFAULT)), int(spec.get("seed", 0)))
    for inj in spec.get("inject", []):
        kind = inj.get("kind")
        seed = int(inj.get("seed", spec.get("seed", 0)))
        if kind == "leak":
            data = ds.inject_leak(data, float(inj.get("noise_sd", 0.01 * np.std(data.y))), seed)
        elif kind == "spurious":
            data = ds.inject_spurious(data, float(inj.get("strength", 0.98)), seed)
        else:
            raise ConfigError(f"unknown injection kind {kind!r}")
    if spec.get("unit_scale", True):
        data = ds.unit_scale(data)
    return data, roles


def output_dim(data) -> int:
    if data.task is TaskKind.REGRESSION:
        return 1
    return int(np.max(data.y)) + 1


def build_model(spec: dict, data, seed: int) -> Mlp:
    if "checkpoint" in spec:
        try:
            return load_model(spec["checkpoint"])
        except OSError as exc:
            raise DataError(f"cannot read checkpoint {spec['checkpoint']}: {exc.strerror}") from None
    if "layer_dims" in spec:
        hidden = list(spec["layer_dims"])
    else:
        cap = spec.get("capacity", "high")
        if cap not in CAPACITY:
            raise ConfigError(f"capacity must be one of {sorted(CAPACITY)}")
        hidden = CAPACITY[cap]
    return init_model([data.d] + hidden + [output_dim(data)], seed)


# persistence ------------------------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def rows_to_csv(rows: list[dict]) -> str:
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([_cell(r.get(k, "")) for k in keys])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, Enum):
        return v.value
    return v


def rows_to_text(title: str, rows: list[dict]) -> str:
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.4g}"
        return str(_cell(v))

    table = [keys] + [[fmt(r.get(k, "")) for k in keys] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(keys))]
    lines = [title, ""]
    for n, row in enumerate(table):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


class Run:
    """Output directory plus the list of artifacts written into it."""

    def __init__(self, out):
        self.out = Path(out)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
        self.files: list[str] = []
        self.started = time.perf_counter()

    def _track(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.out / name

    def json(self, name: str, obj) -> None:
        self._track(name).write_text(dumps(obj))

    def text(self, name: str, text: str) -> None:
        self._track(name).write_text(text)

    def svg(self, name: str, kind: str, **data) -> None:
        emit_svg(kind, data, self._track(name))

    def finish(self, config: dict, seeds: dict, verdicts: dict) -> dict:
        manifest = {
            "config": config,
            "seeds": seeds,
            "files": {name: sha256_file(self.out / name) for name in sorted(self.files)},
            "timing": {"seconds": round(time.perf_counter() - self.started, 3)},
            "verdicts": verdicts,
        }
        (self.out / "manifest.json").write_text(dumps(manifest))
        return manifest


def verify_manifest(out) -> list[str]:
    """Names of artifacts that are missing or whose hash differs from the manifest."""
    out = Path(out)
    try:
        manifest = json.loads((out / "manifest.json").read_text())
    except OSError:
        raise DataError(f"no manifest.json in {out}") from None
    bad = []
    for name, digest in manifest["files"].items():
        p = out / name
        if not p.exists() or sha256_file(p) != digest:
            bad.append(name)
    return bad


# reusable pieces --------------------------------------------------------------------------------

def _radar_values(signatures) -> list[list[float]]:
    comps = [[getattr(s, c) or 0.0 for s in signatures] for c in COMPONENTS]
    tops = [max(c) if max(c) > 0 else 1.0 for c in comps]
    return [[comps[k][i] / tops[k] for k in range(4)] for i in range(len(signatures))]


def write_static(run: Run, result, classes, prefix: str = "", radars: bool = True) -> None:
    sigs = result.signatures
    run.text(f"{prefix}signatures.json", signatures_to_json(sigs) + "\n")
    run.text(f"{prefix}archetypes.json", classifications_to_json(classes) + "\n")
    if result.interaction is not None:
        run.text(f"{prefix}interaction.csv", result.interaction.to_csv())
        run.svg(f"{prefix}interaction.svg", "heatmap", matrix=result.interaction.values,
                row_labels=result.interaction.feature_names, col_labels=result.interaction.feature_names,
                title="mean |d2f/dxi dxj|")
    if radars:
        for s, c, vals in zip(sigs, classes, _radar_values(sigs)):
            run.svg(f"{prefix}radar_{s.feature_name}.svg", "radar", labels=["I", "S", "N", "X"], values=vals,
                    title=f"{s.feature_name}: {c.archetype.value}")


def write_history(run: Run, history, prefix: str = "") -> None:
    run.text(f"{prefix}history.jsonl", history.to_jsonl())
    epochs = history.epochs
    for comp in COMPONENTS:
        M = history.component_matrix(comp)
        if np.all(np.isnan(M)):
            continue
        run.svg(f"{prefix}evolution_{comp}.svg", "line", series={n: M[:, i] for i, n in enumerate(history.feature_names)},
                x=epochs, title=f"{comp} during training", xlabel="epoch", ylabel=comp)
    run.svg(f"{prefix}mean_volatility.svg", "line", series={"mean volatility": mean_volatility_series(history)},
            x=epochs, title="mean feature volatility", xlabel="epoch")
    run.svg(f"{prefix}metrics.svg", "line", series={"train": history.metric_series("train"),
                                                     "validation": history.metric_series("val")},
            x=epochs, title="metric during training", xlabel="epoch")


def _train_cfg(seed: int, **kw) -> TrainConfig:
    base = {"epochs": 100, "batch_size": 128, "learning_rate": 3e-4, "capture_interval": 100, "seed": seed}
    base.update(kw)
    return TrainConfig(**base)


def _fit(data, hidden, seed: int, **kw):
    with stage("train"):
        return train(init_model([data.d] + hidden + [output_dim(data)], seed), data, _train_cfg(seed, **kw))


def _static(model, data, analysis: AnalysisConfig):
    with stage("analysis"):
        res = analyze(model, data, analysis)
        return res, classify(res.signatures)


def _baselines(model, data, res, seed: int):
    with stage("baselines"):
        X_raw = data.X[res.rows]
        grad = gradient_importance(model, X_raw, data.task, data.feature_names)
        shap = sampled_shapley(model, X_raw, None, 64, seed, data.task, data.feature_names)
        perm = permutation_importance(model, data, 5, seed)
    return grad, shap, perm


def _importance_rows(res, classes, grad, shap, perm):
    rows = []
    for i, (s, c) in enumerate(zip(res.signatures, classes)):
        rows.append({"feature": s.feature_name, "impact": s.impact, "volatility": s.volatility,
                     "nonlinearity": s.nonlinearity, "interaction": s.interaction if s.interaction is not None else "",
                     "archetype": c.archetype.value, "shap": shap.values[i], "permutation": perm.values[i],
                     "gradient": grad.values[i]})
    return rows


def _table(res, grad, shap, perm) -> str:
    cols = {c: res.result.component(c) for c in COMPONENTS if not np.all(np.isnan(res.result.component(c)))}
    cols.update({"shap": shap.values, "permutation": perm.values, "gradient": grad.values})
    return importance_table_csv([s.feature_name for s in res.signatures], cols)


# protocols --------------------------------------------------------------------------------------

def exp_ground_truth(run: Run, seed: int, analysis: AnalysisConfig, **_):
    data, roles, handle = ds.gen_ground_truth(2000, seed)
    cfg = analysis
    rows_out, per_seed = [], {}
    for k, s in enumerate((seed, seed + 1, seed + 2)):
        with stage("analysis"):
            rows = select_analysis_rows(data.y, data.task, cfg.sample_size, s)
            X, fn = handle.at_rows(data, rows)
            result = compute_signatures(fn, X, data.task, cfg, data.feature_names)
            classes = classify(result.signatures)
        per_seed[s] = classes
        write_static(run, result, classes, prefix=f"seed{s}_", radars=(k == 0))
        if k == 0:
            first = result
    correct = {s: sum(c.archetype is roles.expected(c.feature) for c in cl) / len(cl) for s, cl in per_seed.items()}
    for i, sig in enumerate(first.signatures):
        row = {"feature": sig.feature_name, "expected": roles.expected(sig.feature_name).value}
        for s, cl in per_seed.items():
            row[f"seed{s}"] = cl[i].archetype.value
        row.update({"I": sig.impact, "S": sig.volatility, "N": sig.nonlinearity,
                    "X": sig.interaction if sig.interaction is not None else ""})
        rows_out.append(row)
    verdicts = {"accuracy_per_seed": {str(s): v for s, v in correct.items()},
                "all_correct": all(v == 1.0 for v in correct.values())}
    return rows_out, verdicts


def exp_credit_loan(run: Run, seed: int, analysis: AnalysisConfig, capture_interval=None, **_):
    data, roles = build_dataset({"generator": "credit_loan", "n": N_DEFAULT, "seed": seed})
    interval = capture_interval or 1
    pair = [p for pair in roles.partners for p in pair]
    rows, verdicts, finals = [], {}, {}
    for cap in ("low", "high"):
        model = init_model([data.d] + CAPACITY[cap] + [1], seed)
        with stage(f"track:{cap}"):
            trained, log, hist = track(model, data, _train_cfg(seed, capture_interval=interval), analysis)
        write_history(run, hist, prefix=f"{cap}_")
        run.text(f"{cap}_model.json", dumps(model_to_dict(trained)))
        order = hierarchical_order(hist, roles)
        verdict = diagnose(hist)
        run.json(f"{cap}_hierarchy.json", order.to_dict())
        run.json(f"{cap}_diagnosis.json", verdict.to_dict())
        last = hist.entries[-1].signatures
        inter = [s.interaction for s in last if s.feature_name in pair]
        finals[cap] = float(np.mean(inter)) if None not in inter else float("nan")
        take = {f"takeoff_{t.feature}_{t.component}": t.epoch for t in order.takeoffs}
        rows.append({"capacity": cap, "layer_dims": "-".join(map(str, model.layer_dims)),
                     "val_r2": log[-1].val_metric, "pair_interaction": finals[cap],
                     "impact_before_interaction": order.impact_before_interaction,
                     "diagnosis": verdict.kind, **take})
        verdicts[f"val_r2_{cap}"] = log[-1].val_metric
        verdicts[f"impact_before_interaction_{cap}"] = order.impact_before_interaction
        verdicts[f"diagnosis_{cap}"] = verdict.kind
        if cap == "high":
            res, classes = _static(trained, data, analysis)
            grad, shap, perm = _baselines(trained, data, res, seed)
            run.text("high_importance.csv", _table(res, grad, shap, perm))
            imp = res.result.component("impact")
            verdicts["r_impact_gradient"] = signature_correlation(imp, grad.values)
            verdicts["r_impact_shap"] = signature_correlation(imp, shap.values)
    low = finals["low"]
    verdicts["interaction_ratio_high_low"] = finals["high"] / low if low > 0 else float("inf")
    return rows, verdicts


def exp_deceptive_ablation(run: Run, seed: int, analysis: AnalysisConfig, **_):
    target = "credit_history_len"
    rows, worlds = [], {}
    for which in ("full", "ablated"):
        data, roles = build_dataset({"generator": f"deceptive_{which}", "n": N_DEFAULT, "seed": seed})
        model, _log = _fit(data, CAPACITY["high"], seed)
        res, classes = _static(model, data, analysis)
        grad, shap, perm = _baselines(model, data, res, seed)
        write_static(run, res.result, classes, prefix=f"{which}_", radars=False)
        run.text(f"{which}_importance.csv", _table(res, grad, shap, perm))
        i = data.feature_names.index(target)
        sig = res.signatures[i]
        worlds[which] = {"impact": sig.impact, "shap": shap.values[i], "permutation": perm.values[i],
                         "interaction": sig.interaction, "val_r2": _log[-1].val_metric}
        if which == "full":
            X = res.result.component("interaction")
            partners = set(roles.partners_of(target)) | {target}
            others = [X[k] for k, n in enumerate(data.feature_names) if n not in partners]
            worlds[which]["exceeds_non_partners"] = bool(X[i] > max(others))
            imp = res.result.component("impact")
            worlds[which]["r_impact_gradient"] = signature_correlation(imp, grad.values)
            worlds[which]["r_impact_shap"] = signature_correlation(imp, shap.values)
        rows.append({"world": which, "feature": target, **{k: v for k, v in worlds[which].items()
                                                          if not k.startswith("r_")}})
    drop = {k: 1.0 - worlds["ablated"][k] / worlds["full"][k] for k in ("impact", "shap", "permutation")
            if worlds["full"][k] > 0}
    rows.append({"world": "relative_drop", "feature": target, **drop})
    run.svg("relative_drop.svg", "line", series={k: [worlds["full"][k], worlds["ablated"][k]]
                                                  for k in ("impact", "shap")},
            x=[0, 1], title=f"{target}: full world (0) vs ablated world (1)")
    verdicts = {"impact_drop": drop.get("impact"), "shap_drop": drop.get("shap"),
                "interaction_exceeds_non_partners": worlds["full"].get("exceeds_non_partners"),
                "r_impact_gradient": worlds["full"]["r_impact_gradient"],
                "r_impact_shap": worlds["full"]["r_impact_shap"]}
    return rows, verdicts


def exp_feature_engineering(run: Run, seed: int, analysis: AnalysisConfig, ridge_lambda: float = 1.0, **_):
    data, roles = build_dataset({"generator": "feature_engineering", "n": N_DEFAULT, "seed": seed})
    model, log = _fit(data, CAPACITY["high"], seed)
    res, classes = _static(model, data, analysis)
    write_static(run, res.result, classes)
    with stage("ridge"):
        tr, va = data.train_idx, data.val_idx
        before = ridge_r2(ridge_fit(data.X[tr], data.y[tr], ridge_lambda), data.X[va], data.y[va])
        eng = engineer_features(data, classes, res.result.interaction)
        after = ridge_r2(ridge_fit(eng.X[tr], eng.y[tr], ridge_lambda), eng.X[va], eng.y[va])
    added = eng.feature_names[data.d:]
    run.json("ridge.json", {"lambda": ridge_lambda, "r2_before": before, "r2_after": after, "added": added})
    rows = [{"stage": "diagnostic_mlp", "features": data.d, "val_r2": log[-1].val_metric, "added": ""},
            {"stage": "ridge_original", "features": data.d, "val_r2": before, "added": ""},
            {"stage": "ridge_engineered", "features": eng.d, "val_r2": after, "added": " ".join(added)}]
    return rows, {"ridge_r2_before": before, "ridge_r2_after": after, "added_features": added}


def _demo(run: Run, generator: str, seed: int, analysis: AnalysisConfig):
    data, roles = build_dataset({"generator": generator, "n": N_DEFAULT, "seed": seed})
    model, log = _fit(data, CAPACITY["high"], seed)
    res, classes = _static(model, data, analysis)
    grad, shap, perm = _baselines(model, data, res, seed)
    write_static(run, res.result, classes)
    run.text("importance.csv", _table(res, grad, shap, perm))
    rows = _importance_rows(res, classes, grad, shap, perm)
    for r in rows:
        r["expected"] = roles.expected(r["feature"]).value
    return data, model, res, rows, {"val_r2": log[-1].val_metric,
                                    "archetypes": {c.feature: c.archetype.value for c in classes}}


def exp_volatility_demo(run: Run, seed: int, analysis: AnalysisConfig, **_):
    data, model, res, rows, verdicts = _demo(run, "volatility_example", seed, analysis)
    # sliced view: mean gradient of debt_to_income within each loan-purpose slice
    view = with_smoothed_activations(model, analysis.beta)
    G = ModelFunction(view, data.task).gradients(res.coordinates)
    flag = data.X[res.rows, data.feature_names.index("loan_purpose_Personal")]
    j = data.feature_names.index("debt_to_income")
    slices = {f"slice_personal_{int(v)}": float(G[flag == v, j].mean()) for v in (0.0, 1.0) if np.any(flag == v)}
    run.json("slices.json", slices)
    verdicts.update(slices)
    return rows, verdicts


def exp_nonlinearity_demo(run: Run, seed: int, analysis: AnalysisConfig, **_):
    _, _, _, rows, verdicts = _demo(run, "nonlinearity_example", seed, analysis)
    return rows, verdicts


def _pathology(run: Run, label: str, data, seed: int, analysis: AnalysisConfig, **train_kw):
    model = init_model([data.d] + CAPACITY["high"] + [1], seed)
    with stage(f"track:{label}"):
        _, log, hist = track(model, data, _train_cfg(seed, **train_kw), analysis)
    write_history(run, hist, prefix=f"{label}_")
    verdict = diagnose(hist)
    run.json(f"{label}_diagnosis.json", verdict.to_dict())
    impacts = hist.component_matrix("impact")
    early = max(1, int(math.ceil(0.1 * len(hist))))
    best = max((_dominance(r) for r in impacts[:early]), key=lambda t: t[1])
    row = {"run": label, "diagnosis": verdict.kind, "final_train_r2": log[-1].train_metric,
           "final_val_r2": log[-1].val_metric, "gap": log[-1].train_metric - log[-1].val_metric,
           "spike_epoch": verdict.evidence.get("spike_epoch", ""),
           "early_dominant_feature": hist.feature_names[best[0]], "early_dominance": best[1]}
    return row, verdict


def exp_spurious(run: Run, seed: int, analysis: AnalysisConfig, capture_interval=None, **_):
    base, _ = ds.gen_credit_loan(N_DEFAULT, seed)
    data = ds.unit_scale(ds.inject_spurious(base, 0.98, seed))
    control, _ = ds.gen_linear_world(N_DEFAULT, seed)
    interval = capture_interval or 2
    rows, verdicts = [], {}
    for label, d in (("spurious", data), ("control", control)):
        row, v = _pathology(run, label, d, seed, analysis, capture_interval=interval)
        rows.append(row)
        verdicts[f"{label}_diagnosis"] = v.kind
        verdicts[f"{label}_evidence"] = v.evidence
    return rows, verdicts


def exp_leakage(run: Run, seed: int, analysis: AnalysisConfig, capture_interval=None, **_):
    base, _ = ds.gen_feature_engineering_world(N_DEFAULT, seed)
    data = ds.unit_scale(ds.inject_leak(base, 0.01 * float(np.std(base.y)), seed))
    row, v = _pathology(run, "leak", data, seed, analysis, epochs=200, learning_rate=3e-3,
                        capture_interval=capture_interval or 4)
    return [row], {"leak_diagnosis": v.kind, "leak_evidence": v.evidence, "early_dominance": row["early_dominance"],
                   "early_dominant_feature": row["early_dominant_feature"]}


def exp_robustness(run: Run, seed: int, analysis: AnalysisConfig, **_):
    data, _ = build_dataset({"generator": "credit_loan", "n": N_DEFAULT, "seed": seed})
    model, _log = _fit(data, CAPACITY["high"], seed)
    with stage("analysis"):
        rows_idx, U, scaler, rank_map = analysis_points(data, analysis)
        cfg = AnalysisConfig(**{**analysis.to_dict(), "hessian_mode": "full"})
        report = robustness_report(model, [0.0, 0.001, 0.005, 0.01, 0.05, 0.1], U, data.task, cfg,
                                   seeds=tuple(range(seed, seed + 5)), feature_names=data.feature_names)
    run.json("robustness.json", report)
    sig = [r["sigma"] for r in report]
    run.svg("robustness.svg", "line", series={"pearson r": [r["pearson_r"] for r in report],
                                               "agreement": [r["agreement"] for r in report]},
            x=sig, title="signature stability under relative weight noise", xlabel="sigma / weight sd")
    rows = [{k: v for k, v in r.items() if k != "per_seed_r"} for r in report]
    at1 = [r for r in report if r["sigma"] <= 0.01]
    return rows, {"min_r_at_or_below_1pct": min(r["pearson_r"] for r in at1),
                  "min_agreement_at_or_below_1pct": min(r["agreement"] for r in at1)}


SCALING_DIMS = (8, 32, 128)


def measure_scaling(dims=SCALING_DIMS, n: int = 1024, hidden=(16,), repeats: int = 5, seed: int = 0,
                    backend: str | None = None):
    """Median wall time of compute_signatures per (d, mode) and the log-log slope per mode.

    Every case is run once untimed before any timing starts, so one-off costs
    such as BLAS thread start-up and first-touch page faults are not charged
    to the smallest ``d``.
    """
    cases = []
    for d in dims:
        model = with_smoothed_activations(init_model([d, *hidden, 1], seed), 10.0)
        fn = ModelFunction(model, TaskKind.REGRESSION, hessian_cap=max(256, d), backend=backend)
        X = np.random.default_rng(seed).uniform(size=(n, d))
        for mode in ("diagonal", "full"):
            cases.append((d, mode, fn, X, AnalysisConfig(hessian_mode=mode, hessian_cap=max(256, d))))
    for _, _, fn, X, cfg in cases:
        compute_signatures(fn, X, config=cfg)
    rows = []
    for d, mode, fn, X, cfg in cases:
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            compute_signatures(fn, X, config=cfg)
            times.append(time.perf_counter() - t0)
        rows.append({"d": d, "mode": mode, "seconds": float(np.median(times))})
    slopes = {}
    for mode in ("diagonal", "full"):
        t = [r["seconds"] for r in rows if r["mode"] == mode]
        slopes[mode] = float(np.polyfit(np.log(list(dims)), np.log(t), 1)[0])
    return rows, slopes


def exp_scaling(run: Run, seed: int, analysis: AnalysisConfig, **_):
    with stage("timing"):
        rows, slopes = measure_scaling(seed=seed)
    run.text("scaling.csv", rows_to_csv(rows))
    run.svg("scaling.svg", "line", series={m: np.log([r["seconds"] for r in rows if r["mode"] == m])
                                            for m in ("diagonal", "full")},
            x=np.log(SCALING_DIMS), title="log time vs log d", xlabel="log d")
    return rows, {"slope_diagonal": slopes["diagonal"], "slope_full": slopes["full"]}


EXPERIMENTS = {
    "ground-truth": exp_ground_truth,
    "credit-loan": exp_credit_loan,
    "deceptive-ablation": exp_deceptive_ablation,
    "feature-engineering": exp_feature_engineering,
    "volatility-demo": exp_volatility_demo,
    "nonlinearity-demo": exp_nonlinearity_demo,
    "spurious": exp_spurious,
    "leakage": exp_leakage,
    "robustness": exp_robustness,
    "scaling": exp_scaling,
}

# files whose content depends on wall-clock time
TIMING_DEPENDENT = {"scaling": {"scaling.csv", "summary.csv", "summary.txt", "scaling.svg"}}


# commands ---------------------------------------------------------------------------------------

def run_experiment(name: str, out, seed: int = 0, hessian: str | None = None, beta: float | None = None,
                   capture_interval: int | None = None) -> dict:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENTS)}")
    analysis = AnalysisConfig(hessian_mode=hessian or "full", beta=beta or 10.0, seed=seed)
    run = Run(out)
    rows, verdicts = EXPERIMENTS[name](run, seed=seed, analysis=analysis, capture_interval=capture_interval)
    run.text("summary.csv", rows_to_csv(rows))
    run.text("summary.txt", rows_to_text(f"experiment {name} (seed {seed})", rows))
    config = {"experiment": name, "seed": seed, "analysis": analysis.to_dict(), "capture_interval": capture_interval}
    return run.finish(config, {"seed": seed}, verdicts)


def cmd_analyze(cfg: ExperimentConfig) -> dict:
    run = Run(cfg.out)
    with stage("data"):
        data, roles = build_dataset(cfg.dataset)
    model = build_model(cfg.model, data, cfg.train.seed)
    if "checkpoint" not in cfg.model:
        with stage("train"):
            model, log = train(model, data, cfg.train)
        run.text("metrics.csv", rows_to_csv([vars(m) for m in log]))
    with stage("analysis"):
        res = analyze(model, data, cfg.analysis)
        classes = classify(res.signatures)
    write_static(run, res.result, classes)
    save_transforms(run._track("transforms.json"), res.scaler, res.rank_map)
    run.text("model.json", dumps(model_to_dict(model)))
    verdicts = {"archetypes": {c.feature: c.archetype.value for c in classes},
                "indeterminate": [c.feature for c in classes if c.indeterminate]}
    return run.finish(cfg.to_dict(), {"train": cfg.train.seed, "analysis": cfg.analysis.seed}, verdicts)


def cmd_track(cfg: ExperimentConfig) -> dict:
    run = Run(cfg.out)
    with stage("data"):
        data, roles = build_dataset(cfg.dataset)
    model = build_model(cfg.model, data, cfg.train.seed)
    if model.smooth:
        raise ConfigError("tracking needs a ReLU model to train")
    with stage("track"):
        trained, log, hist = track(model, data, cfg.train, cfg.analysis)
    write_history(run, hist)
    run.text("metrics.csv", rows_to_csv([vars(m) for m in log]))
    run.text("model.json", dumps(model_to_dict(trained)))
    verdicts = {}
    with stage("diagnose"):
        if len(hist) >= 5:
            v = diagnose(hist)
            run.json("diagnosis.json", v.to_dict())
            verdicts["diagnosis"] = v.kind
        if roles is not None:
            order = hierarchical_order(hist, roles)
            run.json("hierarchy.json", order.to_dict())
            verdicts["impact_before_interaction"] = order.impact_before_interaction
    return run.finish(cfg.to_dict(), {"train": cfg.train.seed, "analysis": cfg.analysis.seed}, verdicts)
