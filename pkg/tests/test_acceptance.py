"""One PASS/FAIL line per acceptance criterion; the lines are repeated in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v -s``.
"""

import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ffca.dynamics import com_distance, drift_epoch, fbr
from ffca.experiments import EXPERIMENTS, TIMING_DEPENDENT, run_experiment
from ffca.functions import Polynomial
from ffca.model import ModelFunction, init_model, with_smoothed_activations
from ffca.signature import AnalysisConfig, compute_signatures

from oracles import fd_gradient, fd_hessian, net_forward, rel_err

FBR_SERIES = (1.154, 0.702, 0.403, 0.388, 0.356)
FBR_EPOCHS = (1, 5, 9, 15, 20)


def check(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    """Every experiment at seed 0, run lazily and at most once per session."""
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(name, copy="a"):
        key = (name, copy)
        if key not in cache:
            t0 = time.perf_counter()
            manifest = run_experiment(name, root / copy / name, seed=0)
            cache[key] = (manifest, root / copy / name, time.perf_counter() - t0)
        return cache[key]

    return get


# 1 -------------------------------------------------------------------------------------------------

def test_c01_derivative_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {"grad": 0.0, "hess": 0.0, "sym": 0.0, "diag": 0.0}
    for _ in range(20):
        d = int(rng.integers(1, 17))
        dims = [d] + [int(rng.integers(2, 13)) for _ in range(int(rng.integers(1, 4)))] + [1]
        m = init_model(dims, int(rng.integers(1 << 30)))
        for b in m.biases:
            b[:] = rng.normal(scale=0.3, size=b.shape)
        m = with_smoothed_activations(m, float(rng.uniform(0.5, 5)))
        fn = ModelFunction(m)
        x = rng.uniform(-1, 1, size=d)
        f = lambda z: net_forward(m.weights, m.biases, z, m.beta)[0]  # noqa: E731
        g, H = fn.hessians(x[None])
        _, D = fn.hessian_diagonals(x[None])
        worst["grad"] = max(worst["grad"], rel_err(g[0], fd_gradient(f, x)))
        worst["hess"] = max(worst["hess"], rel_err(H[0], fd_hessian(f, x)))
        worst["sym"] = max(worst["sym"], float(np.max(np.abs(H[0] - H[0].T))))
        worst["diag"] = max(worst["diag"], float(np.max(np.abs(np.diagonal(H[0]) - D[0]))))
    secs = time.perf_counter() - t0
    ok = worst["grad"] < 1e-5 and worst["hess"] < 1e-3 and worst["sym"] < 1e-8 and worst["diag"] < 1e-10 and secs < 60
    check(1, "derivative oracles on 20 random softplus MLPs", ok,
          f"grad {worst['grad']:.1e} (<1e-5), hess {worst['hess']:.1e} (<1e-3), "
          f"sym {worst['sym']:.1e} (<1e-8), diag {worst['diag']:.1e} (<1e-10), {secs:.1f}s")


# 2 -------------------------------------------------------------------------------------------------

def test_c02_analytic_signature():
    f = Polynomial(4, [(3.0, {0: 1}), (1.0, {1: 2}), (2.0, {2: 1, 3: 1})])
    X = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=4)))
    r = compute_signatures(f, X, config=AnalysisConfig(hessian_mode="full"))
    got = np.array([s.vector() for s in r.signatures])
    want = np.zeros((4, 4))
    want[0, 0] = 3.0
    want[1, 0], want[1, 1], want[1, 2] = 4 / 3, 8 / 3, 2.0
    want[2, 0] = want[3, 0] = 4 / 3  # E|2 x_partner| on {-1, 0, 1}
    want[2, 1] = want[3, 1] = 8 / 3  # Var(2 x_partner)
    want[2, 3] = want[3, 3] = 2.0
    err = float(np.max(np.abs(got - want)))
    named = (got[0, 0], got[0, 1], got[1, 2], got[2, 3], got[3, 3])
    ok = err < 1e-10 and named == (3.0, 0.0, 2.0, 2.0, 2.0)
    check(2, "analytic signature of 3x0 + x1^2 + 2x2x3", ok,
          f"I0={named[0]:g} S0={named[1]:g} N1={named[2]:g} X2={named[3]:g} X3={named[4]:g}, "
          f"max deviation from closed form {err:.1e} (<1e-10)")


# 3 -------------------------------------------------------------------------------------------------

def test_c03_ground_truth_archetypes(runs):
    manifest, _, secs = runs("ground-truth")
    acc = manifest["verdicts"]["accuracy_per_seed"]
    ok = manifest["verdicts"]["all_correct"] and len(acc) == 3 and secs < 60
    check(3, "ground-truth archetypes over 3 analysis-set seeds", ok,
          f"accuracy per seed {acc} (all 1.0), {secs:.1f}s")


# 4 -------------------------------------------------------------------------------------------------

def test_c04_credit_loan_capacity(runs):
    manifest, out, secs = runs("credit-loan")
    v = manifest["verdicts"]
    order = json.loads((out / "high_hierarchy.json").read_text())
    strict = order["impact_before_interaction"] is True
    ok = v["val_r2_high"] >= 0.95 and v["val_r2_low"] <= 0.5 and v["interaction_ratio_high_low"] >= 5 and strict \
        and secs < 300
    check(4, "credit-loan capacity study", ok,
          f"val R2 high {v['val_r2_high']:.3f} (>=0.95), low {v['val_r2_low']:.3f} (<=0.5), "
          f"pair interaction ratio {v['interaction_ratio_high_low']:.1f} (>=5), "
          f"impact before interaction {order['impact_before_interaction']}, {secs:.1f}s")


# 5 -------------------------------------------------------------------------------------------------

def test_c05_deceptive_ablation(runs):
    manifest, _, secs = runs("deceptive-ablation")
    v = manifest["verdicts"]
    ok = v["impact_drop"] >= 0.9 and v["shap_drop"] >= 0.9 and v["interaction_exceeds_non_partners"] and secs < 300
    check(5, "deceptive ablation of credit_history_len", ok,
          f"impact drop {v['impact_drop']:.3f}, shap drop {v['shap_drop']:.3f} (>=0.9), "
          f"interaction above non-partners {v['interaction_exceeds_non_partners']}, {secs:.1f}s")


# 6 -------------------------------------------------------------------------------------------------

def test_c06_feature_engineering(runs):
    manifest, _, secs = runs("feature-engineering")
    v = manifest["verdicts"]
    ok = v["ridge_r2_before"] < 0.05 and v["ridge_r2_after"] >= 0.5 and secs < 180
    check(6, "feature engineering driven by the diagnosis", ok,
          f"ridge R2 {v['ridge_r2_before']:.4f} (<0.05) -> {v['ridge_r2_after']:.4f} (>=0.5), "
          f"added {v['added_features']}, {secs:.1f}s")


# 7 -------------------------------------------------------------------------------------------------

def test_c07_pathology_fingerprints(runs):
    leak, _, t_leak = runs("leakage")
    spur, out, t_spur = runs("spurious")
    lv, sv = leak["verdicts"], spur["verdicts"]
    gap = sv["spurious_evidence"].get("divergence_gap", float("nan"))
    ok = (lv["leak_diagnosis"] == "DataLeakage" and lv["early_dominant_feature"] == "leaky_feature"
          and lv["early_dominance"] >= 5 and sv["spurious_diagnosis"] == "OverfitSpurious"
          and sv["spurious_evidence"].get("spike_epoch") is not None and gap >= 0.3
          and sv["control_diagnosis"] == "Healthy" and t_leak + t_spur < 300)
    check(7, "pathology fingerprints", ok,
          f"leak {lv['leak_diagnosis']} with early dominance {lv['early_dominance']:.1f} (>=5); "
          f"spurious {sv['spurious_diagnosis']} spike at epoch {sv['spurious_evidence'].get('spike_epoch')}, "
          f"gap {gap:.3f} (>=0.3); clean {sv['control_diagnosis']}; {t_leak + t_spur:.1f}s")


# 8 -------------------------------------------------------------------------------------------------

def test_c08_robustness(runs):
    manifest, out, secs = runs("robustness")
    v = manifest["verdicts"]
    ok = v["min_r_at_or_below_1pct"] > 0.95 and v["min_agreement_at_or_below_1pct"] >= 0.8 and secs < 120
    check(8, "robustness to relative weight noise up to 1%", ok,
          f"min r {v['min_r_at_or_below_1pct']:.5f} (>0.95), min agreement "
          f"{v['min_agreement_at_or_below_1pct']:.3f} (>=0.8), 5 seeds, {secs:.1f}s")


# 9 -------------------------------------------------------------------------------------------------

def test_c09_baseline_consistency(runs):
    manifest, _, _ = runs("credit-loan")
    v = manifest["verdicts"]
    ok = v["r_impact_gradient"] >= 0.9 and v["r_impact_shap"] >= 0.8
    check(9, "impact vs baseline attributions on one trained model", ok,
          f"r(impact, gradient) {v['r_impact_gradient']:.3f} (>=0.9), "
          f"r(impact, sampled shapley) {v['r_impact_shap']:.3f} (>=0.8)")


# 10 ------------------------------------------------------------------------------------------------

def test_c10_scaling(runs):
    manifest, _, secs = runs("scaling")
    v = manifest["verdicts"]
    ok = v["slope_diagonal"] <= 1.3 and v["slope_full"] >= 1.5 and secs < 180
    check(10, "log-log cost slopes over d in {8, 32, 128}", ok,
          f"diagonal {v['slope_diagonal']:.2f} (<=1.3), full {v['slope_full']:.2f} (>=1.5), {secs:.1f}s")


# 11 ------------------------------------------------------------------------------------------------

def test_c11_spatial_metrics():
    uniform = fbr(np.full((16, 16), 0.37))
    sym = np.zeros((9, 9))
    sym[2, 2] = sym[6, 6] = sym[2, 6] = sym[6, 2] = 1.5
    com = com_distance(sym)
    drift = drift_epoch(FBR_SERIES, 0.5, FBR_EPOCHS)
    position = drift_epoch(FBR_SERIES, 0.5)
    ok = uniform == 1.0 and com == 0.0 and drift == 9 and position == 2
    check(11, "spatial metrics", ok,
          f"fbr(uniform) {uniform!r} (==1.0), com(symmetric) {com!r} (==0), "
          f"drift on published series at capture {position + 1 if position is not None else None}, epoch {drift} (9)")


# 12 ------------------------------------------------------------------------------------------------

def _outputs(directory: Path, skip):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())
            if p.suffix in (".json", ".jsonl", ".csv") and p.name != "manifest.json" and p.name not in skip}


@pytest.mark.slow
def test_c12_determinism(runs):
    compared, differing = 0, []
    for name in EXPERIMENTS:
        skip = TIMING_DEPENDENT.get(name, set())
        _, first, _ = runs(name, "a")
        _, second, _ = runs(name, "b")
        a, b = _outputs(first, skip), _outputs(second, skip)
        if a.keys() != b.keys():
            differing.append(f"{name}: file sets differ")
            continue
        for fname in a:
            compared += 1
            if a[fname] != b[fname]:
                differing.append(f"{name}/{fname}")
    check(12, "byte-identical JSON/JSONL/CSV on rerun", not differing and compared > 0,
          f"{compared} files compared across {len(EXPERIMENTS)} experiments, "
          f"differing: {differing or 'none'} (wall-clock timings excluded)")
