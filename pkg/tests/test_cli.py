import json
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from ffca.cli import main
from ffca.experiments import ExperimentConfig
from ffca.svg import emit_svg, heatmap, line_chart, radar_chart

SVG_NS = "{http://www.w3.org/2000/svg}"


def write_config(tmp_path, **cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def err_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def small(tmp_path, out, **over):
    cfg = {"dataset": {"generator": "ground_truth", "n": 1000, "seed": 0}, "model": {"layer_dims": [16]},
           "train": {"epochs": 20, "capture_interval": 10, "batch_size": 64},
           "analysis": {"sample_size": 64, "hessian_mode": "full"}, "out": str(tmp_path / out)}
    cfg.update(over)
    return write_config(tmp_path, **cfg)


# exit codes -------------------------------------------------------------------------------------------

def test_unknown_experiment_exit_2(capsys):
    assert main(["experiment", "no-such-thing"]) == 2
    e = err_json(capsys)
    assert e["error"] == "ConfigError" and "ground-truth" in e["message"]


def test_missing_csv_exit_3(tmp_path, capsys):
    cfg = small(tmp_path, "o", dataset={"csv": str(tmp_path / "absent.csv"), "target": "y"})
    assert main(["analyze", "--config", cfg]) == 3
    e = err_json(capsys)
    assert e["stage"] == "data" and "absent.csv" in e["message"]


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["track", "--config", small(tmp_path, "o"), "--capture-interval", "30"]) == 2
    assert main(["track", "--config", small(tmp_path, "o"), "--capture-interval", "3"]) == 2
    assert main(["analyze", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["analyze", "--config", write_config(tmp_path, bogus=1)]) == 2
    assert main(["verify"]) == 2
    capsys.readouterr()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_4(tmp_path, capsys):
    cfg = small(tmp_path, "o", train={"epochs": 5, "capture_interval": 5, "learning_rate": 1e300,
                                      "optimizer": "sgd"})
    assert main(["track", "--config", cfg]) == 4
    e = err_json(capsys)
    assert e["error"] == "DivergenceError" and e["epoch"] >= 1


# analyze / track ----------------------------------------------------------------------------------------

def test_analyze_ground_truth_outputs(tmp_path, capsys):
    assert main(["analyze", "--config", small(tmp_path, "gt")]) == 0
    out = tmp_path / "gt"
    assert len(list(out.glob("radar_*.svg"))) == 8
    for name in ("signatures.json", "archetypes.json", "interaction.csv", "manifest.json"):
        assert (out / name).exists()
    assert len(json.loads((out / "archetypes.json").read_text())) == 8
    capsys.readouterr()


def test_analyze_diagonal_marks_indeterminate(tmp_path, capsys):
    assert main(["analyze", "--config", small(tmp_path, "diag"), "--hessian", "diagonal"]) == 0
    out = tmp_path / "diag"
    classes = json.loads((out / "archetypes.json").read_text())
    assert all(c["levels"]["X"] is None for c in classes)
    assert any(c["indeterminate"] for c in classes)
    assert not (out / "interaction.csv").exists()
    capsys.readouterr()


def test_track_interval_and_determinism(tmp_path, capsys):
    cfg = small(tmp_path, "t1", dataset={"generator": "linear", "n": 1000, "seed": 0}, model={"layer_dims": [4]},
                train={"epochs": 100, "capture_interval": 10, "batch_size": 256})
    assert main(["track", "--config", cfg]) == 0
    assert main(["track", "--config", cfg, "--out", str(tmp_path / "t2")]) == 0
    a, b = tmp_path / "t1", tmp_path / "t2"
    assert len((a / "history.jsonl").read_text().splitlines()) == 10
    assert json.loads((a / "diagnosis.json").read_text())["kind"] == "Healthy"
    for p in sorted(a.iterdir()):
        if p.suffix in (".json", ".jsonl", ".csv", ".svg") and p.name != "manifest.json":
            assert p.read_bytes() == (b / p.name).read_bytes(), p.name
    capsys.readouterr()


def test_track_leak_config(tmp_path, capsys):
    cfg = small(tmp_path, "leak", dataset={"generator": "feature_engineering", "n": 2000, "seed": 0,
                                           "inject": [{"kind": "leak"}]},
                model={"capacity": "high"},
                train={"epochs": 40, "capture_interval": 4, "batch_size": 32, "learning_rate": 3e-3})
    assert main(["track", "--config", cfg]) == 0
    diag = json.loads((tmp_path / "leak" / "diagnosis.json").read_text())
    assert diag["kind"] == "DataLeakage" and diag["evidence"]["dominant_feature"] == "leaky_feature"
    capsys.readouterr()


# verify -------------------------------------------------------------------------------------------------

def test_verify_detects_tampering(tmp_path, capsys):
    assert main(["analyze", "--config", small(tmp_path, "v")]) == 0
    assert main(["verify", str(tmp_path / "v")]) == 0
    target = tmp_path / "v" / "signatures.json"
    target.write_text(target.read_text().replace("0", "1", 1))
    assert main(["verify", str(tmp_path / "v")]) == 3
    assert "signatures.json" in err_json(capsys)["message"]
    (tmp_path / "empty").mkdir()
    assert main(["verify", str(tmp_path / "empty")]) == 3


def test_flags_override_config(tmp_path):
    cfg = ExperimentConfig.load(small(tmp_path, "o"))
    moved = cfg.override(seed=5, hessian="diagonal", beta=3.0, capture_interval=5, out="elsewhere")
    assert moved.train.seed == 5 and moved.dataset["seed"] == 5 and moved.analysis.hessian_mode == "diagonal"
    assert moved.analysis.beta == 3.0 and moved.train.capture_interval == 5 and moved.out == "elsewhere"
    assert cfg.analysis.hessian_mode == "full"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ffca.cli", "experiment", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["error"] == "ConfigError"


# svg ------------------------------------------------------------------------------------------------------

def parse(text):
    root = ET.fromstring(text)
    assert root.tag == SVG_NS + "svg"
    assert "nan" not in text.lower()
    return root


def test_line_chart_two_points():
    root = parse(line_chart({"a": [0.0, 1.0]}, x=[1, 2], title="t & <u>"))
    assert len(root.findall(f"{SVG_NS}polyline")) == 1


def test_radar_zeros_is_valid():
    root = parse(radar_chart(["I", "S", "N", "X"], [0.0, 0.0, 0.0, 0.0]))
    poly = root.findall(f"{SVG_NS}polygon")[-1]
    assert set(poly.get("points").split()) == {"200.00,210.00"}


def test_heatmap_spans_own_range():
    cells = lambda m: [r.get("fill") for r in parse(heatmap(m)).findall(f"{SVG_NS}rect")[1:]]
    small_scale = cells(np.array([[0.0, 1e-3], [2e-3, 4e-3]]))
    large_scale = cells(np.array([[0.0, 1e3], [2e3, 4e3]]))
    assert small_scale == large_scale
    assert small_scale[0] == "#ffffff" and small_scale[-1] == "#08306b"


def test_svg_rejects_nan_and_is_byte_stable(tmp_path):
    with pytest.raises(ValueError):
        line_chart({"a": [0.0, float("nan")]})
    a = emit_svg("radar", {"labels": list("abc"), "values": [0.1, 0.5, 1.0]}, tmp_path / "a.svg")
    b = emit_svg("radar", {"labels": list("abc"), "values": [0.1, 0.5, 1.0]}, tmp_path / "b.svg")
    assert Path(a).read_bytes() == Path(b).read_bytes()
    with pytest.raises(ValueError):
        emit_svg("pie", {}, tmp_path / "c.svg")


def test_all_emitted_svgs_parse(tmp_path, capsys):
    assert main(["track", "--config", small(tmp_path, "s")]) == 0
    assert main(["analyze", "--config", small(tmp_path, "s2")]) == 0
    svgs = list((tmp_path / "s").glob("*.svg")) + list((tmp_path / "s2").glob("*.svg"))
    assert len(svgs) > 10
    for p in svgs:
        parse(p.read_text())
    capsys.readouterr()
