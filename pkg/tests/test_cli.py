import json
import os

import numpy as np
import pytest

from laaloc import (
    EnvConfig,
    NetConfig,
    PhantomSpec,
    TrainConfig,
    gen_phantom_volume,
    init_network_params,
    load_centerline_csv,
    save_checkpoint,
    save_volume,
)
from laaloc.cli import main
from laaloc.phantoms import load_profile_family, save_truth_json


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    """One generated phantom volume + truth on disk."""
    root = tmp_path_factory.mktemp("phantom")
    volume, truth = gen_phantom_volume(PhantomSpec(rng_seed=21))
    save_volume(volume, str(root / "vol"))
    save_truth_json(truth, str(root / "vol.truth.json"))
    return root, truth


@pytest.fixture(scope="module")
def extracted(phantom_dir, tmp_path_factory):
    root, truth = phantom_dir
    out = tmp_path_factory.mktemp("extract")
    seed = ",".join(str(v) for v in truth.tip_seed)
    code = main([
        "extract", "--volume", str(root / "vol"), "--seed", seed,
        "--out", str(out / "c.csv"), "--save-mask", str(out / "mask"),
    ])
    assert code == 0
    return out, truth


class TestPhantomCmd:
    def test_volume_mode_writes_pairs(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"mode": "volume", "seed": 5}))
        out = tmp_path / "vols"
        assert main(["phantom", "--spec", str(spec), "--out", str(out),
                     "--count", "2"]) == 0
        for i in range(2):
            assert (out / f"vol_{i:03d}.json").exists()
            assert (out / f"vol_{i:03d}.raw").exists()
            assert (out / f"vol_{i:03d}.truth.json").exists()

    def test_profile_mode_writes_family(self, tmp_path):
        out = tmp_path / "fam"
        assert main(["phantom", "--mode", "profile", "--out", str(out),
                     "--count", "7", "--seed", "3"]) == 0
        worlds = load_profile_family(str(out))
        assert len(worlds) == 7

    def test_same_seed_reproduces_identical_bytes(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"mode": "volume", "seed": 9,
                                    "jitter": {"neck_radius": [3.5, 4.5]}}))
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["phantom", "--spec", str(spec), "--out", str(out),
                         "--count", "1"]) == 0
            outs.append((out / "vol_000.raw").read_bytes())
        assert outs[0] == outs[1]

    def test_invalid_spec_exits_2(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"mode": "volume",
                                    "spec": {"neck_radius": 50.0}}))
        assert main(["phantom", "--spec", str(spec), "--out",
                     str(tmp_path / "x"), "--count", "1"]) == 2


class TestExtractCmd:
    def test_writes_requested_centerline(self, extracted):
        out, _ = extracted
        c = load_centerline_csv(str(out / "c.csv"))
        assert len(c) == 300  # default tracking length
        assert (out / "mask.json").exists()

    def test_background_seed_exits_3(self, phantom_dir, tmp_path):
        root, _ = phantom_dir
        code = main(["extract", "--volume", str(root / "vol"), "--seed", "1,1,1",
                     "--out", str(tmp_path / "c.csv")])
        assert code == 3

    def test_missing_volume_exits_2(self, tmp_path):
        assert main(["extract", "--volume", str(tmp_path / "nope"),
                     "--seed", "1,1,1", "--out", str(tmp_path / "c.csv")]) == 2

    def test_two_tip_seeds_converge_to_one_centerline(self, phantom_dir, tmp_path):
        root, truth = phantom_dir
        i, j, k = truth.tip_seed
        paths = []
        for tag, seed in (("a", (i, j, k)), ("b", (i + 2, j - 1, k + 1))):
            out = tmp_path / f"{tag}.csv"
            assert main(["extract", "--volume", str(root / "vol"),
                         "--seed", f"{seed[0]},{seed[1]},{seed[2]}",
                         "--out", str(out)]) == 0
            paths.append(load_centerline_csv(str(out)))
        a, b = paths
        # identical from the shared axis onward: compare the tail point sets
        tail_a = {tuple(p) for p in a.points[len(a) // 2 :]}
        tail_b = {tuple(p) for p in b.points[len(b) // 2 :]}
        overlap = len(tail_a & tail_b) / len(tail_a)
        assert overlap > 0.9


def _fast_family(tmp_path, n=12, seed=0):
    out = tmp_path / "fam"
    assert main(["phantom", "--mode", "profile", "--out", str(out),
                 "--count", str(n), "--seed", str(seed)]) == 0
    return out


def _fast_config(tmp_path, epochs=2):
    cfg = {
        "env": {"k": 5, "tau": 3},
        "net": {"conv_channels": [2, 3, 3], "fc_widths": [8, 6],
                "learning_rate": 1e-4},
        "train": {"episodes_per_epoch": 4, "gradient_steps_per_epoch": 4,
                  "epochs": epochs, "eval_episodes": 4, "rng_seed": 1},
    }
    path = tmp_path / f"cfg_{epochs}.json"
    path.write_text(json.dumps(cfg))
    return path


class TestTrainCmd:
    def test_train_writes_checkpoint_and_log(self, tmp_path):
        fam = _fast_family(tmp_path)
        cfg = _fast_config(tmp_path)
        ckpt = tmp_path / "ckpt"
        log = tmp_path / "log.csv"
        assert main(["train", "--worlds", str(fam), "--config", str(cfg),
                     "--out", str(ckpt), "--log", str(log)]) == 0
        assert ckpt.exists()
        lines = log.read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 epochs

    def test_resume_continues_identically(self, tmp_path):
        fam = _fast_family(tmp_path)
        full_cfg = _fast_config(tmp_path, epochs=4)
        ckpt_full = tmp_path / "full"
        log_full = tmp_path / "full.csv"
        assert main(["train", "--worlds", str(fam), "--config", str(full_cfg),
                     "--out", str(ckpt_full), "--log", str(log_full)]) == 0

        half_cfg = _fast_config(tmp_path, epochs=2)
        ckpt_half = tmp_path / "half"
        assert main(["train", "--worlds", str(fam), "--config", str(half_cfg),
                     "--out", str(ckpt_half), "--log", str(tmp_path / "h1.csv")]) == 0
        log_resume = tmp_path / "resume.csv"
        assert main(["train", "--worlds", str(fam), "--config", str(full_cfg),
                     "--resume", str(ckpt_half), "--out", str(tmp_path / "resumed"),
                     "--log", str(log_resume)]) == 0
        full_rows = log_full.read_text().strip().splitlines()[1:]
        resumed_rows = log_resume.read_text().strip().splitlines()[1:]
        assert resumed_rows == full_rows[2:]

    def test_empty_worlds_dir_exits_2(self, tmp_path):
        assert main(["train", "--worlds", str(tmp_path), "--out",
                     str(tmp_path / "ckpt")]) == 2


class TestLocalizeCmd:
    def test_rule_method_produces_result_json(self, extracted, tmp_path):
        out, truth = extracted
        result_path = tmp_path / "r.result.json"
        code = main(["localize", "--centerline", str(out / "c.csv"),
                     "--method", "rule", "--volume", str(out / "mask"),
                     "--out", str(result_path)])
        assert code == 0
        payload = json.loads(result_path.read_text())
        for key in ("index", "center_mm", "normal", "area_mm2"):
            assert key in payload
        assert payload["method"] == "rule"

    def test_rl_without_ckpt_exits_2(self, extracted, tmp_path):
        out, _ = extracted
        assert main(["localize", "--centerline", str(out / "c.csv"),
                     "--method", "rl", "--volume", str(out / "mask"),
                     "--out", str(tmp_path / "r.json")]) == 2

    def test_mismatched_checkpoint_exits_4(self, extracted, tmp_path):
        out, _ = extracted
        wrong = init_network_params(NetConfig(state_len=31), 2)
        ckpt = tmp_path / "wrong_ckpt"
        save_checkpoint(str(ckpt), {"policy": wrong})
        code = main(["localize", "--centerline", str(out / "c.csv"),
                     "--method", "rl", "--ckpt", str(ckpt),
                     "--volume", str(out / "mask"),
                     "--out", str(tmp_path / "r.json")])
        assert code == 4

    def test_rule_on_monotone_profile_exits_3(self, tmp_path, extracted):
        out, _ = extracted
        # forge a monotone centerline CSV
        rows = ["index,i,j,k,x_mm,y_mm,z_mm,depth_mm"]
        for i in range(60):
            rows.append(f"{i},{i},0,0,{i * 0.5},0.0,0.0,{1.0 + 0.1 * i}")
        path = tmp_path / "mono.csv"
        path.write_text("\n".join(rows) + "\n")
        code = main(["localize", "--centerline", str(path), "--method", "rule",
                     "--volume", str(out / "mask"), "--out", str(tmp_path / "r.json")])
        assert code == 3


class TestEvalCmd:
    def test_report_and_plots(self, extracted, phantom_dir, tmp_path):
        out, truth = extracted
        root, _ = phantom_dir
        results = tmp_path / "results"
        results.mkdir()
        code = main(["localize", "--centerline", str(out / "c.csv"),
                     "--method", "rule", "--volume", str(out / "mask"),
                     "--out", str(results / "vol.result.json")])
        assert code == 0
        report = tmp_path / "report.json"
        plots = tmp_path / "plots"
        code = main(["eval", "--results", str(results), "--truths", str(root),
                     "--out", str(report), "--plots", str(plots)])
        assert code == 0
        payload = json.loads(report.read_text())
        assert "rule" in payload["methods"]
        block = payload["methods"]["rule"]["center_mm"]
        assert set(block) == {"mean", "sd", "median", "n"}
        assert (plots / "vol.svg").exists()
        markers = (plots / "markers.csv").read_text()
        index = json.loads((results / "vol.result.json").read_text())["index"]
        assert f"vol,rule,{index}" in markers

    def test_identical_result_and_truth_scores_zero(self, phantom_dir, tmp_path):
        root, truth = phantom_dir
        results = tmp_path / "results"
        results.mkdir()
        payload = {
            "index": truth.orifice_index_hint,
            "center_mm": list(map(float, truth.orifice_center_mm)),
            "normal": list(map(float, truth.orifice_normal)),
            "area_mm2": truth.orifice_area_mm2,
            "method": "rl",
        }
        (results / "vol.result.json").write_text(json.dumps(payload))
        report = tmp_path / "report.json"
        assert main(["eval", "--results", str(results), "--truths", str(root),
                     "--out", str(report)]) == 0
        methods = json.loads(report.read_text())["methods"]["rl"]
        assert methods["center_mm"]["mean"] == 0.0
        assert methods["orientation_deg"]["mean"] == 0.0
        assert methods["area_mm2"]["mean"] == 0.0

    def test_unmatched_results_exit_2(self, tmp_path):
        results = tmp_path / "results"
        results.mkdir()
        (results / "x.result.json").write_text("{}")
        truths = tmp_path / "truths"
        truths.mkdir()
        assert main(["eval", "--results", str(results), "--truths", str(truths),
                     "--out", str(tmp_path / "rep.json")]) == 2
