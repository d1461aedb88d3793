"""End-to-end command line runs on a small generated dataset."""

import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from tunesim.checkpoint import load_checkpoint, save_checkpoint
from tunesim.cli import main
from tunesim.config import config_to_dict
from tunesim.errors import DataError

from conftest import tiny_run_config


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Run the whole command chain once; tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    cfg = tiny_run_config()
    cfg.pretrain.steps = 4
    cfg.finetune.steps = 3
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config_to_dict(cfg)))

    paths = {
        "root": root,
        "config": cfg_path,
        "data": root / "data",
        "pre": root / "pre",
        "ft": root / "ft",
        "ft_no_text": root / "ft_no_text",
        "report": root / "eval" / "report.json",
        "analysis": root / "analysis",
    }
    common = ["--config", str(cfg_path)]
    assert main(["gen-data", *common, "--out", str(paths["data"])]) == 0
    assert main(["pretrain", *common, "--data", str(paths["data"]),
                 "--out", str(paths["pre"])]) == 0
    pre_ckpt = str(paths["pre"] / "checkpoint.ckpt")
    assert main(["finetune", *common, "--data", str(paths["data"]),
                 "--init", pre_ckpt, "--out", str(paths["ft"])]) == 0
    assert main(["finetune", *common, "--data", str(paths["data"]),
                 "--init", pre_ckpt, "--out", str(paths["ft_no_text"]),
                 "--ablation", "no_text"]) == 0
    assert main(["eval", *common,
                 "--checkpoint", str(paths["ft"] / "checkpoint.ckpt"),
                 "--data", str(paths["data"]),
                 "--report", str(paths["report"])]) == 0
    assert main(["analyze", *common,
                 "--checkpoint", str(paths["ft"] / "checkpoint.ckpt"),
                 "--baseline", pre_ckpt,
                 "--pairs", str(paths["data"] / "eval_pairs.tsv"),
                 "--out", str(paths["analysis"])]) == 0
    return paths


def test_gen_data_artifacts(ws):
    data = ws["data"]
    for name in ("manifest.tsv", "triplets.tsv", "cooccurrence.tsv",
                 "matching.tsv", "ranking.tsv", "eval_pairs.tsv",
                 "run_manifest.json"):
        assert (data / name).exists(), name
    assert len(list((data / "waves").iterdir())) == 60
    assert len(list((data / "texts").iterdir())) == 60
    manifest = json.loads((data / "run_manifest.json").read_text())
    assert manifest["command"] == "gen-data"
    assert isinstance(manifest["created_unix"], int)
    assert manifest["config"]["generator"]["num_songs"] == 60


def test_pretrain_artifacts(ws):
    pre = ws["pre"]
    for name in ("checkpoint.ckpt", "training_log.jsonl", "vocab.tsv",
                 "run_manifest.json"):
        assert (pre / name).exists(), name
    lines = [json.loads(l)
             for l in (pre / "training_log.jsonl").read_text().splitlines()]
    assert lines[0]["step"] == 0
    assert set(lines[0]["components"]) == {"audio_to_text", "text_to_audio"}
    assert (pre / "vocab.tsv").read_text().splitlines()[0] == "<pad>\t0"
    bundle = load_checkpoint(pre / "checkpoint.ckpt")
    assert bundle.config["stage"] == "pretrain"
    assert bundle.config["step"] == 4
    # the stored vocab size matches the stored config
    assert (len(bundle.config["vocab"])
            == bundle.config["run"]["text_encoder"]["vocab_size"])
    manifest = json.loads((pre / "run_manifest.json").read_text())
    assert "manifest" in manifest["inputs"]
    assert manifest["inputs"]["manifest"] is not None


def test_finetune_artifacts(ws):
    bundle = load_checkpoint(ws["ft"] / "checkpoint.ckpt")
    assert bundle.config["stage"] == "finetune"
    assert bundle.config["step"] == 3
    assert bundle.config["run"]["finetune"]["ablation"] == "none"
    lines = [json.loads(l) for l in
             (ws["ft"] / "training_log.jsonl").read_text().splitlines()]
    assert set(lines[0]["components"]) == {"audio_audio", "audio_fused",
                                          "audio_text"}


def test_finetune_ablation_flag_wins(ws):
    bundle = load_checkpoint(ws["ft_no_text"] / "checkpoint.ckpt")
    assert bundle.config["run"]["finetune"]["ablation"] == "no_text"
    lines = [json.loads(l) for l in
             (ws["ft_no_text"] / "training_log.jsonl").read_text()
             .splitlines()]
    assert set(lines[0]["components"]) == {"audio_audio"}


def test_finetune_architecture_comes_from_checkpoint(ws, tmp_path):
    # a conflicting architecture in the CLI config is ignored on purpose
    code = main(["finetune", "--config", str(ws["config"]),
                 "--set", "audio_encoder.embed_dim=24",
                 "--set", "text_encoder.embed_dim=24",
                 "--data", str(ws["data"]),
                 "--init", str(ws["pre"] / "checkpoint.ckpt"),
                 "--out", str(tmp_path / "ft2")])
    assert code == 0
    bundle = load_checkpoint(tmp_path / "ft2" / "checkpoint.ckpt")
    assert bundle.config["run"]["audio_encoder"]["embed_dim"] == 16


def test_finetune_without_config_keeps_fusion_width(ws, tmp_path):
    # no --config here, so the CLI loss section is all defaults; the saved
    # checkpoint must still describe the 32-wide fusion net it carries,
    # or eval rejects it
    out = tmp_path / "ft3"
    code = main(["finetune", "--set", "finetune.steps=2",
                 "--data", str(ws["data"]),
                 "--init", str(ws["pre"] / "checkpoint.ckpt"),
                 "--out", str(out)])
    assert code == 0
    bundle = load_checkpoint(out / "checkpoint.ckpt")
    assert bundle.config["run"]["loss"]["fusion_hidden"] == 32
    code = main(["eval", "--checkpoint", str(out / "checkpoint.ckpt"),
                 "--data", str(ws["data"]),
                 "--report", str(tmp_path / "r3.json")])
    assert code == 0


def test_eval_report(ws):
    report = json.loads(ws["report"].read_text())
    expected = {"stage", "step", "genre_probe_acc", "language_probe_acc",
                "hr_at_cutoff", "hr_cutoff", "click_auc", "favor_auc"}
    assert set(report) == expected
    assert report["stage"] == "finetune"
    assert 0.0 <= report["genre_probe_acc"] <= 1.0
    assert 0.0 <= report["hr_at_cutoff"] <= 1.0
    assert ws["report"].with_name("report.json.manifest.json").exists()


def test_eval_skips_absent_optional_tasks(ws, tmp_path):
    data = ws["data"]
    hidden = []
    try:
        for name in ("matching.tsv", "ranking.tsv"):
            target = tmp_path / name
            shutil.move(str(data / name), str(target))
            hidden.append((target, data / name))
        report_path = tmp_path / "r.json"
        code = main(["eval", "--config", str(ws["config"]),
                     "--checkpoint", str(ws["ft"] / "checkpoint.ckpt"),
                     "--data", str(data), "--report", str(report_path)])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert "hr_at_cutoff" not in report
        assert "click_auc" not in report
        assert "genre_probe_acc" in report
    finally:
        for src, dst in hidden:
            shutil.move(str(src), str(dst))


def test_analyze_artifacts(ws):
    out = ws["analysis"]
    for name in ("pos_hist.tsv", "neg_hist.tsv", "baseline_pos_hist.tsv",
                 "baseline_neg_hist.tsv", "analysis_report.json",
                 "run_manifest.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "analysis_report.json").read_text())
    assert report["checkpoint"]["stage"] == "finetune"
    assert report["baseline"]["stage"] == "pretrain"
    assert "separation_auc_delta" in report
    assert "mean_gap_delta" in report
    n_bins = tiny_run_config().eval.hist_bins
    assert len((out / "pos_hist.tsv").read_text().splitlines()) == n_bins


def test_set_overrides_config_file(ws, tmp_path):
    out = tmp_path / "small"
    code = main(["gen-data", "--config", str(ws["config"]),
                 "--set", "generator.num_songs=20", "--out", str(out)])
    assert code == 0
    assert len((out / "manifest.tsv").read_text().splitlines()) == 20


def test_unknown_config_key_exit_2(ws, capsys):
    code = main(["pretrain", "--config", str(ws["config"]),
                 "--set", "nope.x=1",
                 "--data", str(ws["data"]), "--out", "/tmp/unused"])
    assert code == 2
    err = capsys.readouterr().err
    assert "config error:" in err
    assert "nope.x" in err


def test_missing_data_dir_exit_3(ws, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["pretrain", "--config", str(ws["config"]),
                 "--data", str(tmp_path / "absent"), "--out", str(out)])
    assert code == 3
    assert "data error:" in capsys.readouterr().err
    # the run manifest still documents the failed attempt
    assert (out / "run_manifest.json").exists()


def test_corrupt_checkpoint_exit_3(ws, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    code = main(["finetune", "--config", str(ws["config"]),
                 "--data", str(ws["data"]), "--init", str(bad),
                 "--out", str(tmp_path / "out")])
    assert code == 3
    assert "data error:" in capsys.readouterr().err


def test_non_finite_checkpoint_exit_4(ws, tmp_path, capsys):
    bundle = load_checkpoint(ws["pre"] / "checkpoint.ckpt")
    tensors = dict(bundle.tensors)
    tensors["log_tau"] = np.array(float("nan"), dtype=np.float32)
    nan_ckpt = tmp_path / "nan.ckpt"
    save_checkpoint(nan_ckpt, bundle.config, tensors)
    code = main(["finetune", "--config", str(ws["config"]),
                 "--data", str(ws["data"]), "--init", str(nan_ckpt),
                 "--out", str(tmp_path / "out")])
    assert code == 4
    err = capsys.readouterr().err
    assert "numeric error:" in err
    assert "step 0" in err


def test_mel_cache_env_var(ws, tmp_path, monkeypatch):
    cache = tmp_path / "cache"
    monkeypatch.setenv("TUNESIM_CACHE_DIR", str(cache))
    code = main(["pretrain", "--config", str(ws["config"]),
                 "--set", "pretrain.steps=1",
                 "--data", str(ws["data"]), "--out", str(tmp_path / "out")])
    assert code == 0
    assert len(list(cache.glob("*.mel"))) == 60


def test_console_entry_point():
    exe = shutil.which("tunesim")
    cmd = [exe] if exe else [sys.executable, "-m", "tunesim.cli"]
    out = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for name in ("gen-data", "pretrain", "finetune", "eval", "analyze"):
        assert name in out.stdout
