"""CLI surface: config resolution, artifacts, manifests, exit codes."""

import hashlib
import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from fuzzyssvep.cli import config_hash, load_config, main
from fuzzyssvep.errors import ConfigError
from fuzzyssvep.evaluation import evaluate
from fuzzyssvep.network import load_checkpoint, model_forward

SMALL_SYNTH = [
    "--set", "synthesis.n_subjects=2",
    "--set", "synthesis.trials_per_class=2",
    "--set", "synthesis.duration=2.0",
    "--set", "synthesis.n_channels=3",
    "--set", "synthesis.noise_snr_db=5",
]

SMALL_TRAIN = [
    "--set", "model.n_rules=2",
    "--set", "model.hidden=8",
    "--set", "train.max_epochs=3",
    "--set", "train.warmup_epochs=1",
    "--set", "train.windows_per_epoch=64",
    "--set", "train.batch_size=32",
    "--set", "train.test_windows_per_trial=4",
]


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["gen", "--out", str(out)] + SMALL_SYNTH) == 0
    return out


@pytest.fixture(scope="module")
def loso_dir(tmp_path_factory, dataset_dir):
    out = tmp_path_factory.mktemp("loso")
    args = ["loso", "--out", str(out),
            "--set", f'dataset="{dataset_dir / "dataset.ssvp"}"'] + SMALL_TRAIN
    assert main(args) == 0
    return out


class TestConfig:
    def test_defaults_round(self):
        cfg = load_config(None)
        assert cfg["train"]["base_lr"] == 1e-3
        assert cfg["dataset"] is None and cfg["synthesis"] is None

    def test_file_then_set_precedence(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"train": {"seed": 5, "base_lr": 0.01}}))
        cfg = load_config(str(path), ["train.seed=7"])
        assert cfg["train"]["seed"] == 7       # --set beats file
        assert cfg["train"]["base_lr"] == 0.01  # file beats default

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"trian": {}}))
        with pytest.raises(ConfigError, match="trian"):
            load_config(str(path))

    def test_unknown_set_path_rejected(self):
        with pytest.raises(ConfigError, match="max_epoch"):
            load_config(None, ["train.max_epoch=3"])

    def test_set_parses_json_and_bare_strings(self):
        cfg = load_config(None, [
            "model.filter_order=spatial_only",
            "evaluation.window_seconds=[0.5, 1.0]",
            "synthesis.n_subjects=3",
        ])
        assert cfg["model"]["filter_order"] == "spatial_only"
        assert cfg["evaluation"]["window_seconds"] == [0.5, 1.0]
        # Touching a synthesis key materializes the default block.
        assert cfg["synthesis"]["fs"] == 256.0
        assert cfg["synthesis"]["n_subjects"] == 3

    def test_config_hash_stable_under_key_order(self):
        a = {"b": 1, "a": {"y": 2, "x": 3}}
        b = {"a": {"x": 3, "y": 2}, "b": 1}
        assert config_hash(a) == config_hash(b)


class TestGen:
    def test_default_header_counts(self, tmp_path):
        # 6 subjects x (7 trials x 4 classes) at 4 s @ 256 Hz, 8 channels.
        out = tmp_path / "full"
        assert main(["gen", "--out", str(out)]) == 0
        raw = (out / "dataset.ssvp").read_bytes()
        magic, ver, n_sub, tps, c, s, m, fs = struct.unpack_from("<4sH5If", raw, 0)
        assert (n_sub, tps, c, s, m) == (6, 28, 8, 1024, 4)
        assert fs == 256.0

    def test_rerun_bit_identical(self, tmp_path, dataset_dir):
        out = tmp_path / "again"
        assert main(["gen", "--out", str(out)] + SMALL_SYNTH) == 0
        assert (out / "dataset.ssvp").read_bytes() == \
            (dataset_dir / "dataset.ssvp").read_bytes()
        assert (out / "manifest.json").read_bytes() == \
            (dataset_dir / "manifest.json").read_bytes()

    def test_rejects_dataset_path(self, tmp_path, capsys):
        args = ["gen", "--out", str(tmp_path / "x"),
                "--set", 'dataset="anything.ssvp"']
        assert main(args) == 1
        assert "synthesis" in capsys.readouterr().err

    def test_eval_window_longer_than_trial(self, tmp_path, capsys):
        args = (["gen", "--out", str(tmp_path / "x")] + SMALL_SYNTH
                + ["--set", "evaluation.window_seconds=[2.5]"])
        assert main(args) == 1
        assert "exceeds" in capsys.readouterr().err

    def test_manifest_checksums_match(self, dataset_dir):
        manifest = json.loads((dataset_dir / "manifest.json").read_text())
        assert manifest["command"] == "gen"
        for rel, digest in manifest["artifacts"].items():
            actual = hashlib.sha256((dataset_dir / rel).read_bytes()).hexdigest()
            assert actual == digest
        assert manifest["config_sha256"] == config_hash(manifest["config"])


class TestTrainCmd:
    def test_writes_checkpoint_and_trace(self, tmp_path, dataset_dir):
        out = tmp_path / "train"
        args = ["train", "--out", str(out),
                "--set", f'dataset="{dataset_dir / "dataset.ssvp"}"'] + SMALL_TRAIN
        assert main(args) == 0
        params = load_checkpoint(out / "checkpoint.ifzt")
        assert params.config.n_classes == 4
        assert params.config.n_channels == 3
        lines = (out / "trace.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,lr,mean_loss"
        assert len(lines) == 1 + 3  # header + max_epochs rows

    def test_bad_hyperparameter_exits_1(self, dataset_dir, tmp_path, capsys):
        args = ["train", "--out", str(tmp_path / "x"),
                "--set", f'dataset="{dataset_dir / "dataset.ssvp"}"',
                "--set", "train.base_lr=-1"]
        assert main(args) == 1
        assert "base_lr" in capsys.readouterr().err


class TestLoso:
    def test_fold_layout(self, loso_dir):
        assert (loso_dir / "fold_0" / "checkpoint.ifzt").exists()
        assert (loso_dir / "fold_1" / "checkpoint.ifzt").exists()
        assert (loso_dir / "fold_0" / "eval_1s.json").exists()
        assert (loso_dir / "fold_0" / "trace.csv").exists()
        assert (loso_dir / "summary.json").exists()
        assert not (loso_dir / "fold_2").exists()

    def test_summary_mean_is_fold_mean(self, loso_dir):
        summary = json.loads((loso_dir / "summary.json").read_text())
        block = summary["windows"]["1"]
        accs = [f["accuracy"] for f in block["folds"]]
        assert abs(block["accuracy_mean"] - np.mean(accs)) < 1e-12
        assert summary["n_folds"] == 2

    def test_rerun_identical_summary_bytes(self, tmp_path, dataset_dir, loso_dir):
        out = tmp_path / "again"
        args = ["loso", "--out", str(out),
                "--set", f'dataset="{dataset_dir / "dataset.ssvp"}"'] + SMALL_TRAIN
        assert main(args) == 0
        assert (out / "summary.json").read_bytes() == \
            (loso_dir / "summary.json").read_bytes()
        assert (out / "fold_1" / "checkpoint.ifzt").read_bytes() == \
            (loso_dir / "fold_1" / "checkpoint.ifzt").read_bytes()

    def test_manifest_covers_all_artifacts(self, loso_dir):
        manifest = json.loads((loso_dir / "manifest.json").read_text())
        rels = set(manifest["artifacts"])
        assert "summary.json" in rels
        assert "fold_0/checkpoint.ifzt" in rels
        assert "fold_1/eval_1s.json" in rels
        assert manifest["seeds"]["folds"]["1"] == manifest["seeds"]["train"] ^ 1

    def test_window_width_mismatch_rejected(self, dataset_dir, tmp_path, capsys):
        args = (["loso", "--out", str(tmp_path / "x"),
                 "--set", f'dataset="{dataset_dir / "dataset.ssvp"}"']
                + SMALL_TRAIN + ["--set", "evaluation.window_seconds=[0.5]"])
        assert main(args) == 1
        assert "width" in capsys.readouterr().err

    def test_missing_dataset_exits_2(self, tmp_path, capsys):
        args = ["loso", "--out", str(tmp_path / "x"),
                "--set", 'dataset="nowhere.ssvp"']
        assert main(args) == 2
        assert "data error" in capsys.readouterr().err


class TestEvalCmd:
    def test_matches_direct_evaluate(self, dataset_dir, loso_dir, capsys):
        ckpt = loso_dir / "fold_0" / "checkpoint.ifzt"
        args = ["eval", "--checkpoint", str(ckpt),
                "--dataset", str(dataset_dir / "dataset.ssvp"),
                "--seed", "77",
                "--set", "subjects=[0]",
                "--set", "train.test_windows_per_trial=4"]
        assert main(args) == 0
        blob = json.loads(capsys.readouterr().out)["1"]

        from fuzzyssvep.dataio import read_dataset
        dataset = read_dataset(dataset_dir / "dataset.ssvp")
        report = evaluate(load_checkpoint(ckpt), dataset.subjects[0].trials,
                          dataset.fs, 1.0, eval_seed=77,
                          test_windows_per_trial=4)
        assert blob["accuracy"] == report.accuracy
        assert blob["confusion"] == report.confusion.tolist()
        assert blob["subjects"] == [0]

    def test_writes_report_files(self, dataset_dir, loso_dir, tmp_path):
        out = tmp_path / "eval"
        args = ["eval", "--checkpoint", str(loso_dir / "fold_0" / "checkpoint.ifzt"),
                "--dataset", str(dataset_dir / "dataset.ssvp"),
                "--out", str(out),
                "--set", "train.test_windows_per_trial=4"]
        assert main(args) == 0
        assert (out / "eval_1s.json").exists()
        assert (out / "manifest.json").exists()


@pytest.fixture(scope="module")
def explain_dir(tmp_path_factory, dataset_dir, loso_dir):
    out = tmp_path_factory.mktemp("explain")
    args = ["explain",
            "--checkpoint", str(loso_dir / "fold_0" / "checkpoint.ifzt"),
            "--dataset", str(dataset_dir / "dataset.ssvp"),
            "--subject", "0", "--trial", "1", "--start", "128",
            "--out", str(out)]
    assert main(args) == 0
    return out


class TestExplainCmd:
    def test_bundle_files(self, explain_dir):
        for name in ("report.json", "spatial_firing.csv", "temporal_firing.csv",
                     "recovered_spatial_centers.csv",
                     "recovered_temporal_centers.csv", "rule_spectra.csv",
                     "spatial_output.csv", "manifest.json"):
            assert (explain_dir / name).exists(), name

    def test_center_csv_shape(self, explain_dir):
        centers = np.loadtxt(explain_dir / "recovered_spatial_centers.csv",
                             delimiter=",")
        assert centers.shape == (2, 256)  # R=2 rules, 1 s @ 256 Hz

    def test_spectra_rows(self, explain_dir):
        spectra = np.loadtxt(explain_dir / "rule_spectra.csv", delimiter=",")
        assert spectra.shape[0] == 1 + 2  # frequency axis + R rules
        assert np.all(spectra[0] > 0)     # DC excluded

    def test_prediction_consistent_with_forward(self, explain_dir, dataset_dir,
                                                loso_dir):
        report = json.loads((explain_dir / "report.json").read_text())
        from fuzzyssvep.dataio import read_dataset
        dataset = read_dataset(dataset_dir / "dataset.ssvp")
        window = dataset.subjects[0].trials[1].signal[:, 128:384]
        params = load_checkpoint(loso_dir / "fold_0" / "checkpoint.ifzt")
        logits, _ = model_forward(params, window.astype(np.float64))
        assert report["predicted_class"] == int(np.argmax(logits))
        assert report["true_class"] == dataset.subjects[0].trials[1].label

    def test_bad_subject_index(self, dataset_dir, loso_dir, tmp_path, capsys):
        args = ["explain",
                "--checkpoint", str(loso_dir / "fold_0" / "checkpoint.ifzt"),
                "--dataset", str(dataset_dir / "dataset.ssvp"),
                "--subject", "99", "--trial", "0",
                "--out", str(tmp_path / "x")]
        assert main(args) == 1
        assert "subject 99" in capsys.readouterr().err

    def test_bad_start_index(self, dataset_dir, loso_dir, tmp_path, capsys):
        args = ["explain",
                "--checkpoint", str(loso_dir / "fold_0" / "checkpoint.ifzt"),
                "--dataset", str(dataset_dir / "dataset.ssvp"),
                "--subject", "0", "--trial", "0", "--start", "400",
                "--out", str(tmp_path / "x")]
        assert main(args) == 1
        assert "start" in capsys.readouterr().err


class TestGradcheckCmd:
    def test_zero_order_passes(self, capsys):
        assert main(["gradcheck", "--mode", "zero_order"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out
        assert "h=1e-05" in out

    def test_report_file(self, tmp_path):
        out = tmp_path / "gc"
        assert main(["gradcheck", "--mode", "first_order", "--out", str(out)]) == 0
        blob = json.loads((out / "gradcheck.json").read_text())
        assert blob["first_order"]["passed"] is True
        names = {g["name"] for g in blob["first_order"]["groups"]}
        assert "spatial.centers" in names and "tokens" in names


class TestExitCodes:
    def test_unknown_flag_is_config_error(self, capsys):
        assert main(["loso", "--frobnicate"]) == 1
        assert "config error" in capsys.readouterr().err

    def test_corrupt_dataset_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.ssvp"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        assert main(["train", "--out", str(tmp_path / "x"),
                     "--set", f'dataset="{bad}"']) == 2
        assert "data error" in capsys.readouterr().err

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "fuzzyssvep.cli", "gradcheck",
             "--mode", "zero_order"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "all parameter groups within tolerance" in proc.stdout
