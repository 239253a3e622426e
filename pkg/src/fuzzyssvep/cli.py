"""Command-line surface: reproducible experiments from one JSON config.

Subcommands:

* ``gen``       synthesize a dataset and write it as an .ssvp file
* ``train``     train one model on chosen subjects -> checkpoint + trace
* ``loso``      leave-one-subject-out folds + summary.json
* ``eval``      score a checkpoint on a dataset
* ``explain``   per-window interpretability bundle from a checkpoint
* ``gradcheck`` finite-difference validation of the backward pass

Configuration is one JSON file selected with --config; any dotted path in
it can be overridden with --set (e.g. ``--set train.base_lr=3e-3``), and a
few common flags (--out, --seed, --window-seconds) override on top of
that: flag > --set > file > built-in default.

Every command writes a manifest.json capturing the resolved config, its
hash, the seeds in play, and a sha256 per artifact. No timestamps go into
any artifact, so a rerun with the same config is byte-identical.

Exit codes: 0 success, 1 config error, 2 data/format error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dataio import read_dataset, write_dataset
from .errors import ConfigError, FormatError, NumericError
from .evaluation import evaluate, feature_width, model_inputs, window_sample_count
from .explain import firing_report
from .gradcheck import check_model_gradients, small_check_config
from .network import (
    ModelConfig,
    ModelParams,
    load_checkpoint,
    save_checkpoint,
)
from .optim import TrainConfig, fold_eval_seed, fold_seed, loso_run, train
from .signals import StimulusConfig, WindowSpec, build_dataset, extract_window

_HALF_PI = float(np.pi / 2)

SYNTHESIS_DEFAULTS = {
    "frequencies": [10.0, 11.0, 12.0, 13.0],
    "phases": [0.0, _HALF_PI, 2 * _HALF_PI, 3 * _HALF_PI],
    "n_harmonics": 3,
    "harmonic_amplitudes": [1.0, 0.5, 0.25],
    "harmonic_phases": [0.0, 0.0, 0.0],
    "n_subjects": 6,
    "trials_per_class": 7,
    "fs": 256.0,
    "duration": 4.0,
    "noise_snr_db": 0.0,
    "n_channels": 8,
    "pink_noise": False,
    "seed": 0,
}

MODEL_DEFAULTS = {
    "n_rules": 10,
    "hidden": 128,
    "dropout_rate": 0.3,
    "consequent_mode": "zero_order",
    "filter_order": "spatial_first",
    "feature_mode": "time_domain",
}

TRAIN_DEFAULTS = {
    "base_lr": 1e-3,
    "batch_size": 256,
    "max_epochs": 800,
    "warmup_epochs": 40,
    "weight_decay": 0.05,
    "beta1": 0.9,
    "beta2": 0.95,
    "eps": 1e-8,
    "windows_per_epoch": 12000,
    "window_seconds": 1.0,
    "seed": 0,
    "test_windows_per_trial": 10,
    "fft_band": [8.0, 64.0],
    "grad_clip_norm": None,
}

EVALUATION_DEFAULTS = {
    # None -> evaluate at the training window length only.
    "window_seconds": None,
    "eval_seed": 2024,
}

CONFIG_DEFAULTS = {
    "dataset": None,
    "synthesis": None,
    "subjects": None,
    "model": MODEL_DEFAULTS,
    "train": TRAIN_DEFAULTS,
    "evaluation": EVALUATION_DEFAULTS,
    "out_dir": "runs/out",
}

# Blocks that default to None but have a key template once present.
_BLOCK_TEMPLATES = {"synthesis": SYNTHESIS_DEFAULTS}


def _merge(base: dict, user: dict, path: str) -> None:
    for key, val in user.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}{key!r}")
        if key in _BLOCK_TEMPLATES and base[key] is None and isinstance(val, dict):
            base[key] = copy.deepcopy(_BLOCK_TEMPLATES[key])
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path}{key!r} must be an object")
            _merge(base[key], val, f"{path}{key}.")
        else:
            base[key] = val


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings are convenient: --set model.filter_order=spatial_only
    parts = dotted.split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        prefix = ".".join(parts[: i + 1])
        if part not in node:
            raise ConfigError(f"unknown config key {prefix!r}")
        if part in _BLOCK_TEMPLATES and node[part] is None:
            node[part] = copy.deepcopy(_BLOCK_TEMPLATES[part])
        node = node[part]
        if not isinstance(node, dict):
            raise ConfigError(f"config key {prefix!r} is not an object")
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[leaf] = value


def load_config(path: str | None, set_overrides: list[str] | None = None) -> dict:
    """Resolve defaults, the config file, then --set assignments."""
    cfg = copy.deepcopy(CONFIG_DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path} must contain a JSON object")
        _merge(cfg, user, "")
    for assignment in set_overrides or []:
        _apply_set(cfg, assignment)
    return cfg


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(_canonical(cfg).encode()).hexdigest()


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir: Path, command: str, cfg: dict, seeds: dict,
                   artifacts: list[Path]) -> Path:
    manifest = {
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seeds": seeds,
        "artifacts": {
            str(p.relative_to(out_dir)): _file_sha256(p) for p in artifacts
        },
    }
    path = out_dir / "manifest.json"
    _write_json(path, manifest)
    return path


def _stimulus_config(synth: dict) -> StimulusConfig:
    try:
        return StimulusConfig(
            frequencies=tuple(synth["frequencies"]),
            phases=tuple(synth["phases"]),
            n_harmonics=synth["n_harmonics"],
            harmonic_amplitudes=tuple(synth["harmonic_amplitudes"]),
            harmonic_phases=tuple(synth["harmonic_phases"]),
        )
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"synthesis: {exc}") from exc


def _synthesize(synth: dict):
    stim = _stimulus_config(synth)
    try:
        return build_dataset(
            stim,
            n_subjects=synth["n_subjects"],
            trials_per_class=synth["trials_per_class"],
            fs=synth["fs"],
            duration=synth["duration"],
            noise_snr_db=synth["noise_snr_db"],
            n_channels=synth["n_channels"],
            seed=synth["seed"],
            pink_noise=synth["pink_noise"],
        )
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"synthesis: {exc}") from exc


def _load_dataset(cfg: dict):
    has_path = cfg["dataset"] is not None
    has_synth = cfg["synthesis"] is not None
    if has_path == has_synth:
        raise ConfigError("exactly one of 'dataset' and 'synthesis' must be set")
    if has_path:
        return read_dataset(cfg["dataset"])
    return _synthesize(cfg["synthesis"])


def _train_config(cfg: dict) -> TrainConfig:
    block = dict(cfg["train"])
    block["fft_band"] = tuple(block["fft_band"])
    try:
        return TrainConfig(**block)
    except TypeError as exc:
        raise ConfigError(f"train: {exc}") from exc


def _model_config(cfg: dict, dataset) -> ModelConfig:
    tcfg = _train_config(cfg)
    window_samples = window_sample_count(tcfg.window_seconds, dataset.fs)
    width = feature_width(cfg["model"]["feature_mode"], window_samples,
                          dataset.fs, tcfg.fft_band)
    try:
        return ModelConfig(
            n_channels=dataset.n_channels,
            n_samples=width,
            n_classes=dataset.n_classes,
            **cfg["model"],
        )
    except TypeError as exc:
        raise ConfigError(f"model: {exc}") from exc


def _eval_windows(cfg: dict) -> list[float]:
    windows = cfg["evaluation"]["window_seconds"]
    if windows is None:
        windows = [cfg["train"]["window_seconds"]]
    if not isinstance(windows, list) or not windows:
        raise ConfigError("evaluation.window_seconds must be a nonempty list or null")
    return [float(w) for w in windows]


def _check_windows_fit(cfg: dict, duration: float) -> None:
    for w in _eval_windows(cfg) + [float(cfg["train"]["window_seconds"])]:
        if w > duration + 1e-9:
            raise ConfigError(
                f"window of {w} s exceeds the {duration} s trial length"
            )


def _subject_ids(cfg: dict, dataset) -> list[int]:
    ids = cfg["subjects"]
    if ids is None:
        return list(range(dataset.n_subjects))
    ids = [int(i) for i in ids]
    for i in ids:
        if not 0 <= i < dataset.n_subjects:
            raise ConfigError(f"subject {i} out of range [0, {dataset.n_subjects})")
    return ids


def _out_dir(cfg: dict, args) -> Path:
    out = Path(args.out if args.out is not None else cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _window_tag(w: float) -> str:
    return format(w, "g")


def _write_trace(path: Path, trace) -> None:
    lines = ["epoch,lr,mean_loss"]
    lines += [f"{r.epoch},{float(r.lr)!r},{float(r.mean_loss)!r}" for r in trace]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        _apply_set(cfg, f"synthesis.seed={args.seed}")
    if cfg["synthesis"] is None:
        if cfg["dataset"] is not None:
            raise ConfigError("gen requires a 'synthesis' block, not a dataset path")
        cfg["synthesis"] = copy.deepcopy(SYNTHESIS_DEFAULTS)
    _check_windows_fit(cfg, float(cfg["synthesis"]["duration"]))
    out = _out_dir(cfg, args)
    dataset = _synthesize(cfg["synthesis"])
    path = out / "dataset.ssvp"
    write_dataset(dataset, path)
    write_manifest(out, "gen", cfg, {"synthesis": cfg["synthesis"]["seed"]}, [path])
    print(f"wrote {path} ({dataset.n_subjects} subjects, "
          f"{sum(len(s.trials) for s in dataset.subjects)} trials)")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        _apply_set(cfg, f"train.seed={args.seed}")
    if args.window_seconds is not None:
        _apply_set(cfg, f"train.window_seconds={args.window_seconds}")
    dataset = _load_dataset(cfg)
    _check_windows_fit(cfg, dataset.n_samples / dataset.fs)
    out = _out_dir(cfg, args)
    tcfg = _train_config(cfg)
    params, trace = train(dataset, _subject_ids(cfg, dataset),
                          _model_config(cfg, dataset), tcfg)
    ckpt = out / "checkpoint.ifzt"
    save_checkpoint(params, ckpt)
    trace_path = out / "trace.csv"
    _write_trace(trace_path, trace)
    write_manifest(out, "train", cfg, {"train": tcfg.seed}, [ckpt, trace_path])
    last = trace[-1].mean_loss if trace else float("nan")
    print(f"wrote {ckpt} (epochs={len(trace)}, final mean loss={last:.4f})")
    return 0


def _fold_artifacts(dataset, model_cfg, tcfg, windows, held_out):
    """Train one fold and evaluate it at every requested window length."""
    result_box = {}

    def hook(k, params, trace, report):
        result_box["params"] = params
        result_box["trace"] = trace

    fold = loso_run(dataset, model_cfg, tcfg, subjects=[held_out], fold_hook=hook)[0]
    reports = {}
    for w in windows:
        reports[w] = evaluate(
            result_box["params"], dataset.subjects[held_out].trials, dataset.fs,
            w, eval_seed=fold_eval_seed(tcfg.seed, held_out),
            test_windows_per_trial=tcfg.test_windows_per_trial,
            fft_band=tcfg.fft_band,
        )
    return fold, result_box["params"], result_box["trace"], reports


def cmd_loso(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        _apply_set(cfg, f"train.seed={args.seed}")
    if args.window_seconds is not None:
        _apply_set(cfg, f"train.window_seconds={args.window_seconds}")
    dataset = _load_dataset(cfg)
    _check_windows_fit(cfg, dataset.n_samples / dataset.fs)
    out = _out_dir(cfg, args)
    tcfg = _train_config(cfg)
    model_cfg = _model_config(cfg, dataset)
    windows = _eval_windows(cfg)
    for w in windows:
        if feature_width(model_cfg.feature_mode,
                         window_sample_count(w, dataset.fs),
                         dataset.fs, tcfg.fft_band) != model_cfg.n_samples:
            raise ConfigError(
                f"evaluation window {w} s feeds the model a different width "
                f"than the training window {tcfg.window_seconds} s; train one "
                f"model per window length instead"
            )
    subjects = _subject_ids(cfg, dataset)
    if len(dataset.subjects) < 2:
        raise ConfigError("leave-one-subject-out needs at least 2 subjects")

    jobs = max(1, args.jobs)
    if jobs == 1:
        outcomes = [
            _fold_artifacts(dataset, model_cfg, tcfg, windows, k) for k in subjects
        ]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(
                _fold_artifacts,
                [dataset] * len(subjects), [model_cfg] * len(subjects),
                [tcfg] * len(subjects), [windows] * len(subjects), subjects,
            ))

    artifacts = []
    per_window: dict[float, list] = {w: [] for w in windows}
    for (fold, params, trace, reports), held_out in zip(outcomes, subjects):
        fold_dir = out / f"fold_{held_out}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        ckpt = fold_dir / "checkpoint.ifzt"
        save_checkpoint(params, ckpt)
        trace_path = fold_dir / "trace.csv"
        _write_trace(trace_path, trace)
        artifacts += [ckpt, trace_path]
        for w, report in reports.items():
            rpath = fold_dir / f"eval_{_window_tag(w)}s.json"
            _write_json(rpath, report.to_dict() | {"held_out_subject": held_out})
            artifacts.append(rpath)
            per_window[w].append((held_out, report))

    summary: dict = {"n_folds": len(subjects), "windows": {}}
    for w, pairs in per_window.items():
        accs = np.array([r.accuracy for _, r in pairs])
        itrs = np.array([r.itr_bits_per_min for _, r in pairs])
        # Sample SD (ddof=1) to match mean +- SD reporting across folds.
        sd = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        itr_sd = float(np.std(itrs, ddof=1)) if len(itrs) > 1 else 0.0
        summary["windows"][_window_tag(w)] = {
            "folds": [
                {"held_out_subject": k, "accuracy": r.accuracy,
                 "itr_bits_per_min": r.itr_bits_per_min,
                 "itr_clamped": r.itr_clamped, "n_windows": r.n_windows}
                for k, r in pairs
            ],
            "accuracy_mean": float(np.mean(accs)),
            "accuracy_sd": sd,
            "itr_mean": float(np.mean(itrs)),
            "itr_sd": itr_sd,
        }
    summary_path = out / "summary.json"
    _write_json(summary_path, summary)
    artifacts.append(summary_path)

    seeds = {
        "train": tcfg.seed,
        "folds": {str(k): fold_seed(tcfg.seed, k) for k in subjects},
        "eval_seed_tag": "fold_seed & (2**63 - 1), 0x5EED",
    }
    write_manifest(out, "loso", cfg, seeds, artifacts)
    for w in windows:
        block = summary["windows"][_window_tag(w)]
        print(f"window {w} s: accuracy {block['accuracy_mean']:.4f} "
              f"+- {block['accuracy_sd']:.4f}, ITR {block['itr_mean']:.2f} bits/min")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        _apply_set(cfg, f"evaluation.eval_seed={args.seed}")
    if args.dataset is not None:
        cfg["dataset"], cfg["synthesis"] = args.dataset, None
    if args.window_seconds is not None:
        _apply_set(cfg, f"evaluation.window_seconds=[{args.window_seconds}]")
    params = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(cfg)
    _check_windows_fit(cfg, dataset.n_samples / dataset.fs)
    tcfg = _train_config(cfg)
    subjects = _subject_ids(cfg, dataset)
    trials = [t for k in subjects for t in dataset.subjects[k].trials]

    results = {}
    for w in _eval_windows(cfg):
        report = evaluate(
            params, trials, dataset.fs, w,
            eval_seed=cfg["evaluation"]["eval_seed"],
            test_windows_per_trial=tcfg.test_windows_per_trial,
            fft_band=tcfg.fft_band,
        )
        results[_window_tag(w)] = report.to_dict() | {"subjects": subjects}
    print(json.dumps(results, indent=2, sort_keys=True))

    if args.out is not None:
        out = _out_dir(cfg, args)
        artifacts = []
        for tag, blob in results.items():
            path = out / f"eval_{tag}s.json"
            _write_json(path, blob)
            artifacts.append(path)
        write_manifest(out, "eval", cfg,
                       {"eval": cfg["evaluation"]["eval_seed"]}, artifacts)
    return 0


def cmd_explain(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.dataset is not None:
        cfg["dataset"], cfg["synthesis"] = args.dataset, None
    params = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(cfg)
    tcfg = _train_config(cfg)

    if not 0 <= args.subject < dataset.n_subjects:
        raise ConfigError(f"subject {args.subject} out of range [0, {dataset.n_subjects})")
    trials = dataset.subjects[args.subject].trials
    if not 0 <= args.trial < len(trials):
        raise ConfigError(f"trial {args.trial} out of range [0, {len(trials)})")
    trial = trials[args.trial]
    window_seconds = (args.window_seconds if args.window_seconds is not None
                      else tcfg.window_seconds)
    window_samples = window_sample_count(window_seconds, dataset.fs)
    try:
        window = extract_window(trial.signal, WindowSpec(window_samples, args.start))
    except IndexError as exc:
        raise ConfigError(f"start: {exc}") from exc

    x = model_inputs(window.astype(np.float64), params.config.feature_mode,
                     dataset.fs, tcfg.fft_band)
    # Firing spectra are only meaningful when tokens advance in time.
    fs = dataset.fs if params.config.feature_mode == "time_domain" else None
    report = firing_report(params, x, true_class=trial.label, fs=fs)

    out = _out_dir(cfg, args)
    report_path = out / "report.json"
    _write_json(report_path, report.to_dict())
    artifacts = [report_path]
    matrices = {
        "spatial_firing.csv": report.spatial_firing,
        "temporal_firing.csv": report.temporal_firing,
        "recovered_spatial_centers.csv": report.recovered_spatial_centers,
        "recovered_temporal_centers.csv": report.recovered_temporal_centers,
        "spatial_weighted_tokens.csv": report.spatial_weighted_tokens,
        "temporal_weighted_tokens.csv": report.temporal_weighted_tokens,
        "spatial_output.csv": report.spatial_output,
    }
    if report.rule_spectra is not None:
        # First row is the frequency axis, then one row per rule.
        matrices["rule_spectra.csv"] = np.vstack(
            [report.rule_spectra.frequencies, report.rule_spectra.magnitudes]
        )
    for name, arr in matrices.items():
        if arr is None:
            continue
        path = out / name
        np.savetxt(path, arr, delimiter=",")
        artifacts.append(path)
    write_manifest(out, "explain", cfg, {}, artifacts)
    print(f"wrote {report_path} (predicted class {report.predicted_class}, "
          f"true class {report.true_class})")
    return 0


def cmd_gradcheck(args) -> int:
    modes = ["zero_order", "first_order"] if args.mode == "both" else [args.mode]
    reports = {}
    failed = False
    for mode in modes:
        config = small_check_config(mode, dropout_rate=args.dropout)
        report = check_model_gradients(config, seed=args.seed)
        reports[mode] = report
        print(f"[{mode}] h={report.h:g} precision={report.precision} "
              f"tolerance={report.tolerance:g}")
        for g in report.groups:
            status = "PASS" if g.passed else "FAIL"
            print(f"  {status} {g.name}: max_rel={g.max_rel_error:.3e} "
                  f"at {tuple(g.worst_coordinate)}")
        failed |= not report.passed
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "gradcheck.json"
        _write_json(path, {m: r.to_dict() for m, r in reports.items()})
        write_manifest(out, "gradcheck", {"mode": args.mode, "dropout": args.dropout},
                       {"seed": args.seed}, [path])
    if failed:
        raise NumericError("gradient check failed; see report above")
    print("all parameter groups within tolerance")
    return 0


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; route through ConfigError
    # so bad flags are reported as config errors (exit 1) like bad files.
    def error(self, message):
        raise ConfigError(message)


def _add_common(sub, *, config=True, out=True, seed=True, window=False):
    if config:
        sub.add_argument("--config", help="JSON experiment config")
        sub.add_argument("--set", action="append", default=[],
                         metavar="KEY=VALUE", help="override a dotted config path")
    if out:
        sub.add_argument("--out", help="output directory (overrides out_dir)")
    if seed:
        sub.add_argument("--seed", type=int, help="override the command's seed")
    if window:
        sub.add_argument("--window-seconds", type=float,
                         help="override the window length")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fuzzyssvep",
                     description="Fuzzy-attention SSVEP decoding lab")
    subs = parser.add_subparsers(dest="command", required=True,
                                 parser_class=_Parser)

    p = subs.add_parser("gen", help="synthesize a dataset to an .ssvp file")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = subs.add_parser("train", help="train a model -> checkpoint + trace")
    _add_common(p, window=True)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("loso", help="leave-one-subject-out experiment")
    _add_common(p, window=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel folds")
    p.set_defaults(func=cmd_loso)

    p = subs.add_parser("eval", help="score a checkpoint on a dataset")
    _add_common(p, window=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help=".ssvp file (overrides config dataset)")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("explain", help="interpretability bundle for one window")
    _add_common(p, seed=False, window=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help=".ssvp file (overrides config dataset)")
    p.add_argument("--subject", type=int, required=True)
    p.add_argument("--trial", type=int, required=True)
    p.add_argument("--start", type=int, default=0,
                   help="window start sample within the trial")
    p.set_defaults(func=cmd_explain)

    p = subs.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["zero_order", "first_order", "both"],
                   default="both")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--out", help="write gradcheck.json here")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # Shape disagreements surfaced by lower layers; a config problem.
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
