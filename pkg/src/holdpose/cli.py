"""Command-line entry point: ``holdpose <command> [options]``.

Settings resolve as CLI flag > ``--config`` JSON file > built-in default, and
the resolved settings are printed and stored next to every output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .core import Dataset
from .features import modality_tag, parse_modalities
from .model import load_checkpoint, save_checkpoint
from .simulate import ShakeProfile, SimConfig, load_catalog, make_catalog, save_catalog, synthesize_dataset
from .storage import ingest_release, load_dataset, save_dataset

log = logging.getLogger("holdpose")

DATA_ENV = "HOLDPOSE_DATA"


def default_data_root() -> str:
    return os.environ.get(DATA_ENV, "data/synthetic")


class CliError(RuntimeError):
    pass


def _modalities(text: str) -> str:
    try:
        return modality_tag(parse_modalities(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults, the optional JSON config file and explicit flags (flags win)."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        file_cfg = json.loads(path.read_text())
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise CliError(f"unknown keys in {path}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _echo(cfg: dict, out_dir: Path | None = None, name: str = "resolved_config.json") -> None:
    text = json.dumps(cfg, indent=2, sort_keys=True, default=str)
    print(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text + "\n")


def _load(path) -> Dataset:
    path = Path(path)
    if not (path / "dataset.json").is_file():
        raise CliError(f"no dataset found at {path} (expected {path / 'dataset.json'})")
    return load_dataset(path)


# --- synth / ingest / stats ----------------------------------------------------

SYNTH_DEFAULTS = {
    "out": None, "objects": 26, "seed": 0, "catalog": None, "slip_band": 0.15, "shake_rot": None,
    "shake_lin": None, "shake_duration": None, "workers": 1,
}


def cmd_synth(args) -> int:
    cfg = resolve(args, {**SYNTH_DEFAULTS, "out": default_data_root()})
    shake = ShakeProfile()
    shake = ShakeProfile(
        rot_impulse=cfg["shake_rot"] if cfg["shake_rot"] is not None else shake.rot_impulse,
        lin_accel_amplitude=tuple(cfg["shake_lin"]) if cfg["shake_lin"] is not None else shake.lin_accel_amplitude,
        duration=cfg["shake_duration"] if cfg["shake_duration"] is not None else shake.duration,
    )
    sim = SimConfig(slip_band=cfg["slip_band"], shake=shake)
    if cfg["catalog"]:
        catalog = load_catalog(cfg["catalog"])
    else:
        catalog = make_catalog(cfg["objects"], seed=cfg["seed"], cfg=sim)
    out = Path(cfg["out"])
    _echo(cfg, out)
    ds = synthesize_dataset(catalog, sim, seed=cfg["seed"], workers=cfg["workers"])
    save_dataset(ds, out, extra_meta={"run_config": cfg})
    save_catalog(catalog, out / "catalog.json")
    (out / "pose_space.json").write_text(json.dumps(ds.meta["pose_space"], indent=2) + "\n")
    print(f"wrote {len(ds)} cycles on {len(catalog)} objects to {out}")
    return 0


def cmd_ingest(args) -> int:
    ds = ingest_release(args.src)
    if len(ds) == 0:
        raise CliError(f"no cycles found under {args.src}")
    save_dataset(ds, args.out)
    print(f"ingested {len(ds)} cycles into {args.out}")
    return 0


def cmd_stats(args) -> int:
    from .evaluation.stats import dataset_statistics

    ds = _load(args.data or default_data_root())
    if len(ds) == 0:
        raise CliError("dataset is empty")
    st = dataset_statistics(ds)
    print(st.format())
    truth = ds.meta.get("label_counts")
    if truth:
        ok = all(truth[ph][lab] == n for ph, row in st.counts().items() for lab, n in row.items())
        print("generator ground truth:", "match" if ok else "MISMATCH")
        if not ok:
            return 1
    if args.csv:
        Path(args.csv).write_text(st.to_csv())
    return 0


# --- train / eval / sweep / report ---------------------------------------------

def _experiment_defaults() -> dict:
    from .evaluation.experiment import ExperimentConfig

    return {f.name: getattr(ExperimentConfig(), f.name) for f in fields(ExperimentConfig)}


RUN_DEFAULTS = {
    "data": None, "protocol": "Uniform", "variant": "LSTM+DRS", "modalities": "VT", "seed": 0, "split_seed": 0,
    "held_group": "G1", "out": "runs/latest",
}


def _run_settings(args) -> tuple[dict, object]:
    from .evaluation.experiment import ExperimentConfig

    exp_defaults = _experiment_defaults()
    cfg = resolve(args, {**RUN_DEFAULTS, **exp_defaults, "data": default_data_root()})
    exp = ExperimentConfig(**{k: cfg[k] for k in exp_defaults})
    return cfg, exp


def _run_key(cfg: dict):
    from .evaluation.experiment import RunKey, Variant
    from .evaluation.splits import Protocol

    protocol = Protocol.parse(cfg["protocol"])
    params = (("held_group", cfg["held_group"]),) if protocol is Protocol.POSE_GROUP else ()
    return RunKey(protocol, Variant.parse(cfg["variant"]), _modalities(cfg["modalities"]), cfg["seed"],
                  cfg["split_seed"], params)


def _train_and_save(cfg: dict, exp, out: Path):
    from .evaluation.experiment import FeatureBank, run_one

    ds = _load(cfg["data"])
    key = _run_key(cfg)
    bank = FeatureBank.for_config(ds, exp)
    res = run_one(bank, key, exp)
    res.manifest.save(out / "manifest.json")
    extra = {"resolved_config": cfg, "standardizer": res.standardizer.to_dict(), "sigma": res.sigma,
             "best_iteration": res.best_iteration, "val_accuracy": res.val_accuracy,
             "metrics": res.metrics.to_dict()}
    if hasattr(res.model, "tensors"):
        save_checkpoint(out / "model.npz", res.model, extra)
        with (out / "train_log.jsonl").open("w") as fh:
            for rec in res.history:
                fh.write(json.dumps(rec) + "\n")
    else:
        extra["constant_label"] = int(res.model.label)
        (out / "model.json").write_text(json.dumps(extra, indent=2, default=str) + "\n")
    (out / "metrics.json").write_text(json.dumps({**res.row(), **res.metrics.to_dict()}, indent=2) + "\n")
    return res


def cmd_train(args) -> int:
    cfg, exp = _run_settings(args)
    out = Path(cfg["out"])
    _echo(cfg, out)
    res = _train_and_save(cfg, exp, out)
    print(f"best val accuracy {res.val_accuracy} at iteration {res.best_iteration}; "
          f"test accuracy {res.metrics.accuracy:.4f}; outputs in {out}")
    return 0


def _evaluate_checkpoint(path: Path, data_root):
    from .evaluation.experiment import FeatureBank, RunKey, RunResult, Variant
    from .evaluation.metrics import ModelClassifier, evaluate
    from .evaluation.splits import Protocol, SplitManifest
    from .features import Standardizer, apply_standardizer, stack
    from .evaluation.experiment import ExperimentConfig

    params, extra = load_checkpoint(path)
    cfg = extra["resolved_config"]
    exp = ExperimentConfig(**{k: cfg[k] for k in _experiment_defaults()})
    manifest = SplitManifest.load(path.parent / "manifest.json")
    bank = FeatureBank.for_config(_load(data_root or cfg["data"]), exp)
    variant = Variant.parse(cfg["variant"])
    st = Standardizer.from_dict(extra["standardizer"])
    test = [apply_standardizer(st, s) for s in bank.get(manifest.test, cfg["modalities"], variant.span)]
    X, y, yp = stack(test)
    key = RunKey(Protocol.parse(cfg["protocol"]), variant, _modalities(cfg["modalities"]), cfg["seed"],
                 cfg["split_seed"])
    return RunResult(key, evaluate(ModelClassifier(params), X, y, yp), manifest=manifest)


def cmd_eval(args) -> int:
    from .evaluation.report import write_results

    if args.checkpoint:
        res = _evaluate_checkpoint(Path(args.checkpoint), args.data)
        out = Path(args.checkpoint).parent
    else:
        cfg, exp = _run_settings(args)
        out = Path(cfg["out"])
        _echo(cfg, out)
        res = _train_and_save(cfg, exp, out)
    results = Path(args.results) if args.results else out / "results.csv"
    write_results(results, [res.row()], append=True)
    print(",".join(str(v) for v in res.row().values()))
    return 0


SWEEP_PRESETS = {
    "paper-tables": {
        "pose": {"protocols": ["PoseGroup", "RandomPoses", "Uniform"], "variants": ["LSTM+DRS"],
                 "modalities": ["T", "VT"]},
        "object": {"protocols": ["UnseenObjects"],
                   "variants": ["LSTM-WC", "Majority", "LSTM-P", "Linear", "LSTM", "LSTM+DRS"],
                   "modalities": ["V", "T", "VT"]},
    },
    "unseen-poses": {
        "pose": {"protocols": ["PoseGroup", "RandomPoses", "Uniform"], "variants": ["LSTM+DRS"],
                 "modalities": ["T", "VT"]},
    },
    "unseen-objects": {
        "object": {"protocols": ["UnseenObjects"],
                   "variants": ["LSTM-WC", "Majority", "LSTM-P", "Linear", "LSTM", "LSTM+DRS"],
                   "modalities": ["V", "T", "VT"]},
    },
}


def _sweep_keys(ds, preset: str, splits, seeds):
    from .evaluation.experiment import RunKey, Variant, protocol_plan
    from .evaluation.splits import Protocol

    keys = []
    for block in SWEEP_PRESETS[preset].values():
        for p in block["protocols"]:
            protocol = Protocol.parse(p)
            plan = protocol_plan(protocol, ds, n_splits=splits, n_seeds=seeds)
            for v in block["variants"]:
                for m in block["modalities"]:
                    for split_seed, seed, params in plan:
                        keys.append(RunKey(protocol, Variant.parse(v), _modalities(m), seed, split_seed, params))
    return keys


def cmd_sweep(args) -> int:
    from .evaluation.experiment import FeatureBank, run_keys
    from .evaluation.report import write_results

    exp_defaults = _experiment_defaults()
    defaults = {"data": default_data_root(), "preset": "paper-tables", "splits": None, "seeds": None,
                "workers": 1, "out": "runs/sweep", **exp_defaults}
    cfg = resolve(args, defaults)
    from .evaluation.experiment import ExperimentConfig

    exp = ExperimentConfig(**{k: cfg[k] for k in exp_defaults})
    out = Path(cfg["out"])
    _echo(cfg, out)
    ds = _load(cfg["data"])
    keys = _sweep_keys(ds, cfg["preset"], cfg["splits"], cfg["seeds"])
    print(f"{len(keys)} runs")
    results_path = out / "results.csv"
    write_results(results_path, [])
    manifests = out / "manifests"
    manifests.mkdir(exist_ok=True)

    def flush(res):
        write_results(results_path, [res.row()], append=True)
        params = "-".join(str(v if isinstance(v, str) else "+".join(v)) for _, v in res.key.split_params)
        name = f"{res.key.protocol.value}-{res.key.split_seed}{'-' + params if params else ''}.json"
        if not (manifests / name).exists():
            res.manifest.save(manifests / name)

    bank = FeatureBank.for_config(ds, exp)
    run_keys(bank, keys, exp, workers=cfg["workers"], on_result=flush)
    return _write_report(results_path, out)


def _write_report(results_path: Path, out: Path) -> int:
    from .evaluation.experiment import summarize
    from .evaluation.report import bar_chart, full_report, read_results, summary_csv
    from .evaluation.splits import Protocol

    rows = read_results(results_path)
    if not rows:
        raise CliError(f"no result rows in {results_path}")
    text = full_report(rows)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text)
    summaries = summarize(rows)
    (out / "summary.csv").write_text(summary_csv(summaries))
    pose = [s for s in summaries if s.protocol != Protocol.UNSEEN_OBJECTS.value]
    obj = [s for s in summaries if s.protocol == Protocol.UNSEEN_OBJECTS.value]
    if pose:
        bar_chart(pose, out / "unseen_poses.svg", "Unseen poses")
    if obj:
        bar_chart(obj, out / "unseen_objects.svg", "Unseen objects")
    print(text)
    return 0


def cmd_report(args) -> int:
    results = Path(args.results)
    if not results.is_file():
        raise CliError(f"results file not found: {results}")
    return _write_report(results, Path(args.out) if args.out else results.parent)


# --- parser ---------------------------------------------------------------------

def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, help="recurrent hidden size (default 64)")
    p.add_argument("--embed-dim", type=int, help="image embedding size per modality (default 64)")
    p.add_argument("--embed-seed", type=int)
    p.add_argument("--n-steps", type=int, help="timesteps per sequence (default 20)")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--anneal-factor", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--iterations", type=int, help="override the protocol preset")
    p.add_argument("--anneal-at", type=int, help="override the protocol preset")
    p.add_argument("--sigma", type=float, help="DRS ratio (default 0.5 for T, 1 otherwise)")
    p.add_argument("--tune-sigma", action="store_true", default=None, help="pick sigma from {0.5, 1} on validation")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV} or data/synthetic)")
    p.add_argument("--protocol", help="uniform, random-poses, pose-group or unseen-objects")
    p.add_argument("--variant", help="lstm, lstm-drs, lstm-p, lstm-wc, linear or majority")
    p.add_argument("--modalities", type=_modalities, help="V, T or VT")
    p.add_argument("--seed", type=int, help="training seed")
    p.add_argument("--split-seed", type=int)
    p.add_argument("--held-group", choices=["G1", "G2", "G3"], help="held-out group for pose-group splits")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file with default settings")
    _add_experiment_flags(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holdpose", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", help=f"dataset directory (default ${DATA_ENV} or data/synthetic)")
    p.add_argument("--objects", type=int, help="number of random catalog objects (default 26)")
    p.add_argument("--seed", type=int)
    p.add_argument("--catalog", help="object catalog JSON file instead of a random catalog")
    p.add_argument("--slip-band", type=float)
    p.add_argument("--shake-rot", type=float, help="rotational shake impulse, rad/s^2")
    p.add_argument("--shake-lin", type=float, nargs=3, metavar=("AX", "AY", "AZ"),
                   help="linear shake amplitudes per world axis, m/s^2")
    p.add_argument("--shake-duration", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--config", help="JSON file with default settings")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="convert a downloaded public release into the dataset format")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="per-phase label statistics")
    p.add_argument("--data")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one model on one split")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="train and score one run (or score a saved checkpoint)")
    _add_run_flags(p)
    p.add_argument("--checkpoint", help="score this model.npz on its stored test split instead of training")
    p.add_argument("--results", help="results CSV to append to (default <out>/results.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a grid of protocols x variants x modalities")
    p.add_argument("--data")
    p.add_argument("--preset", choices=sorted(SWEEP_PRESETS))
    p.add_argument("--splits", type=int, help="splits (or groups / object sets) per protocol")
    p.add_argument("--seeds", type=int, help="training seeds per split")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--config", help="JSON file with default settings")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="tables and charts from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
