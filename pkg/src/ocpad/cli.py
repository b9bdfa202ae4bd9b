"""Command-line entry point for batch experiment workflows.

Artifact paths go to stdout (one per line, nothing else); the resolved
configuration, progress notes and the human-readable result table go to
stderr. Exit codes: 0 success, 2 configuration/input error, 3 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import generate_synthetic, generator_config_from_dict, load_dataset, \
    save_dataset, split_protocol
from .errors import (
    CheckpointError,
    ConfigurationError,
    FitError,
    InputError,
    MetricError,
    OcpadError,
    ParseError,
    SplitError,
    TrainingError,
)
from .metrics import write_det_csv
from .pipeline import (
    em_config_from_dict,
    evaluate,
    extract_embeddings,
    fit_one_class,
    load_checkpoint,
    load_gmm,
    report_table,
    report_to_json,
    save_checkpoint,
    save_gmm,
    train,
    train_config_from_dict,
    train_config_to_dict,
    write_embeddings_csv,
)

_CONFIG_ERRORS = (ConfigurationError, ParseError, InputError, CheckpointError,
                  SplitError, json.JSONDecodeError)
_RUNTIME_ERRORS = (TrainingError, FitError, MetricError, OcpadError)


def _err(message: str) -> None:
    print(f"ocpad: error: {message}", file=sys.stderr)


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _artifact(path: Path) -> None:
    print(str(path))


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"missing file: {path}")
    with open(p, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"missing {what}: {path}")
    return p


def _print_resolved(doc: dict) -> None:
    _note("resolved config:")
    _note(json.dumps(doc, sort_keys=True, indent=2))


def _experiment_config(args) -> dict:
    """Load the experiment JSON and fold in command-line overrides."""
    doc = _load_json(args.config)
    channels = getattr(args, "channels", None)
    if channels:
        doc.setdefault("train", {})["channel_subset"] = channels.split(",")
    return doc


def _train_parts(doc: dict):
    if "train" not in doc:
        raise ConfigurationError("config is missing the 'train' section")
    cfg = train_config_from_dict(doc["train"])
    protocol_seed = int(doc.get("protocol_seed", 0))
    return cfg, protocol_seed


def _cmd_gen_data(args) -> int:
    doc = _load_json(args.config)
    if "generator" not in doc:
        raise ConfigurationError("config is missing the 'generator' section")
    _print_resolved({"generator": doc["generator"]})
    samples = generate_synthetic(generator_config_from_dict(doc["generator"]))
    out = Path(args.out)
    save_dataset(samples, out)
    _note(f"wrote {len(samples)} samples")
    _artifact(out)
    return 0


def _cmd_train(args) -> int:
    doc = _experiment_config(args)
    cfg, protocol_seed = _train_parts(doc)
    _print_resolved({"train": train_config_to_dict(cfg),
                     "protocol": args.protocol, "protocol_seed": protocol_seed})
    samples = load_dataset(_require_file(args.data, "dataset"))
    split = split_protocol(samples, args.protocol, protocol_seed)
    ckpt = train(split, samples, cfg)
    out = Path(args.out)
    save_checkpoint(ckpt, out)
    _note(f"selected epoch {ckpt.selected_epoch} "
          f"(dev loss {ckpt.history[ckpt.selected_epoch]['dev_loss']:.6g})")
    _artifact(out)
    return 0


def _cmd_embed(args) -> int:
    ckpt = load_checkpoint(_require_file(args.ckpt, "checkpoint"))
    _print_resolved({"train": train_config_to_dict(ckpt.train_config)})
    samples = load_dataset(_require_file(args.data, "dataset"))
    rows = extract_embeddings(ckpt, samples)
    out = Path(args.out)
    write_embeddings_csv(rows, out)
    _artifact(out)
    return 0


def _cmd_fit_gmm(args) -> int:
    doc = _experiment_config(args)
    em_cfg = em_config_from_dict(doc.get("em", {}))
    protocol_seed = int(doc.get("protocol_seed", 0))
    _print_resolved({"em": doc.get("em", {}), "protocol": args.protocol,
                     "protocol_seed": protocol_seed})
    ckpt = load_checkpoint(_require_file(args.ckpt, "checkpoint"))
    samples = load_dataset(_require_file(args.data, "dataset"))
    split = split_protocol(samples, args.protocol, protocol_seed)
    gmm = fit_one_class(ckpt, split, samples, em_cfg)
    out = Path(args.out)
    save_gmm(gmm, out)
    _artifact(out)
    return 0


def _scored_report(args):
    """Shared eval/det path: always scores with the provided GMM model."""
    doc = _experiment_config(args)
    protocol_seed = int(doc.get("protocol_seed", 0))
    target = float(doc.get("target_bpcer", 0.01))
    _print_resolved({"protocol": args.protocol, "protocol_seed": protocol_seed,
                     "target_bpcer": target})
    ckpt = load_checkpoint(_require_file(args.ckpt, "checkpoint"))
    gmm = load_gmm(_require_file(args.gmm, "GMM model"))
    samples = load_dataset(_require_file(args.data, "dataset"))
    split = split_protocol(samples, args.protocol, protocol_seed)
    return evaluate(ckpt, gmm, split, samples, target_bpcer=target)


def _cmd_eval(args) -> int:
    report = _scored_report(args)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_to_json(report))
    _note(report_table(report, title=f"protocol {args.protocol}"))
    _artifact(out)
    return 0


def _cmd_det(args) -> int:
    report = _scored_report(args)
    out = Path(args.out)
    write_det_csv(report.det_points, out)
    _artifact(out)
    return 0


def _cmd_run_protocol(args) -> int:
    doc = _experiment_config(args)
    if "generator" not in doc:
        raise ConfigurationError("config is missing the 'generator' section")
    cfg, protocol_seed = _train_parts(doc)
    em_cfg = em_config_from_dict(doc.get("em", {}))
    target = float(doc.get("target_bpcer", 0.01))
    scorer = str(doc.get("scorer", "gmm"))
    if scorer not in ("gmm", "probability"):
        raise ConfigurationError(f"unknown scorer {scorer!r}")
    _print_resolved({
        "generator": doc["generator"],
        "train": train_config_to_dict(cfg),
        "em": doc.get("em", {}),
        "protocol": args.protocol,
        "protocol_seed": protocol_seed,
        "target_bpcer": target,
        "scorer": scorer,
    })

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = generate_synthetic(generator_config_from_dict(doc["generator"]))
    split = split_protocol(samples, args.protocol, protocol_seed)
    _note(f"generated {len(samples)} samples; folds "
          f"train={len(split.train_ids)} dev={len(split.dev_ids)} "
          f"eval={len(split.eval_ids)}")

    ckpt = train(split, samples, cfg)
    _note(f"selected epoch {ckpt.selected_epoch}")
    ckpt_path = out_dir / "checkpoint.ocnn"
    save_checkpoint(ckpt, ckpt_path)

    gmm = fit_one_class(ckpt, split, samples, em_cfg)
    gmm_path = out_dir / "model.ocgm"
    save_gmm(gmm, gmm_path)

    emb_path = out_dir / "embeddings.csv"
    write_embeddings_csv(extract_embeddings(ckpt, samples), emb_path)

    report = evaluate(ckpt, gmm if scorer == "gmm" else None, split, samples,
                      target_bpcer=target)
    det_path = out_dir / "det.csv"
    write_det_csv(report.det_points, det_path)
    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_to_json(report))
    _note(report_table(report, title=f"protocol {args.protocol} ({scorer})"))

    for p in (ckpt_path, gmm_path, emb_path, det_path, report_path):
        _artifact(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ocpad",
        description="One-class PAD experiments: data generation, training, "
                    "GMM fitting and ISO-metric evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output .ocds path")
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train a network on a protocol fold")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="dataset .ocds path")
    p.add_argument("--protocol", required=True)
    p.add_argument("--channels", help="comma-separated channel subset (ablation)")
    p.add_argument("--out", required=True, help="output checkpoint .ocnn path")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("embed", help="extract embeddings to CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_embed)

    p = sub.add_parser("fit-gmm", help="fit the one-class GMM on train bonafide")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--out", required=True, help="output .ocgm path")
    p.set_defaults(fn=_cmd_fit_gmm)

    p = sub.add_parser("eval", help="score dev/eval folds and write the report")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--gmm", required=True, help="GMM model .ocgm path")
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--out", required=True, help="output report JSON path")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("det", help="write eval DET points to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--gmm", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_det)

    p = sub.add_parser("run-protocol",
                       help="generate, train, fit and evaluate in one go")
    p.add_argument("--config", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--channels", help="comma-separated channel subset (ablation)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_run_protocol)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except _CONFIG_ERRORS as exc:
        _err(str(exc))
        return 2
    except _RUNTIME_ERRORS as exc:
        _err(str(exc))
        return 3
    except OSError as exc:
        _err(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
