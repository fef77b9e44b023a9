"""Command-line pipeline: synth | train | tune | score | eval | report."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import aggregate, evalkit, hyperband, synthgen, trainer
from .flowstore import EntityKind, FlowLogError, parse_flow_log, write_flow_log
from .sluicemodel import DomainCnnConfig, ModelMode, SluiceModel, build_model
from .trainer import TrainConfig, WindowDataset

_MODE_FLAGS = {
    "sluice": ModelMode.SLUICE,
    "hard": ModelMode.HARD_SHARING,
    "independent-client": ModelMode.INDEPENDENT_CLIENT,
    "independent-domain": ModelMode.INDEPENDENT_DOMAIN,
}


class ValidationError(Exception):
    """User input problem: exit code 1."""


def _load_json(path, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{what} file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {what} file {path}: {exc}")


def _write_resolved_config(out_dir: Path, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "resolved_config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_synth(args) -> int:
    cfg_dict = _load_json(args.config, "synth config") if args.config else {}
    try:
        cfg = synthgen.SynthConfig(**cfg_dict)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad synth config: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flows, truth = synthgen.generate(cfg)
    write_flow_log(out / "flows.jsonl", flows)
    (out / "truth.json").write_text(truth.to_json() + "\n", encoding="utf-8")
    _write_resolved_config(out, {"command": "synth", "synth": asdict(cfg)})
    print(f"wrote {len(flows)} flows to {out / 'flows.jsonl'}")
    return 0


def _train_config(cfg_dict: dict) -> tuple[TrainConfig, DomainCnnConfig, int, int]:
    train_cfg = TrainConfig(**cfg_dict.get("train", {}))
    cnn_cfg = DomainCnnConfig(**cfg_dict.get("cnn", {}))
    dense_units = int(cfg_dict.get("dense_units", 64))
    k = int(cfg_dict.get("k", 2))
    return train_cfg, cnn_cfg, dense_units, k


def cmd_train(args) -> int:
    if not Path(args.data).exists():
        raise ValidationError(f"--data path does not exist: {args.data}")
    cfg_dict = _load_json(args.config, "train config") if args.config else {}
    try:
        train_cfg, cnn_cfg, dense_units, k = _train_config(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad train config: {exc}")
    mode = _MODE_FLAGS[args.mode]
    flows = parse_flow_log(args.data)
    dataset = WindowDataset(flows, k=k)
    model = build_model(
        mode, cnn=cnn_cfg, dense_units=dense_units, k=k, seed=train_cfg.seed
    )
    model, trace = trainer.train(model, dataset, train_cfg)
    out_model = Path(args.out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    resolved = {
        "command": "train",
        "mode": mode.value,
        "data": str(args.data),
        "train": asdict(train_cfg),
        "cnn": asdict(cnn_cfg),
        "dense_units": dense_units,
        "k": k,
    }
    model.save(out_model, extra_header=resolved)
    trainer.write_loss_trace(out_model.with_suffix(".loss.csv"), trace)
    _write_resolved_config(out_model.parent, resolved)
    print(f"trained {mode.value} model -> {out_model}")
    return 0


def cmd_tune(args) -> int:
    if not Path(args.data).exists():
        raise ValidationError(f"--data path does not exist: {args.data}")
    space_dict = _load_json(args.space, "search space") if args.space else {}
    try:
        space = hyperband.SearchSpace(
            **{key: tuple(val) for key, val in space_dict.items()}
        )
    except TypeError as exc:
        raise ValidationError(f"bad search space: {exc}")
    mode = _MODE_FLAGS[args.mode]
    flows = parse_flow_log(args.data)
    labels = np.array(
        [1 if f.flow_label.value == "malicious" else 0 for f in flows]
    )
    train_idx, val_idx = trainer.split_train_val(labels, 0.2, seed=args.seed)
    train_flows = [flows[i] for i in train_idx]
    val_flows = [flows[i] for i in val_idx]
    task = "domain" if mode is ModelMode.INDEPENDENT_DOMAIN else "client"

    def evaluator(config: dict, epochs: int) -> float:
        k = (config["window_size"] - 1) // 2
        cnn = DomainCnnConfig(
            embedding_size=config["embedding_size"],
            kernel_width=config["kernel_width"],
            n_filters=config["n_filters"],
            dense_units=config["cnn_dense_units"],
        )
        model = build_model(
            mode, cnn=cnn, dense_units=config["dense_units"], k=k, seed=args.seed
        )
        cfg = TrainConfig(epochs=epochs, seed=args.seed)
        trainer.train(model, WindowDataset(train_flows, k=k), cfg)
        scores = aggregate.score_flows(model, val_flows, task)
        val_labels = np.array(
            [
                1 if getattr(f, "flow_label" if task == "client" else "domain_label").value == "malicious" else 0
                for f in val_flows
            ]
        )
        return evalkit.roc_curve(scores, val_labels).auc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    best, score, _ = hyperband.hyperband_search(
        space,
        evaluator,
        R=args.R,
        eta=args.eta,
        seed=args.seed,
        trace_path=out / "search_trace.jsonl",
    )
    with open(out / "best_config.json", "w", encoding="utf-8") as fh:
        json.dump({"config": best, "score": score}, fh, sort_keys=True, indent=2)
    _write_resolved_config(
        out,
        {
            "command": "tune",
            "mode": mode.value,
            "data": str(args.data),
            "R": args.R,
            "eta": args.eta,
            "seed": args.seed,
            "space": {k_: list(v) for k_, v in asdict(space).items()},
        },
    )
    print(f"best config (score {score:.4f}): {best}")
    return 0


def cmd_score(args) -> int:
    for path, flag_name in ((args.model, "--model"), (args.data, "--data")):
        if not Path(path).exists():
            raise ValidationError(f"{flag_name} path does not exist: {path}")
    model = SluiceModel.load(args.model)
    flows = parse_flow_log(args.data)
    kind = EntityKind(args.kind)
    scores = aggregate.score_entities(model, flows, kind)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    aggregate.write_verdicts(out, scores, flows)
    _write_resolved_config(
        out.parent,
        {
            "command": "score",
            "model": str(args.model),
            "data": str(args.data),
            "kind": kind.value,
        },
    )
    print(f"wrote {len(scores)} {kind.value} instance scores -> {out}")
    return 0


def _read_verdicts(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((row["kind"], row["entity"], int(row["day"]), float(row["score"])))
    if not rows:
        raise ValidationError(f"no verdict rows in {path}")
    return rows


def cmd_eval(args) -> int:
    rows = _read_verdicts(args.scores)
    truth = synthgen.GroundTruth.from_json(Path(args.truth).read_text())
    kind = rows[0][0]
    positives = (
        truth.infected_clients if kind == "client" else truth.malicious_domains
    )
    families = truth.client_family if kind == "client" else truth.domain_family
    scores = np.array([r[3] for r in rows])
    labels = np.array([1 if r[1] in positives else 0 for r in rows])
    tags = np.array([families.get(r[1], "") for r in rows], dtype=object)

    out = Path(args.out_curves)
    out.mkdir(parents=True, exist_ok=True)
    roc = evalkit.roc_curve(scores, labels)
    pr = evalkit.pr_curve(scores, labels)
    evalkit.write_curve_csv(out / "roc.csv", roc)
    evalkit.write_curve_csv(out / "pr.csv", pr)
    summary = {"kind": kind, "roc_auc": roc.auc, "pr_auc": pr.auc, "groups": {}}
    if args.group_by:
        for group in sorted({t for t in tags if t}):
            try:
                gcurve = evalkit.eval_by_group(scores, labels, tags, group)
            except ValueError:
                continue
            evalkit.write_curve_csv(out / f"roc_{group}.csv", gcurve)
            summary["groups"][group] = gcurve.auc
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_resolved_config(
        out,
        {
            "command": "eval",
            "scores": str(args.scores),
            "truth": str(args.truth),
            "group_by": args.group_by,
        },
    )
    print(f"ROC AUC {roc.auc:.4f}, PR AUC {pr.auc:.4f} -> {out}")
    return 0


def cmd_report(args) -> int:
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    curves_dir = Path(args.curves)
    csv_files = sorted(curves_dir.glob("*.csv"))
    csv_files = [p for p in csv_files if p.name != "summary.json"]
    if not csv_files:
        raise ValidationError(f"no curve CSV files in {curves_dir}")
    out = Path(args.out_svg)
    out.mkdir(parents=True, exist_ok=True)
    for path in csv_files:
        curve = evalkit.read_curve_csv(path)
        x, y = curve.points[:, 1], curve.points[:, 2]
        order = np.argsort(x, kind="stable")
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(x[order], y[order], lw=1.5)
        is_roc = path.stem.startswith("roc")
        ax.set_xlabel("false positive rate" if is_roc else "recall")
        ax.set_ylabel("true positive rate" if is_roc else "precision")
        if is_roc:
            ax.set_xscale("symlog", linthresh=1e-4)
        ax.set_title(path.stem)
        fig.tight_layout()
        fig.savefig(out / f"{path.stem}.svg")
        plt.close(fig)
    print(f"rendered {len(csv_files)} charts -> {out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sluiceflow",
        description="Detect infected clients and malicious domains from flow logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled flow log")
    p.add_argument("--config", help="SynthConfig JSON file (defaults if omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a flow classifier")
    p.add_argument("--mode", choices=sorted(_MODE_FLAGS), required=True)
    p.add_argument("--data", required=True, help="flow log (jsonl)")
    p.add_argument("--out-model", required=True)
    p.add_argument("--config", help="train config JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="hyperband hyperparameter search")
    p.add_argument("--space", help="SearchSpace JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=sorted(_MODE_FLAGS), default="independent-client")
    p.add_argument("--R", type=int, default=27)
    p.add_argument("--eta", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("score", help="score daily client/domain instances")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=["client", "domain"], required=True)
    p.add_argument("--out", required=True, help="verdict CSV path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="curves and AUC from verdicts + ground truth")
    p.add_argument("--scores", required=True, help="verdict CSV")
    p.add_argument("--truth", required=True, help="ground-truth JSON")
    p.add_argument("--group-by", choices=["family"], default=None)
    p.add_argument("--out-curves", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render SVG charts from curve CSVs")
    p.add_argument("--curves", required=True)
    p.add_argument("--out-svg", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValidationError, FlowLogError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
