"""Command-line interface.

Subcommands: train, predict, evaluate, corr, sigtest, gradcheck, synth.
Results go to files or standard output, errors to standard error. Exit codes:
0 success, 1 usage error, 2 data or model error. Every file-writing command
drops a ``*.run.json`` provenance record (arguments, config, seed) alongside
its outputs, and report paths render figures next to the delimited data.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import report
from .data import (
    DataError,
    LABELS,
    SyntheticSpec,
    corr_from_pairs,
    gen_synthetic,
    load_instances,
    load_word_vectors,
    save_instances,
    strip_labels,
)
from .evaluation import (
    PredictionRow,
    correlation_to_csv,
    correlation_to_dict,
    empirical_correlations,
    load_predictions,
    micro_prf,
    randomization_test,
    save_predictions,
    threshold_sweep,
)
from .model import ArtifactError, Model, ModelConfig, VariantError
from .training import train
from .verify import check_model_gradients, check_regularizer_gradients, fixture_model

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


class UsageError(ValueError):
    """Semantic usage problem detected after argument parsing."""


def _write_run_record(path: Path, args: argparse.Namespace, config: ModelConfig | None = None) -> None:
    record = {"command": args.command,
              "arguments": {k: v for k, v in vars(args).items() if k != "command"}}
    if config is not None:
        record["config"] = config.to_json()
        record["seed"] = config.seed
    path.write_text(json.dumps(record, indent=2, default=str) + "\n")


def _load_config(args: argparse.Namespace) -> ModelConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed config file: {exc.msg}") from None
        if not isinstance(base, dict):
            raise DataError("config file must hold a JSON object")
    overrides = {
        "variant": args.variant,
        "dim": args.dim,
        "window": args.window,
        "corr_weight": args.corr_weight,
        "threshold": args.threshold,
        "step_size": args.step_size,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "seed": args.seed,
        "optimizer": args.optimizer,
        "corr_init": args.corr_init,
        "corr_step_scale": args.corr_step_scale,
        "semi_ratio": args.semi_ratio,
        "patience": args.patience,
    }
    if args.labels_as_input:
        overrides["labels_as_input"] = True
    if args.separate_context:
        overrides["separate_context"] = True
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ModelConfig.from_json(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file mirroring the model config")
    parser.add_argument("--variant", choices=("baseline", "leam", "leam_corr", "leam_corr_semi"))
    parser.add_argument("--dim", type=int)
    parser.add_argument("--window", type=int)
    parser.add_argument("--corr-weight", dest="corr_weight", type=float)
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--step-size", dest="step_size", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--optimizer", choices=("adam", "sgd"))
    parser.add_argument("--corr-init", dest="corr_init", choices=("empirical", "identity"))
    parser.add_argument("--corr-step-scale", dest="corr_step_scale", type=float)
    parser.add_argument("--semi-ratio", dest="semi_ratio", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--labels-as-input", dest="labels_as_input", action="store_true")
    parser.add_argument("--separate-context", dest="separate_context", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="labelsem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", parents=[], help="train a model and save the artifact")
    _add_config_flags(p)
    p.add_argument("--train", required=True, help="labeled training instances (JSONL)")
    p.add_argument("--dev", help="labeled dev instances for per-epoch F1")
    p.add_argument("--unlabeled", help="unlabeled instances for the semi-supervised variant")
    p.add_argument("--vectors", help="word-vector text file matching the model dim")
    p.add_argument("--out", required=True, help="output model directory")

    p = sub.add_parser("predict", help="score instances with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="instances to score (labels optional)")
    p.add_argument("--output", required=True, help="prediction JSONL path")
    p.add_argument("--threshold", type=float, help="override the model's decision threshold")

    p = sub.add_parser("evaluate", help="micro-averaged metrics for a prediction file")
    p.add_argument("--gold", required=True, help="labeled instances (JSONL)")
    p.add_argument("--pred", required=True, help="prediction file from `predict`")
    p.add_argument("--threshold", type=float,
                   help="re-threshold the stored scores instead of using stored labels")
    p.add_argument("--sweep", help="comma-separated threshold grid to sweep for best F1")
    p.add_argument("--report-dir", help="write metrics.json/csv (and sweep figure) here")

    p = sub.add_parser("corr", help="empirical label correlations of a labeled dataset")
    p.add_argument("--data", required=True, help="labeled instances (JSONL)")
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--fig", help="heatmap path (default: alongside the CSV)")
    p.add_argument("--no-fig", action="store_true", help="skip the heatmap")

    p = sub.add_parser("sigtest", help="approximate randomization test between two systems")
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--permutations", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--streams", type=int, default=1)
    p.add_argument("--threshold", type=float,
                   help="re-threshold both systems' scores instead of using stored labels")
    p.add_argument("--report-dir", help="write the null-distribution figure and stats here")

    p = sub.add_parser("gradcheck", help="finite-difference check of all hand-derived gradients")
    p.add_argument("--variant", choices=("baseline", "leam", "leam_corr", "leam_corr_semi", "all"),
                   default="all")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("synth", help="generate a synthetic correlated-label dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--sentence-len", type=int, default=12)
    p.add_argument("--signal", type=float, default=0.7)
    p.add_argument("--pair", action="append", default=[], metavar="LABEL:LABEL:RHO",
                   help="planted latent correlation, e.g. joy:sadness:-0.6 (repeatable)")
    p.add_argument("--unlabeled", action="store_true", help="omit labels from the output")
    return parser


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_train(args) -> int:
    config = _load_config(args)
    if config.variant == "leam_corr_semi" and not args.unlabeled:
        raise UsageError("variant leam_corr_semi requires --unlabeled data")
    train_instances = load_instances(args.train, labeled=True)
    if not train_instances:
        raise DataError(f"no training instances in {args.train}")
    dev_instances = load_instances(args.dev, labeled=True) if args.dev else None
    unlabeled = load_instances(args.unlabeled, labeled=False) if args.unlabeled else None
    vectors = load_word_vectors(args.vectors, config.dim) if args.vectors else None

    out_dir = Path(args.out)
    model, history = train(
        config, train_instances, dev_instances, unlabeled, vectors,
        log=lambda msg: print(msg, file=sys.stderr),
    )
    model.save(out_dir)
    (out_dir / "history.csv").write_text(history.to_csv())
    if history.rows:
        report.training_curves(history.rows, out_dir / "training_curve.png")
    _write_run_record(out_dir / "run.json", args, config)

    summary = {"epochs_run": len(history.rows),
               "final_train_loss": history.rows[-1]["train_loss"] if history.rows else None,
               "dev_f1": history.rows[-1]["dev_f1"] if history.rows else None,
               "model_dir": str(out_dir)}
    print(json.dumps(summary))
    return 0


def _cmd_predict(args) -> int:
    model = Model.load(args.model)
    instances = load_instances(args.input, labeled=False)
    rows = []
    for instance in instances:
        record = model.predict(instance, threshold=args.threshold)
        rows.append(PredictionRow(
            story_id=instance.story_id,
            line=instance.line,
            character=instance.character,
            scores=[float(s) for s in record.scores],
            labels=record.labels,
        ))
    save_predictions(args.output, rows)
    _write_run_record(Path(args.output).with_suffix(".run.json"), args, model.config)
    return 0


def _aligned_bits(gold_instances, rows: list[PredictionRow], threshold: float | None):
    if len(gold_instances) != len(rows):
        raise DataError(
            f"gold has {len(gold_instances)} instances but predictions have {len(rows)}"
        )
    for instance, row in zip(gold_instances, rows):
        key_g = (instance.story_id, instance.line, instance.character)
        key_p = (row.story_id, row.line, row.character)
        if key_g != key_p:
            raise DataError(f"misaligned instance: gold {key_g} vs prediction {key_p}")
    gold = [i.labels for i in gold_instances]
    if threshold is None:
        pred = [row.label_bits() for row in rows]
    else:
        pred = [(np.asarray(row.scores) >= threshold).astype(int).tolist() for row in rows]
    return gold, pred


def _cmd_evaluate(args) -> int:
    gold_instances = load_instances(args.gold, labeled=True)
    rows = load_predictions(args.pred)
    gold, pred = _aligned_bits(gold_instances, rows, args.threshold)
    metrics = micro_prf(gold, pred)

    sweep_data = None
    if args.sweep:
        try:
            grid = [float(v) for v in args.sweep.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"bad sweep grid '{args.sweep}'") from None
        if not grid:
            raise UsageError("sweep grid is empty")
        scores = [row.scores for row in rows]
        best, best_report = threshold_sweep(gold, scores, grid)
        f1_curve = [micro_prf(gold, (np.asarray(scores) >= cut).astype(int)).f1 for cut in grid]
        sweep_data = {"grid": grid, "f1": f1_curve, "best_threshold": best,
                      "best": best_report.to_json()}
        metrics = best_report

    output = metrics.to_json()
    if sweep_data:
        output["best_threshold"] = sweep_data["best_threshold"]
    print(json.dumps(output))

    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(output, indent=2) + "\n")
        header = ",".join(output)
        values = ",".join(str(v) for v in output.values())
        (out / "metrics.csv").write_text(header + "\n" + values + "\n")
        if sweep_data:
            (out / "sweep.csv").write_text(
                "threshold,f1\n" + "".join(
                    f"{t:g},{f:.6f}\n" for t, f in zip(sweep_data["grid"], sweep_data["f1"])
                )
            )
            report.sweep_curve(sweep_data["grid"], sweep_data["f1"],
                               sweep_data["best_threshold"], out / "sweep.png")
        _write_run_record(out / "run.json", args)
    return 0


def _cmd_corr(args) -> int:
    instances = load_instances(args.data, labeled=True)
    if len(instances) < 2:
        raise DataError("need at least 2 labeled instances for correlations")
    matrix = empirical_correlations([i.labels for i in instances])
    Path(args.out_json).write_text(json.dumps(correlation_to_dict(matrix), indent=2) + "\n")
    Path(args.out_csv).write_text(correlation_to_csv(matrix))
    if not args.no_fig:
        fig_path = args.fig or str(Path(args.out_csv).with_suffix(".png"))
        report.correlation_heatmap(matrix, fig_path)
    _write_run_record(Path(args.out_json).with_suffix(".run.json"), args)
    return 0


def _cmd_sigtest(args) -> int:
    gold_instances = load_instances(args.gold, labeled=True)
    rows_a = load_predictions(args.pred_a)
    rows_b = load_predictions(args.pred_b)
    gold, pred_a = _aligned_bits(gold_instances, rows_a, args.threshold)
    _, pred_b = _aligned_bits(gold_instances, rows_b, args.threshold)
    result = randomization_test(
        pred_a, pred_b, gold, permutations=args.permutations, seed=args.seed,
        streams=args.streams, keep_null=bool(args.report_dir),
    )
    output = {
        "statistic": result.statistic,
        "f1_a": micro_prf(gold, pred_a).f1,
        "f1_b": micro_prf(gold, pred_b).f1,
        "permutations": result.permutations,
        "p_value": result.p_value,
    }
    print(json.dumps(output))
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sigtest.json").write_text(json.dumps(output, indent=2) + "\n")
        report.permutation_histogram(result.null_statistics, result.statistic,
                                     out / "null_distribution.png")
        _write_run_record(out / "run.json", args)
    return 0


def _cmd_gradcheck(args) -> int:
    variants = ("baseline", "leam", "leam_corr", "leam_corr_semi") \
        if args.variant == "all" else (args.variant,)
    all_ok = True
    for variant in variants:
        model, batch = fixture_model(variant, dim=args.dim, seed=args.seed)
        result = check_model_gradients(model, batch, args.epsilon, args.tolerance)
        print(f"# variant {variant}")
        print(result)
        all_ok &= result.passed
    reg = check_regularizer_gradients(epsilon=args.epsilon, tolerance=args.tolerance)
    print("# unlabeled-data regularizer (logits and correlation matrix)")
    print(reg)
    all_ok &= reg.passed
    if not all_ok:
        print("gradient check FAILED", file=sys.stderr)
        return DATA_ERROR
    return 0


def _parse_pairs(raw_pairs: list[str]) -> dict:
    pairs = {}
    for raw in raw_pairs:
        pieces = raw.split(":")
        if len(pieces) != 3:
            raise UsageError(f"bad --pair '{raw}', expected LABEL:LABEL:RHO")
        a, b, rho = pieces
        if a not in LABELS or b not in LABELS:
            raise UsageError(f"bad --pair '{raw}': labels must be among {LABELS}")
        try:
            pairs[(a, b)] = float(rho)
        except ValueError:
            raise UsageError(f"bad --pair '{raw}': RHO must be a number") from None
    return pairs


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n=args.n,
        target_corr=corr_from_pairs(_parse_pairs(args.pair)),
        vocab_size=args.vocab_size,
        sentence_len=args.sentence_len,
        signal_strength=args.signal,
    )
    instances = gen_synthetic(spec, seed=args.seed)
    if args.unlabeled:
        save_instances(args.out, strip_labels(instances))
    else:
        save_instances(args.out, instances)
    _write_run_record(Path(args.out).with_suffix(".run.json"), args)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "corr": _cmd_corr,
    "sigtest": _cmd_sigtest,
    "gradcheck": _cmd_gradcheck,
    "synth": _cmd_synth,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (DataError, ArtifactError, VariantError, FloatingPointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def main() -> None:
    raise SystemExit(run())
