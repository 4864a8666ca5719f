"""Command-line interface.

Subcommands: train, evaluate, augment, campaign, report, plot. A dataset is
either a directory (images/ + masks/ pairs) passed with --dataset-root, or a
generated corpus via --synthetic N,SIZE. Campaign exit codes: 0 all
experiments succeeded, 1 partial failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .augment import AugmentationKind, AugmentationSpec, apply_augmentation
from .dataset import generate_synthetic_dataset, load_dataset, save_dataset, split_dataset
from .errors import ConfigurationError
from .experiments import (
    ExperimentSpec,
    build_preset,
    load_campaign_config,
    load_campaign_result,
    parse_dataset_root,
    plot_curves,
    render_report,
    run_campaign,
    run_experiment,
)
from .losses import FocalParams
from .metrics import REPORT_COLUMNS
from .trainer import TrainingConfig, evaluate
from .unet import UNetConfig, load_checkpoint

AUGMENTATION_CHOICES = [k.value for k in AugmentationKind]


def _dataset_root(args) -> str:
    if args.synthetic and args.dataset_root:
        raise ConfigurationError("--dataset-root and --synthetic are mutually exclusive")
    if args.synthetic:
        try:
            n, size = (int(v) for v in args.synthetic.split(","))
        except ValueError as exc:
            raise ConfigurationError(f"--synthetic expects N,SIZE, got {args.synthetic!r}") from exc
        return f"synthetic({n}, {size})"
    if args.dataset_root:
        return args.dataset_root
    raise ConfigurationError("provide --dataset-root or --synthetic N,SIZE")


def _load_corpus(root: str, input_size: int, seed: int):
    parsed = parse_dataset_root(root)
    if isinstance(parsed, Path):
        return load_dataset(parsed, target_size=input_size)
    n, size = parsed
    if size != input_size:
        raise ConfigurationError(f"synthetic size {size} != expected input size {input_size}")
    return generate_synthetic_dataset(n, size, seed)


def _print_report(report) -> None:
    row = report.to_row()
    print("  ".join(REPORT_COLUMNS))
    print("  ".join(f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c])
                    for c in REPORT_COLUMNS))


def _cmd_train(args) -> int:
    root = _dataset_root(args)
    spec = ExperimentSpec(
        name=args.name,
        dataset_root=root,
        focal=FocalParams(alpha=args.alpha, gamma=args.gamma),
        augmentation=AugmentationSpec(
            kind=AugmentationKind(args.augmentation), fraction=args.fraction, seed=args.seed
        ),
        model=UNetConfig(input_size=args.input_size, base_filters=args.base_filters),
        training=TrainingConfig(
            batch_size=args.batch_size,
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            seed=args.seed,
        ),
        output_dir=Path(args.output_dir) / args.name,
    )
    outcome = run_experiment(spec, split_seed=args.seed)
    _print_report(outcome.report)
    print(f"artifacts in {spec.output_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples = _load_corpus(_dataset_root(args), model.config.input_size, args.seed)
    splits = split_dataset(samples, args.seed)
    report = evaluate(
        model, splits.test, FocalParams(alpha=args.alpha, gamma=args.gamma), args.threshold
    )
    report.experiment = Path(args.checkpoint).stem
    _print_report(report)
    return 0


def _cmd_augment(args) -> int:
    samples = _load_corpus(_dataset_root(args), args.input_size, args.seed)
    spec = AugmentationSpec(
        kind=AugmentationKind(args.kind), fraction=args.fraction, seed=args.seed
    )
    augmented = apply_augmentation(samples, spec)
    save_dataset(augmented, args.output_dir)
    print(f"wrote {len(augmented)} samples ({len(augmented) - len(samples)} new) "
          f"to {args.output_dir}")
    return 0


def _cmd_campaign(args) -> int:
    if bool(args.config) == bool(args.preset):
        raise ConfigurationError("provide exactly one of --preset or --config")
    if args.config:
        specs, output_root = load_campaign_config(args.config)
    else:
        output_root = Path(args.output_dir)
        specs = build_preset(args.preset, output_root, args.seed, args.dataset_root)
    result = run_campaign(specs, output_root, parallel=args.parallel)
    for row in result.rows:
        _print_report(row.report)
    for failure in result.failures:
        print(f"FAILED {failure['name']}: {failure['error']}", file=sys.stderr)
    return 0 if result.ok else 1


def _cmd_report(args) -> int:
    campaign_dir = Path(args.campaign_dir)
    result = load_campaign_result(campaign_dir / "campaign_result.json")
    csv_path, txt_path = render_report(result, campaign_dir)
    print(txt_path.read_text())
    print(f"wrote {csv_path} and {txt_path}")
    return 0


def _cmd_plot(args) -> int:
    loss_path, acc_path = plot_curves(args.history, args.output_dir)
    print(f"wrote {loss_path} and {acc_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="experiment seed")
    common.add_argument("--output-dir", default="runs", help="where to write artifacts")
    common.add_argument("--dataset-root", help="dataset directory (images/ + masks/)")
    common.add_argument("--synthetic", metavar="N,SIZE",
                        help="generate a synthetic corpus instead of loading one")

    parser = argparse.ArgumentParser(prog="tumorseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one model end-to-end")
    p.add_argument("--name", default="experiment")
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--augmentation", choices=AUGMENTATION_CHOICES, default="none")
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--input-size", type=int, default=256)
    p.add_argument("--base-filters", type=int, default=64)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("augment", parents=[common], help="materialize an augmented corpus")
    p.add_argument("--kind", choices=AUGMENTATION_CHOICES, required=True)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--input-size", type=int, default=256)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("campaign", parents=[common], help="run a preset or configured campaign")
    p.add_argument("--preset", choices=["phase1", "phase2", "desk"])
    p.add_argument("--config", help="campaign YAML file")
    p.add_argument("--parallel", action="store_true",
                   help="run independent experiments in separate processes")
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("report", parents=[common], help="re-render a campaign report")
    p.add_argument("--campaign-dir", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("plot", parents=[common], help="plot loss/accuracy curves from history CSVs")
    p.add_argument("history", nargs="+", help="history.csv paths")
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
