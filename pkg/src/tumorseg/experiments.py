"""Config-driven experiment campaigns: run, report, plot, and overlay.

A campaign is a list of experiment specs sharing one split seed, so every
experiment sees the same train/val/test partition. Each experiment runs
end-to-end (load, split, augment, build, train, evaluate) and leaves its
artifacts in its own directory:

    report.csv / report.txt     metric row (+ static reference block)
    history.csv                 per-epoch train/val loss and accuracy
    curves_loss.png / curves_acc.png
    overlays/<id>.png           prediction (green) vs ground truth (blue)
    split_manifest.txt          the exact id partition
    last.ckpt / best_val.ckpt

Campaign-level report.csv/report.txt and campaign_result.json aggregate the
rows. One failed experiment does not stop the rest.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import re
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import yaml
from PIL import Image

from .augment import AugmentationKind, AugmentationSpec
from .dataset import (
    Sample,
    generate_synthetic_dataset,
    load_dataset,
    split_dataset,
    write_split_manifest,
)
from .errors import ConfigurationError
from .losses import FocalParams
from .metrics import (
    REPORT_COLUMNS,
    MetricReport,
    binarize_prediction,
    evaluate_dataset_per_image,
)
from .reference_results import REPORTED_AUGMENTATION_RESULTS, REPORTED_FOCAL_RESULTS
from .trainer import (
    TrainingConfig,
    TrainingHistory,
    predict_probabilities,
    report_from_probabilities,
    train,
)
from .unet import UNetConfig, build_unet

_SYNTHETIC_ROOT = re.compile(r"^synthetic\(\s*(\d+)\s*,\s*(\d+)\s*\)$")

# Desk-scale preset: CI-speed end-to-end run on the synthetic corpus. The
# higher learning rate compensates for the short 15-epoch schedule.
DESK_SAMPLES = 200
DESK_SIZE = 64
DESK_BASE_FILTERS = 8
DESK_EPOCHS = 15
DESK_LEARNING_RATE = 1e-3

OVERLAY_TINT = 0.5


@dataclass
class ExperimentSpec:
    """Everything needed to run one experiment end-to-end."""

    name: str
    dataset_root: str
    focal: FocalParams
    augmentation: AugmentationSpec
    model: UNetConfig
    training: TrainingConfig
    output_dir: Path

    def __post_init__(self) -> None:
        if not self.name or "/" in self.name:
            raise ConfigurationError(f"invalid experiment name {self.name!r}")
        self.output_dir = Path(self.output_dir)


@dataclass
class ExperimentOutcome:
    name: str
    report: MetricReport
    history_path: Path
    checkpoint_path: Path


@dataclass
class CampaignResult:
    split_seed: int
    rows: list[ExperimentOutcome] = field(default_factory=list)
    failures: list[dict[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def parse_dataset_root(value: str) -> tuple[int, int] | Path:
    """Either a directory path or `synthetic(n, size)` for a generated corpus."""
    m = _SYNTHETIC_ROOT.match(str(value).strip())
    if m:
        return int(m.group(1)), int(m.group(2))
    return Path(value)


def resolve_dataset(spec: ExperimentSpec, seed: int) -> list[Sample]:
    parsed = parse_dataset_root(spec.dataset_root)
    if isinstance(parsed, Path):
        return load_dataset(parsed, target_size=spec.model.input_size)
    n, size = parsed
    if size != spec.model.input_size:
        raise ConfigurationError(
            f"synthetic size {size} does not match model input_size {spec.model.input_size}"
        )
    return generate_synthetic_dataset(n, size, seed)


def run_experiment(
    spec: ExperimentSpec, split_seed: int, overlay_count: int = 4
) -> ExperimentOutcome:
    """Run one spec end-to-end and write its artifact directory."""
    exp_dir = spec.output_dir
    exp_dir.mkdir(parents=True, exist_ok=True)

    samples = resolve_dataset(spec, split_seed)
    splits = split_dataset(samples, split_seed)
    write_split_manifest(splits, exp_dir / "split_manifest.txt")

    model = build_unet(spec.model, seed=spec.training.seed)
    cfg = replace(spec.training, checkpoint_dir=exp_dir)
    model, history = train(model, splits, spec.focal, spec.augmentation, cfg)
    history_path = history.save_csv(exp_dir / "history.csv")

    test_images = np.stack([s.image for s in splits.test])
    test_masks = np.stack([s.mask for s in splits.test])
    probs = predict_probabilities(model, test_images, cfg.batch_size)
    report = report_from_probabilities(probs, test_masks, spec.focal, cfg.eval_threshold)
    report.experiment = spec.name
    per_image = evaluate_dataset_per_image(probs, test_masks, cfg.eval_threshold)

    outcome = ExperimentOutcome(spec.name, report, history_path, exp_dir / "last.ckpt")
    partial = CampaignResult(split_seed=split_seed, rows=[outcome])
    render_report(partial, exp_dir, per_image={spec.name: per_image})
    (exp_dir / "per_image_metrics.json").write_text(json.dumps(per_image, indent=2) + "\n")
    plot_curves([history_path], exp_dir, names=[spec.name])

    overlays_dir = exp_dir / "overlays"
    overlays_dir.mkdir(exist_ok=True)
    for s, p in zip(splits.test[:overlay_count], probs[:overlay_count]):
        overlay = render_overlay(s.image, s.mask, binarize_prediction(p, cfg.eval_threshold))
        write_overlay(overlay, overlays_dir / f"{s.id}.png")

    return outcome


def run_campaign(
    specs: list[ExperimentSpec], output_dir: str | Path, parallel: bool = False
) -> CampaignResult:
    """Execute every spec, sharing the first spec's seed for the data split.

    A failing experiment is recorded and the campaign continues; the combined
    report covers the completed rows. Experiments share no mutable state, so
    the opt-in parallel mode runs them in separate processes with results
    identical to a sequential campaign.
    """
    if not specs:
        raise ConfigurationError("campaign has no experiments")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate experiment names: {names}")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    result = CampaignResult(split_seed=specs[0].training.seed)
    if parallel and len(specs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(len(specs), os.cpu_count() or 1),
                                 mp_context=ctx) as pool:
            futures = [pool.submit(run_experiment, spec, result.split_seed) for spec in specs]
            for spec, future in zip(specs, futures):
                try:
                    result.rows.append(future.result())
                except Exception as exc:  # noqa: BLE001 - isolate per-experiment failures
                    result.failures.append(
                        {"name": spec.name, "error": f"{type(exc).__name__}: {exc}"}
                    )
    else:
        for spec in specs:
            try:
                result.rows.append(run_experiment(spec, result.split_seed))
            except Exception as exc:  # noqa: BLE001 - isolate per-experiment failures
                traceback.print_exc()
                result.failures.append(
                    {"name": spec.name, "error": f"{type(exc).__name__}: {exc}"}
                )
    if result.rows:
        render_report(result, output_dir)
    save_campaign_result(result, output_dir / "campaign_result.json")
    return result


# --- reporting ---------------------------------------------------------------


def render_report(
    result: CampaignResult,
    output_dir: str | Path,
    per_image: dict[str, dict[str, float]] | None = None,
) -> tuple[Path, Path]:
    """Write report.csv (full precision) and report.txt (4 decimal places).

    The text report appends the static full-scale reference rows, clearly
    labeled as previously reported numbers, for side-by-side comparison.
    ``per_image`` optionally adds per-image mean columns (the alternative
    averaging convention) to the text report, labeled as such.
    """
    if not result.rows:
        raise ValueError("no completed experiments to report")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    csv_path = output_dir / "report.csv"
    lines = [",".join(REPORT_COLUMNS)]
    for row in result.rows:
        values = row.report.to_row()
        lines.append(",".join(str(values[c]) for c in REPORT_COLUMNS))
    csv_path.write_text("\n".join(lines) + "\n")

    txt_path = output_dir / "report.txt"
    txt_path.write_text(_format_text_report(result, per_image))
    return csv_path, txt_path


def _format_row(name: str, r: MetricReport, width: int) -> str:
    return (
        f"{name:<{width}} {r.accuracy:.4f} {r.loss:.4f} {r.precision:.4f} "
        f"{r.recall:.4f} {r.iou:.4f} {r.dice:.4f}"
    )


def _format_text_report(
    result: CampaignResult, per_image: dict[str, dict[str, float]] | None = None
) -> str:
    names = [row.name for row in result.rows]
    reference = REPORTED_FOCAL_RESULTS + REPORTED_AUGMENTATION_RESULTS
    width = max(len(n) for n in names + [r.experiment for r in reference] + ["experiment"])
    header = f"{'experiment':<{width}} accuracy loss precision recall iou dice"

    out = ["Campaign results (this run)", "=" * len(header), header]
    out += [_format_row(row.name, row.report, width) for row in result.rows]
    if result.failures:
        out.append("")
        out += [f"FAILED: {f['name']}: {f['error']}" for f in result.failures]
    if per_image:
        out += ["", "Per-image means (alternative averaging; not comparable to the "
                "micro-averaged rows above):"]
        for name, values in per_image.items():
            cells = " ".join(f"{k}={v:.4f}" for k, v in values.items())
            out.append(f"{name:<{width}} {cells}")
    out += [
        "",
        "Reference results, as reported (full corpus, 200 epochs; not recomputed)",
        "-" * len(header),
        "Loss parameter sweep:",
    ]
    out += [_format_row(r.experiment, r, width) for r in REPORTED_FOCAL_RESULTS]
    out.append("Augmentation comparison (alpha=0.25, gamma=2.0):")
    out += [_format_row(r.experiment, r, width) for r in REPORTED_AUGMENTATION_RESULTS]
    return "\n".join(out) + "\n"


def load_report_csv(path: str | Path) -> list[MetricReport]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split(",") != list(REPORT_COLUMNS):
        raise ConfigurationError(f"{path}: not a report CSV")
    reports = []
    for line in lines[1:]:
        if not line.strip():
            continue
        values = line.split(",")
        reports.append(MetricReport.from_row(dict(zip(REPORT_COLUMNS, values))))
    return reports


def save_campaign_result(result: CampaignResult, path: str | Path) -> Path:
    payload = {
        "split_seed": result.split_seed,
        "rows": [
            {
                "name": row.name,
                "report": row.report.to_row(),
                "history": str(row.history_path),
                "checkpoint": str(row.checkpoint_path),
            }
            for row in result.rows
        ],
        "failures": result.failures,
    }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def load_campaign_result(path: str | Path) -> CampaignResult:
    payload = json.loads(Path(path).read_text())
    result = CampaignResult(split_seed=payload["split_seed"], failures=payload["failures"])
    for row in payload["rows"]:
        result.rows.append(
            ExperimentOutcome(
                name=row["name"],
                report=MetricReport.from_row(row["report"]),
                history_path=Path(row["history"]),
                checkpoint_path=Path(row["checkpoint"]),
            )
        )
    return result


# --- plots and overlays -------------------------------------------------------


def build_curve_figures(histories: dict[str, TrainingHistory]):
    """One loss figure and one accuracy figure, train + validation per run."""
    figures = []
    for metric, label in (("loss", "Loss"), ("acc", "Accuracy")):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name, history in histories.items():
            epochs = history.series("epoch")
            prefix = f"{name} " if len(histories) > 1 else ""
            ax.plot(epochs, history.series(f"train_{metric}"), label=f"{prefix}train")
            ax.plot(epochs, history.series(f"val_{metric}"), label=f"{prefix}validation")
        ax.set_xlabel("Epoch")
        ax.set_ylabel(label)
        ax.set_title(f"Training {label.lower()}")
        ax.legend()
        fig.tight_layout()
        figures.append(fig)
    return figures[0], figures[1]


def plot_curves(
    history_csvs: list[str | Path],
    output_dir: str | Path,
    names: list[str] | None = None,
) -> tuple[Path, Path]:
    """Render loss and accuracy curves from history CSVs to PNG files."""
    paths = [Path(p) for p in history_csvs]
    if names is None:
        names = [p.parent.name if p.parent.name not in (".", "") else p.stem for p in paths]
    histories = {name: TrainingHistory.load_csv(p) for name, p in zip(names, paths)}
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    fig_loss, fig_acc = build_curve_figures(histories)
    loss_path, acc_path = output_dir / "curves_loss.png", output_dir / "curves_acc.png"
    fig_loss.savefig(loss_path, dpi=120)
    fig_acc.savefig(acc_path, dpi=120)
    plt.close(fig_loss)
    plt.close(fig_acc)
    return loss_path, acc_path


def render_overlay(
    image: np.ndarray, gt: np.ndarray, pred: np.ndarray, tint: float = OVERLAY_TINT
) -> np.ndarray:
    """Blend prediction (green) and ground truth (blue) over the grayscale base.

    Tinted pixels blend as ``(1 - tint) * gray + tint * color`` with color
    channels (0, pred, gt), so agreement shows as cyan. Pixels where both
    masks are 0 keep the grayscale value exactly.
    """
    if not image.shape == gt.shape == pred.shape:
        raise ValueError(
            f"shape mismatch: image {image.shape}, gt {gt.shape}, pred {pred.shape}"
        )
    base = np.repeat(image[..., np.newaxis].astype(np.float64), 3, axis=2)
    color = np.zeros_like(base)
    color[..., 1] = pred
    color[..., 2] = gt
    tinted = (pred.astype(bool)) | (gt.astype(bool))
    out = base.copy()
    out[tinted] = (1.0 - tint) * base[tinted] + tint * color[tinted]
    return out


def write_overlay(overlay: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(overlay * 255.0).astype(np.uint8), mode="RGB").save(path)
    return path


# --- presets and config files --------------------------------------------------


def _full_scale_training(seed: int) -> TrainingConfig:
    return TrainingConfig(batch_size=8, learning_rate=1e-4, epochs=200, seed=seed)


def phase1_specs(dataset_root: str, output_root: str | Path, seed: int) -> list[ExperimentSpec]:
    """Focal parameter sweep on the unaugmented dataset."""
    output_root = Path(output_root)
    specs = []
    for alpha, gamma in ((0.25, 2.0), (2.0, 0.75)):
        name = f"focal_a{alpha}_g{gamma}"
        specs.append(
            ExperimentSpec(
                name=name,
                dataset_root=dataset_root,
                focal=FocalParams(alpha=alpha, gamma=gamma),
                augmentation=AugmentationSpec(kind=AugmentationKind.NONE, seed=seed),
                model=UNetConfig(),
                training=_full_scale_training(seed),
                output_dir=output_root / name,
            )
        )
    return specs


def phase2_specs(dataset_root: str, output_root: str | Path, seed: int) -> list[ExperimentSpec]:
    """Augmentation comparison at the fixed alpha=0.25, gamma=2.0 setting."""
    output_root = Path(output_root)
    specs = []
    for kind in AugmentationKind:
        specs.append(
            ExperimentSpec(
                name=kind.value,
                dataset_root=dataset_root,
                focal=FocalParams(alpha=0.25, gamma=2.0),
                augmentation=AugmentationSpec(kind=kind, fraction=0.5, seed=seed),
                model=UNetConfig(),
                training=_full_scale_training(seed),
                output_dir=output_root / kind.value,
            )
        )
    return specs


def desk_specs(output_root: str | Path, seed: int) -> list[ExperimentSpec]:
    """Small synthetic end-to-end run that finishes in minutes on a CPU."""
    output_root = Path(output_root)
    return [
        ExperimentSpec(
            name="desk",
            dataset_root=f"synthetic({DESK_SAMPLES}, {DESK_SIZE})",
            focal=FocalParams(alpha=0.25, gamma=2.0),
            augmentation=AugmentationSpec(kind=AugmentationKind.NONE, seed=seed),
            model=UNetConfig(input_size=DESK_SIZE, base_filters=DESK_BASE_FILTERS),
            training=TrainingConfig(
                batch_size=8,
                learning_rate=DESK_LEARNING_RATE,
                epochs=DESK_EPOCHS,
                seed=seed,
            ),
            output_dir=output_root / "desk",
        )
    ]


PRESETS = {"phase1": phase1_specs, "phase2": phase2_specs, "desk": desk_specs}


def build_preset(
    preset: str, output_root: str | Path, seed: int, dataset_root: str | None = None
) -> list[ExperimentSpec]:
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if preset == "desk":
        return desk_specs(output_root, seed)
    if dataset_root is None:
        raise ConfigurationError(f"preset {preset!r} needs --dataset-root")
    return PRESETS[preset](dataset_root, output_root, seed)


def _merged(defaults: dict, override: dict, section: str) -> dict:
    merged = dict(defaults.get(section, {}) or {})
    merged.update(override.get(section, {}) or {})
    return merged


def _as_tuple_ranges(aug: dict) -> dict:
    for key in ("rotation_range_deg", "scale_range"):
        if key in aug and isinstance(aug[key], list):
            aug[key] = tuple(aug[key])
    return aug


def load_campaign_config(path: str | Path) -> tuple[list[ExperimentSpec], Path]:
    """Parse a campaign YAML file into experiment specs plus the output root.

    Top-level keys: seed, dataset_root, output_dir, defaults (focal /
    augmentation / model / training sections), experiments (list with name
    plus per-section overrides).
    """
    path = Path(path)
    data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict) or "experiments" not in data:
        raise ConfigurationError(f"{path}: campaign config needs an 'experiments' list")
    seed = int(data.get("seed", 0))
    root = data.get("dataset_root")
    output_root = Path(data.get("output_dir", "runs"))
    defaults = data.get("defaults", {}) or {}

    specs = []
    for entry in data["experiments"]:
        if "name" not in entry:
            raise ConfigurationError(f"{path}: every experiment needs a name")
        name = str(entry["name"])
        try:
            focal = FocalParams(**_merged(defaults, entry, "focal"))
            aug_kwargs = _as_tuple_ranges(_merged(defaults, entry, "augmentation"))
            aug_kwargs.setdefault("seed", seed)
            augmentation = AugmentationSpec(**aug_kwargs)
            model = UNetConfig(**_merged(defaults, entry, "model"))
            train_kwargs = _merged(defaults, entry, "training")
            train_kwargs.setdefault("seed", seed)
            training = TrainingConfig(**train_kwargs)
        except (TypeError, ConfigurationError) as exc:
            raise ConfigurationError(f"{path}: experiment {name!r}: {exc}") from exc
        dataset_root = entry.get("dataset_root", root)
        if dataset_root is None:
            raise ConfigurationError(f"{path}: experiment {name!r} has no dataset_root")
        specs.append(
            ExperimentSpec(
                name=name,
                dataset_root=str(dataset_root),
                focal=focal,
                augmentation=augmentation,
                model=model,
                training=training,
                output_dir=output_root / name,
            )
        )
    return specs, output_root
