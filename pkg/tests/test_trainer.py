import numpy as np
import pytest
import torch

from tumorseg.augment import AugmentationKind, AugmentationSpec
from tumorseg.dataset import Sample, generate_synthetic_dataset, split_dataset
from tumorseg.errors import ConfigurationError, TrainingDivergedError, ValidationError
from tumorseg.losses import FocalParams, focal_loss, focal_loss_gradient
from tumorseg.metrics import REPORT_COLUMNS, confusion_counts, compute_metrics
from tumorseg.trainer import (
    TrainingConfig,
    TrainingHistory,
    _audit_split_isolation,
    _focal_loss_torch,
    evaluate,
    train,
)
from tumorseg.unet import UNetConfig, build_unet

TINY_MODEL = UNetConfig(input_size=32, base_filters=4)
NO_AUG = AugmentationSpec(kind=AugmentationKind.NONE)


def tiny_splits(n=14, seed=0):
    return split_dataset(generate_synthetic_dataset(n, 32, seed=seed), seed=seed)


def quick_config(epochs=2, **kw):
    kw.setdefault("learning_rate", 1e-3)
    return TrainingConfig(batch_size=4, epochs=epochs, seed=1, **kw)


class _EchoModel(torch.nn.Module):
    """Returns its input: with image == mask samples this is a perfect model."""

    def __init__(self, config):
        super().__init__()
        self.config = config

    def forward(self, x):
        return x


class _ConstantModel(torch.nn.Module):
    def __init__(self, config, value):
        super().__init__()
        self.config = config
        self.value = value

    def forward(self, x):
        return torch.full_like(x, self.value)


def test_torch_loss_matches_numpy_reference():
    rng = np.random.default_rng(0)
    for params in (FocalParams(0.25, 2.0), FocalParams(2.0, 0.75),
                   FocalParams(0.25, 2.0, class_balanced=True),
                   FocalParams(0.3, 1.5, class_balanced=True)):
        pred = rng.uniform(0.02, 0.98, size=(4, 1, 8, 8))
        target = (rng.random((4, 1, 8, 8)) < 0.3).astype(np.float64)
        got = _focal_loss_torch(torch.from_numpy(pred), torch.from_numpy(target), params)
        assert got.item() == pytest.approx(focal_loss(pred, target, params), abs=1e-12)


def test_torch_loss_autograd_matches_analytic_gradient():
    rng = np.random.default_rng(1)
    pred = rng.uniform(0.05, 0.95, size=(3, 5))
    target = (rng.random((3, 5)) < 0.4).astype(np.float64)
    params = FocalParams(0.25, 2.0)
    t = torch.from_numpy(pred).requires_grad_(True)
    _focal_loss_torch(t, torch.from_numpy(target), params).backward()
    np.testing.assert_allclose(
        t.grad.numpy(), focal_loss_gradient(pred, target, params), rtol=1e-9, atol=1e-15
    )


def test_history_csv_roundtrip(tmp_path):
    history = TrainingHistory()
    from tumorseg.trainer import EpochRecord

    history.records = [EpochRecord(1, 0.5, 0.9, 0.6, 0.88), EpochRecord(2, 0.4, 0.92, 0.5, 0.9)]
    path = history.save_csv(tmp_path / "history.csv")
    again = TrainingHistory.load_csv(path)
    assert again.records == history.records


def test_history_csv_parse_errors_name_line(tmp_path):
    path = tmp_path / "history.csv"
    path.write_text("epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5,0.9,0.6,0.88\n2,oops,1,1,1\n")
    with pytest.raises(ValidationError, match=":3"):
        TrainingHistory.load_csv(path)
    path.write_text("wrong,header\n")
    with pytest.raises(ValidationError, match=":1"):
        TrainingHistory.load_csv(path)


def test_training_config_validation():
    with pytest.raises(ConfigurationError):
        TrainingConfig(batch_size=0)
    with pytest.raises(ConfigurationError):
        TrainingConfig(learning_rate=0.0)
    with pytest.raises(ConfigurationError):
        TrainingConfig(epochs=0)
    with pytest.raises(ConfigurationError):
        TrainingConfig(optimizer="sgd")
    with pytest.raises(ConfigurationError):
        TrainingConfig(eval_threshold=1.0)


def test_history_length_equals_epochs():
    model = build_unet(TINY_MODEL, seed=0)
    _, history = train(model, tiny_splits(), FocalParams(0.25, 2.0), NO_AUG, quick_config(epochs=3))
    assert len(history) == 3
    assert [r.epoch for r in history.records] == [1, 2, 3]
    for r in history.records:
        assert np.isfinite([r.train_loss, r.train_acc, r.val_loss, r.val_acc]).all()
        assert r.train_loss >= 0.0 and 0.0 <= r.train_acc <= 1.0


def test_training_loss_decreases_on_learnable_corpus():
    model = build_unet(TINY_MODEL, seed=0)
    _, history = train(
        model, tiny_splits(n=20, seed=3), FocalParams(0.25, 2.0), NO_AUG, quick_config(epochs=15)
    )
    assert history.records[-1].train_loss < history.records[0].train_loss


def test_training_is_seed_reproducible():
    results = []
    for _ in range(2):
        model = build_unet(TINY_MODEL, seed=5)
        _, history = train(
            model, tiny_splits(seed=2), FocalParams(0.25, 2.0), NO_AUG, quick_config(epochs=2)
        )
        results.append(history)
    first, second = results
    assert abs(first.records[0].train_loss - second.records[0].train_loss) < 1e-6
    assert abs(first.records[-1].val_loss - second.records[-1].val_loss) < 1e-6


def test_training_writes_checkpoints(tmp_path):
    model = build_unet(TINY_MODEL, seed=0)
    cfg = quick_config(epochs=2, checkpoint_dir=tmp_path)
    train(model, tiny_splits(), FocalParams(0.25, 2.0), NO_AUG, cfg)
    assert (tmp_path / "last.ckpt").exists()
    assert (tmp_path / "best_val.ckpt").exists()


def test_training_with_augmentation_expands_train_only():
    splits = tiny_splits(n=20, seed=4)
    model = build_unet(TINY_MODEL, seed=0)
    aug = AugmentationSpec(kind=AugmentationKind.HORIZONTAL_FLIP, fraction=0.5, seed=1)
    _, history = train(model, splits, FocalParams(0.25, 2.0), aug, quick_config(epochs=1))
    assert len(history) == 1  # augmented run completes with expanded train set


def test_training_divergence_aborts_with_location(monkeypatch):
    model = build_unet(TINY_MODEL, seed=0)

    def poisoned(pred, target, params):
        return torch.tensor(float("nan"), requires_grad=True)

    monkeypatch.setattr("tumorseg.trainer._focal_loss_torch", poisoned)
    with pytest.raises(TrainingDivergedError, match="epoch 1, batch 0"):
        train(model, tiny_splits(), FocalParams(0.25, 2.0), NO_AUG, quick_config(epochs=1))


def test_audit_rejects_heldout_contamination():
    splits = tiny_splits()
    poisoned = list(splits.train) + [splits.val[0]]
    with pytest.raises(ValidationError, match="held-out"):
        _audit_split_isolation(poisoned, splits)
    # augmented derivative of a held-out id is also rejected
    v = splits.test[0]
    poisoned = list(splits.train) + [Sample(v.id + "_hflip", v.image, v.mask)]
    with pytest.raises(ValidationError, match="held-out"):
        _audit_split_isolation(poisoned, splits)


def test_audit_rejects_unknown_provenance():
    splits = tiny_splits()
    stranger = Sample("who_is_this", splits.train[0].image, splits.train[0].mask)
    with pytest.raises(ValidationError, match="derive"):
        _audit_split_isolation(list(splits.train) + [stranger], splits)


def test_audit_accepts_augmented_train_copies():
    splits = tiny_splits()
    s = splits.train[0]
    ok = list(splits.train) + [Sample(s.id + "_rot+12.50", s.image, s.mask)]
    _audit_split_isolation(ok, splits)


def test_empty_split_rejected():
    splits = tiny_splits()
    empty = type(splits)(train=[], val=splits.val, test=splits.test, seed=0)
    model = build_unet(TINY_MODEL, seed=0)
    with pytest.raises(ConfigurationError):
        train(model, empty, FocalParams(0.25, 2.0), NO_AUG, quick_config())


def test_evaluate_perfect_model_stub():
    samples = []
    rng = np.random.default_rng(7)
    for i in range(4):
        mask = (rng.random((32, 32)) < 0.2).astype(np.uint8)
        samples.append(Sample(f"t{i}", mask.astype(np.float32), mask))
    report = evaluate(_EchoModel(TINY_MODEL), samples, FocalParams(0.25, 2.0))
    assert report.precision == 1.0
    assert report.recall == 1.0
    assert report.iou == 1.0
    assert report.dice == 1.0
    assert report.accuracy == 1.0
    assert 0.0 <= report.loss < 1e-6


def test_evaluate_constant_half_stub_matches_counting_oracle():
    samples = generate_synthetic_dataset(3, 32, seed=9)
    report = evaluate(_ConstantModel(TINY_MODEL, 0.5), samples, FocalParams(0.25, 2.0), 0.5)
    # 0.5 >= threshold 0.5: predicted mask is all ones
    total = None
    for s in samples:
        c = confusion_counts(np.ones_like(s.mask), s.mask)
        total = c if total is None else total + c
    oracle = compute_metrics(total)
    assert report.precision == pytest.approx(oracle.precision)
    assert report.recall == oracle.recall
    assert report.dice == pytest.approx(oracle.dice)
    assert report.accuracy == pytest.approx(oracle.accuracy)


def test_evaluate_report_serializes_in_table_order():
    samples = generate_synthetic_dataset(2, 32, seed=10)
    report = evaluate(_ConstantModel(TINY_MODEL, 0.9), samples, FocalParams(0.25, 2.0))
    report.experiment = "stub"
    assert tuple(report.to_row().keys()) == REPORT_COLUMNS
    assert np.isfinite(report.loss)


def test_evaluate_rejects_empty_test_set():
    with pytest.raises(ValueError):
        evaluate(_ConstantModel(TINY_MODEL, 0.5), [], FocalParams(0.25, 2.0))
