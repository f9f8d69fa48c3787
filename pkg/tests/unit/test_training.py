import numpy as np
import pytest
import torch

from model import (
    NonFiniteLossError,
    TrainConfig,
    build_network,
    evaluate,
    fine_tune,
    forward,
    gradient_check,
    l2_grid_search,
    lr_at_epoch,
    split_dataset,
    train,
)
from model.data import DataSplit
from model.training import TorchNetwork


def _offset_classes(n_per_class: int, seed: int = 0):
    """Two linearly separable classes: negative vs positive DC offset."""
    rng = np.random.default_rng(seed)
    neg = -0.5 + 0.05 * rng.normal(size=(n_per_class, 66))
    pos = 0.5 + 0.05 * rng.normal(size=(n_per_class, 66))
    x = np.concatenate([neg, pos])
    y = np.repeat([0, 1], n_per_class)
    return x, y


@pytest.fixture
def quick_cfg():
    return TrainConfig(
        initial_lr=0.05,
        lr_factor=1.0,
        max_epochs=50,
        batch_size=32,
        l2=0.0,
        early_stop_patience=50,
        dropout_rate=0.0,
        rng_seed=7,
    )


class TestSchedule:
    """Learning-rate schedule and recipe validation"""

    def test_step_decay(self):
        """Epoch 11 runs at 0.01·f² with a 5-epoch period"""
        cfg = TrainConfig(lr_factor=0.5)
        assert lr_at_epoch(cfg, 1) == pytest.approx(0.01)
        assert lr_at_epoch(cfg, 5) == pytest.approx(0.01)
        assert lr_at_epoch(cfg, 6) == pytest.approx(0.005)
        assert lr_at_epoch(cfg, 11) == pytest.approx(0.01 * 0.5**2)

    def test_defaults(self):
        """Default recipe: SGD momentum 0.9, L2 1.8, patience 6"""
        cfg = TrainConfig()
        assert cfg.momentum == 0.9
        assert cfg.l2 == 1.8
        assert cfg.early_stop_patience == 6
        assert cfg.initial_lr == 0.01

    def test_growing_lr_rejected(self):
        """A schedule factor above one is not a decay"""
        with pytest.raises(ValueError):
            TrainConfig(lr_factor=2.0)


class TestTraining:
    """Mini-batch SGD on toy data"""

    def test_separable_toy_reaches_full_accuracy(self, quick_cfg):
        """Linearly separable data is fitted within 50 epochs"""
        x, y = _offset_classes(100)
        split = DataSplit(x, y, x, y, x[:0], y[:0])
        model = build_network(filters=(8, 8, 8), class_count=2, seed=1)
        model.layers = model.layers[:-1]  # linear read-out
        trained, history = train(model, split, quick_cfg)
        assert evaluate(trained, x, y) == 1.0
        assert len(history.records) <= 50

    def test_deterministic_history(self, quick_cfg, tmp_path):
        """Same seed → byte-identical history CSV"""
        x, y = _offset_classes(40)
        split = split_dataset(x, y, seed=2)
        model = build_network(filters=(2, 2, 2), class_count=2, seed=3)
        cfg = quick_cfg.model_copy(update={"max_epochs": 4})
        _, first = train(model, split, cfg)
        _, second = train(model, split, cfg)
        first.write_csv(str(tmp_path / "a.csv"))
        second.write_csv(str(tmp_path / "b.csv"))
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
        header = (tmp_path / "a.csv").read_text().splitlines()[0]
        assert header == "epoch,lr,train_loss,train_acc,val_loss,val_acc"

    def test_best_weights_restored(self, quick_cfg):
        """Returned weights are the lowest-validation-loss epoch"""
        x, y = _offset_classes(40, seed=4)
        split = split_dataset(x, y, seed=4)
        model = build_network(filters=(2, 2, 2), class_count=2, seed=5)
        trained, history = train(model, split, quick_cfg.model_copy(update={"max_epochs": 8}))
        best = history.records[history.best_epoch - 1]
        assert best.val_loss == min(r.val_loss for r in history.records)
        assert evaluate(trained, split.x_val, split.y_val) == pytest.approx(best.val_acc)

    def test_input_model_untouched(self, quick_cfg):
        """Training works on a copy"""
        x, y = _offset_classes(20)
        model = build_network(filters=(2, 2, 2), class_count=2, seed=5)
        before = model.layer("conv1").weight.copy()
        train(model, split_dataset(x, y, seed=1), quick_cfg.model_copy(update={"max_epochs": 2}))
        np.testing.assert_array_equal(model.layer("conv1").weight, before)

    def test_non_finite_loss(self, quick_cfg):
        """A diverging run stops with the offending epoch and batch"""
        x, y = _offset_classes(20)
        x[3, 10] = np.nan
        split = DataSplit(x, y, x, y, x[:0], y[:0])
        model = build_network(filters=(2, 2, 2), class_count=2, seed=5)
        with pytest.raises(NonFiniteLossError) as ex:
            train(model, split, quick_cfg.model_copy(update={"batch_size": 64}))
        assert ex.value.epoch == 1
        assert ex.value.batch == 0

    def test_fine_tune_zero_epochs(self, quick_cfg):
        """Zero fine-tuning epochs returns an unchanged copy"""
        x, y = _offset_classes(10)
        model = build_network(filters=(2, 2, 2), class_count=2, seed=5)
        tuned = fine_tune(model, split_dataset(x, y), quick_cfg, epochs=0)
        assert tuned is not model
        np.testing.assert_array_equal(forward(tuned, x), forward(model, x))

    def test_l2_grid_search(self, quick_cfg):
        """Every grid value is scored; ties go to the smaller penalty"""
        x, y = _offset_classes(20, seed=6)
        split = split_dataset(x, y, seed=6)
        model = build_network(filters=(2, 2, 2), class_count=2, seed=5)
        best, table = l2_grid_search(model, split, quick_cfg.model_copy(update={"max_epochs": 2}), grid=[0.0, 0.2])
        assert sorted(table) == [0.0, 0.2]
        assert all(0.0 <= acc <= 1.0 for acc in table.values())
        assert table[best] == max(table.values())
        if table[0.0] == table[0.2]:
            assert best == 0.0


class TestTorchMirror:
    """torch mirror of the numpy forward pass"""

    def test_scores_match(self):
        """Eval-mode torch scores equal the numpy forward pass"""
        model = build_network(filters=(3, 4, 2), seed=8)
        x = np.random.default_rng(0).normal(size=(6, 66))
        net = TorchNetwork(model)
        net.eval()
        with torch.no_grad():
            scores = net(torch.from_numpy(np.ascontiguousarray(x[:, None, :]))).numpy()
        np.testing.assert_allclose(scores, forward(model, x), atol=1e-10)

    def test_gradient_check(self):
        """Backprop agrees with central differences on a ~100-parameter probe"""
        model = build_network(filters=(3, 3, 3), input_length=18, seed=3)
        assert 90 <= model.learnables <= 110
        rng = np.random.default_rng(4)
        x = rng.normal(size=(8, 18))
        y = rng.integers(0, 3, size=8)
        assert gradient_check(model, x, y) < 1e-4
