import numpy as np
import pytest

import segtherm.training as tr
from segtherm.autodiff import Tensor
from segtherm.errors import (
    ConfigMismatch, FormatError, MissingInput, StepRejected, UnsupportedVersion,
)
from segtherm.metrics import WeightTable
from segtherm.model import Model
from segtherm.training import (
    Checkpoint, TrainConfig, init_moments, load_checkpoint, optimizer_step,
    save_checkpoint, train, weighted_rmse_loss,
)

from conftest import synthetic_dataset, toy_config


def tiny_train_config(**kw):
    base = dict(max_epochs=2, eval_every=1, batch_size=4, seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.lr, c.beta1, c.beta2, c.eps) == (1e-3, 0.9, 0.999, 1e-8)
        assert (c.weight_decay, c.batch_size, c.eval_every) == (0.01, 16, 8)

    def test_roundtrip(self):
        c = TrainConfig(lr=3e-4, max_epochs=7)
        assert TrainConfig.from_dict(c.to_dict()) == c

    def test_rejects_bad_values(self):
        with pytest.raises(ConfigMismatch):
            TrainConfig(lr=0.0)
        with pytest.raises(ConfigMismatch):
            TrainConfig(eval_every=0)


class TestOptimizer:
    def test_single_step_matches_adamw_formula(self):
        cfg = TrainConfig(lr=0.1, weight_decay=0.01)
        p = Tensor(np.array([2.0]), requires_grad=True)
        p.grad = np.array([0.5])
        params = {"w": p}
        moments = init_moments(params)
        optimizer_step(params, moments, cfg, 1)
        m_hat = 0.5                       # m1 / (1 - beta1)
        v_hat = 0.25                      # v1 / (1 - beta2)
        expect = 2.0 - 0.1 * (m_hat / (np.sqrt(v_hat) + cfg.eps) + 0.01 * 2.0)
        np.testing.assert_allclose(p.data, [expect], rtol=1e-12)

    def test_decay_is_decoupled(self):
        # zero gradient still shrinks the weight
        cfg = TrainConfig(lr=0.1, weight_decay=0.5)
        p = Tensor(np.array([2.0]), requires_grad=True)
        p.grad = np.array([0.0])
        params = {"w": p}
        optimizer_step(params, init_moments(params), cfg, 1)
        np.testing.assert_allclose(p.data, [2.0 - 0.1 * 0.5 * 2.0])

    def test_nonfinite_grad_rejected(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([np.nan])
        params = {"w": p}
        with pytest.raises(StepRejected):
            optimizer_step(params, init_moments(params), TrainConfig(), 1)

    def test_params_without_grad_skipped(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        params = {"w": p}
        optimizer_step(params, init_moments(params), TrainConfig(), 1)
        np.testing.assert_allclose(p.data, [1.0])


class TestLoss:
    def test_matches_metric_with_weights(self, rng):
        from segtherm.metrics import weighted_rmse

        table = WeightTable([50.0], [0.5, 2.0])
        preds = [Tensor(np.array([[v]]), requires_grad=True)
                 for v in rng.uniform(0, 100, 6)]
        truths = rng.uniform(0, 100, 6)
        weights = [table.weight_for(t) for t in truths]
        loss = weighted_rmse_loss(preds, truths, weights)
        ref = weighted_rmse(np.array([p.data.item() for p in preds]), truths, table)
        np.testing.assert_allclose(loss.data.item(), ref, rtol=1e-12)

    def test_gradient_flows(self):
        p = Tensor(np.array([[3.0]]), requires_grad=True)
        loss = weighted_rmse_loss([p], [1.0], [1.0])
        loss.backward()
        np.testing.assert_allclose(p.grad, [[1.0]])  # d|p-y|/dp at p>y


class TestCheckpoint:
    def make_ckpt(self, seed=3):
        model = Model.create(toy_config(), seed=seed)
        model.target_mean, model.target_std = 55.0, 20.0
        moments = {n: (np.random.default_rng(1).standard_normal(p.data.shape).astype(np.float32),
                       np.abs(np.random.default_rng(2).standard_normal(p.data.shape)).astype(np.float32))
                   for n, p in model.params.items()}
        return Checkpoint(model, moments, step=42, epoch=7,
                          best_metrics={"rmse": 1.25})

    def test_roundtrip_bit_exact(self, tmp_path):
        ckpt = self.make_ckpt()
        path = tmp_path / "m.segc"
        save_checkpoint(ckpt, path)
        back = load_checkpoint(path)
        assert back.step == 42 and back.epoch == 7
        assert back.best_metrics == {"rmse": 1.25}
        assert back.model.target_mean == 55.0 and back.model.target_std == 20.0
        for n, p in ckpt.model.params.items():
            np.testing.assert_array_equal(back.model.params[n].data, p.data)
        for n, (mt, vt) in ckpt.moments.items():
            np.testing.assert_array_equal(back.moments[n][0], mt)
            np.testing.assert_array_equal(back.moments[n][1], vt)

    def test_save_is_deterministic(self, tmp_path):
        ckpt = self.make_ckpt()
        p1, p2 = tmp_path / "a.segc", tmp_path / "b.segc"
        save_checkpoint(ckpt, p1)
        save_checkpoint(ckpt, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.segc"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError):
            load_checkpoint(p)

    def test_truncated_blob(self, tmp_path):
        ckpt = self.make_ckpt()
        p = tmp_path / "m.segc"
        save_checkpoint(ckpt, p)
        p.write_bytes(p.read_bytes()[:-100])
        with pytest.raises(FormatError):
            load_checkpoint(p)

    def test_unsupported_version(self, tmp_path):
        ckpt = self.make_ckpt()
        p = tmp_path / "m.segc"
        save_checkpoint(ckpt, p)
        raw = bytearray(p.read_bytes())
        raw[4] = 99
        p.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersion):
            load_checkpoint(p)

    def test_config_mismatch(self, tmp_path):
        ckpt = self.make_ckpt()
        p = tmp_path / "m.segc"
        save_checkpoint(ckpt, p)
        other = toy_config(model_dim=16)
        with pytest.raises(ConfigMismatch):
            load_checkpoint(p, expect_config=other)


class TestTrainLoop:
    def test_deterministic(self, tmp_path):
        records, embs = synthetic_dataset(12, seed=10)
        tr_recs, va_recs = records[:9], records[9:]
        cfg = tiny_train_config()
        c1 = train(tr_recs, va_recs, embs, Model.create(toy_config(), seed=0), cfg)
        c2 = train(tr_recs, va_recs, embs, Model.create(toy_config(), seed=0), cfg)
        for n, p in c1.model.params.items():
            np.testing.assert_array_equal(p.data, c2.model.params[n].data)
        assert c1.epoch == c2.epoch and c1.step == c2.step

    def test_loss_decreases(self):
        records, embs = synthetic_dataset(12, seed=11)
        log = []
        train(records[:9], records[9:], embs, Model.create(toy_config(), seed=0),
              tiny_train_config(max_epochs=30), log_sink=log.append)
        first = np.mean([e["train_loss"] for e in log[:3]])
        last = np.mean([e["train_loss"] for e in log[-3:]])
        assert last < first

    def test_target_stats_fit_on_train_labels(self):
        records, embs = synthetic_dataset(12, seed=12)
        model = Model.create(toy_config(), seed=0)
        train(records[:9], records[9:], embs, model, tiny_train_config(max_epochs=1))
        labels = np.array([r.temperature for r in records[:9]])
        assert model.target_mean == pytest.approx(labels.mean())
        assert model.target_std == pytest.approx(labels.std())

    def test_missing_embedding_raises(self):
        records, embs = synthetic_dataset(12, seed=13)
        del embs[records[0].accession]
        with pytest.raises(MissingInput):
            train(records[:9], records[9:], embs, Model.create(toy_config(), seed=0),
                  tiny_train_config())

    def test_best_checkpoint_has_lowest_val_rmse(self):
        records, embs = synthetic_dataset(12, seed=14)
        log = []
        ckpt = train(records[:9], records[9:], embs, Model.create(toy_config(), seed=0),
                     tiny_train_config(max_epochs=10), log_sink=log.append)
        evaluated = [e for e in log if "val_rmse" in e]
        best_rmse = min(e["val_rmse"] for e in evaluated)
        assert ckpt.best_metrics["rmse"] == pytest.approx(best_rmse)
        # earliest epoch wins ties
        first_best = next(e["epoch"] for e in evaluated
                          if e["val_rmse"] == pytest.approx(best_rmse))
        assert ckpt.epoch == first_best

    def test_eval_schedule(self):
        records, embs = synthetic_dataset(12, seed=15)
        log = []
        train(records[:9], records[9:], embs, Model.create(toy_config(), seed=0),
              tiny_train_config(max_epochs=9, eval_every=4), log_sink=log.append)
        evaluated = sorted(e["epoch"] for e in log if "val_rmse" in e)
        assert evaluated == [4, 8, 9]  # multiples of eval_every plus the final epoch

    def test_empty_sets_rejected(self):
        records, embs = synthetic_dataset(12, seed=16)
        with pytest.raises(ConfigMismatch):
            train([], records[:3], embs, Model.create(toy_config(), seed=0),
                  tiny_train_config())
