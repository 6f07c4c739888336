import json
import math

import numpy as np
import pytest
import torch

from distilmvc import trainer
from distilmvc.errors import NonFiniteLossError
from distilmvc.network import init_params, student_probs
from distilmvc.pseudolabel import ClusterState
from distilmvc.trainer import combine_views, finetune, infer_clusters, pretrain


def _state(module):
    return {k: v.clone() for k, v in module.state_dict().items()}


def _equal(a, b):
    return a.keys() == b.keys() and all(torch.equal(a[k], b[k]) for k in a)


class TestCombineViews:
    def test_mean_then_argmax(self):
        labels, probs = combine_views([[[0.6, 0.4]], [[0.2, 0.8]]])
        np.testing.assert_allclose(probs, [[0.4, 0.6]])
        assert labels.tolist() == [1]

    def test_identical_onehots(self):
        labels, _ = combine_views([[[0, 0, 1]], [[0, 0, 1]]])
        assert labels.tolist() == [2]

    def test_tie(self):
        labels, _ = combine_views([[[0.5, 0.5]], [[0.5, 0.5]]])
        assert labels.tolist() == [0]


class TestPretrain:
    def test_zero_epochs_is_init(self, small_dataset, tiny_config):
        cfg = tiny_config.replace(pretrain_epochs=0)
        params, log = pretrain(small_dataset, cfg)
        assert _equal(params.state_dict(), init_params(cfg, small_dataset.view_dims, small_dataset.k).state_dict())
        assert log.records == []

    def test_deterministic(self, small_dataset, tiny_config):
        a, la = pretrain(small_dataset, tiny_config)
        b, lb = pretrain(small_dataset, tiny_config)
        assert la.records[-1].loss_breakdown.total == lb.records[-1].loss_breakdown.total
        assert _equal(a.state_dict(), b.state_dict())

    def test_log_consistency(self, small_dataset, tiny_config, tmp_path):
        path = tmp_path / "log.jsonl"
        _, log = pretrain(small_dataset, tiny_config, log_path=path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert [l["epoch"] for l in lines] == [1, 2, 3]
        for rec in log.records:
            b = rec.loss_breakdown
            assert abs(b.total - (b.rec + b.stu + b.tea + b.iic + b.self_distill)) <= 1e-9
            assert rec.metrics is not None and 0 <= rec.metrics.acc <= 1

    def test_loss_decreases(self, small_dataset, tiny_config):
        _, log = pretrain(small_dataset, tiny_config.replace(pretrain_epochs=25, batch_size=20))
        totals = np.array([r.loss_breakdown.total for r in log.records])
        ma = np.convolve(totals, np.ones(5) / 5, mode="valid")
        assert ma[-1] < ma[0]

    def test_nan_abort_names_component(self, small_dataset, tiny_config, monkeypatch):
        monkeypatch.setattr(trainer.losses, "teacher_contrastive_loss", lambda *a, **k: torch.tensor(math.nan, dtype=torch.float64))
        with pytest.raises(NonFiniteLossError, match="tea"):
            pretrain(small_dataset, tiny_config)


class TestFinetune:
    @pytest.fixture
    def pretrained(self, small_dataset, tiny_config):
        return pretrain(small_dataset, tiny_config, track_metrics=False)[0]

    def test_mu_one_freezes_teacher(self, small_dataset, tiny_config, pretrained):
        before = _state(pretrained.heads.teacher)
        tuned, _ = finetune(small_dataset, pretrained, tiny_config.replace(momentum_mu=1.0, finetune_epochs=3))
        assert _equal(before, tuned.heads.teacher.state_dict())

    def test_encoders_frozen_by_default(self, small_dataset, tiny_config, pretrained):
        before = _state(pretrained.autoencoders)
        tuned, _ = finetune(small_dataset, pretrained, tiny_config)
        assert _equal(before, tuned.autoencoders.state_dict())
        assert not _equal(_state(pretrained.heads.student), tuned.heads.student.state_dict())

    def test_encoders_train_when_enabled(self, small_dataset, tiny_config, pretrained):
        before = _state(pretrained.autoencoders)
        tuned, _ = finetune(small_dataset, pretrained, tiny_config.replace(finetune_encoders=True))
        assert not _equal(before, tuned.autoencoders.state_dict())

    def test_input_params_untouched(self, small_dataset, tiny_config, pretrained):
        before = _state(pretrained)
        finetune(small_dataset, pretrained, tiny_config)
        assert _equal(before, pretrained.state_dict())

    def test_ema_closed_form_two_steps(self, small_dataset, tiny_config, pretrained):
        mu = 0.75
        cfg = tiny_config.replace(momentum_mu=mu, finetune_epochs=1, batch_size=30)
        theta0 = [p.detach().clone() for p in pretrained.heads.teacher.parameters()]
        trajectory = []
        tuned, _ = finetune(
            small_dataset, pretrained, cfg,
            on_step=lambda p: trajectory.append([q.detach().clone() for q in p.heads.student.parameters()]),
        )
        assert len(trajectory) == 2
        xi1, xi2 = trajectory
        for t0, a, b, got in zip(theta0, xi1, xi2, tuned.heads.teacher.parameters()):
            theta1 = mu * t0 + (1 - mu) * a
            assert torch.equal(got, mu * theta1 + (1 - mu) * b)
            expanded = mu * mu * t0 + mu * (1 - mu) * a + (1 - mu) * b
            torch.testing.assert_close(got, expanded, rtol=0, atol=1e-15)

    def test_matched_targets_give_zero_loss_and_gradient(self, small_dataset, tiny_config, pretrained, monkeypatch):
        # Adam normalizes rounding-level gradients into full steps, so check the gradient itself
        zs = trainer.latents(small_dataset, pretrained)
        with torch.no_grad():
            dark = [student_probs(pretrained.heads, z).numpy() for z in zs]
        monkeypatch.setattr(trainer, "refresh_targets", lambda *a: ClusterState(np.zeros((3, 1)), dark_targets=dark))
        cfg = tiny_config.replace(tau_d=0.0, momentum_mu=1.0, finetune_epochs=1, batch_size=60)
        _, log = finetune(small_dataset, pretrained, cfg, track_metrics=False)
        assert log.records[0].loss_breakdown.self_distill == pytest.approx(0.0, abs=1e-12)

        pretrained.zero_grad(set_to_none=True)
        ys = [student_probs(pretrained.heads, z) for z in zs]
        loss = trainer.losses.self_distillation_loss([torch.from_numpy(d) for d in dark], ys, 0.0)
        loss.backward()
        for p in pretrained.heads.student_parameters():
            assert p.grad.abs().max() < 1e-12

    def test_deterministic_labels(self, small_dataset, tiny_config, pretrained):
        a, _ = finetune(small_dataset, pretrained, tiny_config)
        b, _ = finetune(small_dataset, pretrained, tiny_config)
        la, pa = infer_clusters(small_dataset, a)
        lb, pb = infer_clusters(small_dataset, b)
        assert np.array_equal(la, lb) and np.array_equal(pa, pb)

    @pytest.mark.parametrize("overrides", [{"u_mode": "gaussian"}, {"dark_mode": "onehot"}, {"kmeans_refresh_epochs": 2}])
    def test_variants_run(self, small_dataset, tiny_config, pretrained, overrides):
        _, log = finetune(small_dataset, pretrained, tiny_config.replace(finetune_epochs=3, **overrides))
        assert all(r.loss_breakdown.self_distill >= 0 for r in log.records)

    def test_iic_on_predictor_runs(self, small_dataset, tiny_config):
        _, log = pretrain(small_dataset, tiny_config.replace(iic_target="predictor"))
        assert all(r.loss_breakdown.iic <= 1e-12 for r in log.records)


def test_infer_shapes(small_dataset, tiny_config):
    params = init_params(tiny_config, small_dataset.view_dims, small_dataset.k)
    labels, probs = infer_clusters(small_dataset, params)
    assert labels.shape == (60,) and probs.shape == (60, 3)
    np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-12)
