"""Two-stage training: contrastive pretraining, then self-distillation fine-tuning with an EMA teacher."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import losses
from .config import TrainConfig, make_rng, sub_seed
from .dataset import BatchPlan, MultiViewDataset, batch_iter
from .errors import NonFiniteLossError, ShapeError
from .metrics import MetricsReport, evaluate
from .network import DTYPE, ModelParams, decode, ema_update, encode, init_params, student_probs, teacher_features
from .pseudolabel import ClusterState, build_cluster_state

log = logging.getLogger(__name__)


@dataclass
class TrainLogRecord:
    epoch: int
    stage: str
    loss_breakdown: losses.LossBreakdown
    metrics: MetricsReport | None = None
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "stage": self.stage,
            "loss": self.loss_breakdown.to_dict(),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class TrainLog:
    records: list[TrainLogRecord] = field(default_factory=list)
    path: Path | None = None

    def append(self, rec: TrainLogRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch and rec.stage == self.records[-1].stage:
            raise ValueError("epoch numbers must increase")
        self.records.append(rec)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def _views(dataset: MultiViewDataset, idx: np.ndarray | None = None) -> list[torch.Tensor]:
    views = dataset.views if idx is None else dataset.subset(idx)
    return [torch.from_numpy(np.ascontiguousarray(v)) for v in views]


def _check_finite(parts: dict[str, torch.Tensor], stage: str, epoch: int) -> None:
    for name, value in parts.items():
        if not torch.isfinite(value):
            raise NonFiniteLossError(f"{stage} epoch {epoch}: loss component {name!r} is {value.item()}")


def _make_optimizer(parameters, config: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(parameters, lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps)


def _check_dataset(dataset: MultiViewDataset, params: ModelParams) -> None:
    if dataset.view_dims != params.view_dims or dataset.k != params.k:
        raise ShapeError(
            f"dataset (dims {dataset.view_dims}, k={dataset.k}) does not match model "
            f"(dims {params.view_dims}, k={params.k})"
        )


@torch.no_grad()
def latents(dataset: MultiViewDataset, params: ModelParams) -> list[torch.Tensor]:
    return [encode(ae, x) for ae, x in zip(params.autoencoders, _views(dataset))]


def combine_views(y_views) -> tuple[np.ndarray, np.ndarray]:
    """Average per-view cluster distributions; argmax with lowest-index tie-breaking."""
    probs = np.mean([np.asarray(y, dtype=np.float64) for y in y_views], axis=0)
    return probs.argmax(axis=1), probs


@torch.no_grad()
def infer_clusters(dataset: MultiViewDataset, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    _check_dataset(dataset, params)
    return combine_views([student_probs(params.heads, z).numpy() for z in latents(dataset, params)])


def evaluate_params(dataset: MultiViewDataset, params: ModelParams) -> MetricsReport | None:
    if dataset.labels is None:
        return None
    labels, _ = infer_clusters(dataset, params)
    return evaluate(labels, dataset.labels, dataset.k)


def pretrain_batch_losses(
    params: ModelParams, xs: list[torch.Tensor], config: TrainConfig
) -> dict[str, torch.Tensor]:
    """L_rec (batch mean) plus the student, teacher and IIC terms for one mini-batch."""
    zs = [encode(ae, x) for ae, x in zip(params.autoencoders, xs)]
    xhats = [decode(ae, z) for ae, z in zip(params.autoencoders, zs)]
    ys = [student_probs(params.heads, z) for z in zs]
    ts = [teacher_features(params.heads, z) for z in zs]
    iic_in = zs if config.iic_target == "latent" else ys
    return {
        "rec": losses.reconstruction_loss(xs, xhats, reduction="mean"),
        "stu": losses.student_contrastive_loss(ys, config.tau_s, config.include_self_negatives),
        "tea": losses.teacher_contrastive_loss(ts, config.tau_t, config.include_self_negatives),
        "iic": losses.iic_mi_loss(iic_in, as_logits=config.iic_target == "latent"),
    }


def _epoch_breakdown(sums: dict[str, float], batches: int) -> losses.LossBreakdown:
    return losses.LossBreakdown.from_components(**{k: v / batches for k, v in sums.items()})


def pretrain(
    dataset: MultiViewDataset,
    config: TrainConfig,
    params: ModelParams | None = None,
    log_path: str | Path | None = None,
    track_metrics: bool = True,
) -> tuple[ModelParams, TrainLog]:
    """Optimize L_rec + L_stu + L_tea + L_IIC jointly over every trainable parameter."""
    params = init_params(config, dataset.view_dims, dataset.k) if params is None else params
    _check_dataset(dataset, params)
    train_log = TrainLog(path=Path(log_path) if log_path else None)
    optimizer = _make_optimizer(params.parameters(), config)
    plan = BatchPlan(config.batch_size, sub_seed(config.seed, "shuffle-pretrain"), drop_last=False)

    for epoch in range(1, config.pretrain_epochs + 1):
        start = time.perf_counter()
        sums = dict.fromkeys(("rec", "stu", "tea", "iic"), 0.0)
        batches = batch_iter(dataset, plan, epoch)
        for idx in batches:
            parts = pretrain_batch_losses(params, _views(dataset, idx), config)
            _check_finite(parts, "pretrain", epoch)
            total = parts["rec"] + parts["stu"] + parts["tea"] + parts["iic"]
            optimizer.zero_grad(set_to_none=True)
            total.backward()
            optimizer.step()
            for name, value in parts.items():
                sums[name] += value.item()
        rec = TrainLogRecord(
            epoch,
            "pretrain",
            _epoch_breakdown(sums, len(batches)),
            evaluate_params(dataset, params) if track_metrics else None,
            time.perf_counter() - start,
        )
        train_log.append(rec)
        log.info("pretrain epoch %d total %.5f", epoch, rec.loss_breakdown.total)
    return params, train_log


def distribution_u(config: TrainConfig, k: int) -> torch.Tensor:
    if config.u_mode == "uniform":
        return losses.uniform_u(k)
    g = make_rng(config.seed, "u-gaussian").standard_normal(k)
    return torch.softmax(torch.from_numpy(g), dim=0)


@torch.no_grad()
def refresh_targets(
    dataset: MultiViewDataset, params: ModelParams, config: TrainConfig, epoch: int
) -> ClusterState:
    """Teacher features -> k-means -> pseudo-labels -> alignment to student predictions -> dark knowledge."""
    zs = latents(dataset, params)
    ts = [teacher_features(params.heads, z).numpy() for z in zs]
    student_labels = [student_probs(params.heads, z).numpy().argmax(axis=1) for z in zs]
    return build_cluster_state(
        ts,
        student_labels,
        dataset.k,
        seed=sub_seed(config.seed, "kmeans", epoch),
        mode=config.dark_mode,
        temp=config.effective_dark_temp,
        max_iter=config.kmeans_max_iter,
        tol=config.kmeans_tol,
    )


def finetune(
    dataset: MultiViewDataset,
    params: ModelParams,
    config: TrainConfig,
    log_path: str | Path | None = None,
    track_metrics: bool = True,
    on_step: Callable[[ModelParams], None] | None = None,
) -> tuple[ModelParams, TrainLog]:
    """Distill aligned dark knowledge into the student; the teacher head follows by EMA only."""
    params = copy.deepcopy(params)
    _check_dataset(dataset, params)
    train_log = TrainLog(path=Path(log_path) if log_path else None)
    trainable = params.heads.student_parameters()
    if config.finetune_encoders:
        trainable += [p for ae in params.autoencoders for p in ae.encoder.parameters()]
    optimizer = _make_optimizer(trainable, config)
    plan = BatchPlan(config.batch_size, sub_seed(config.seed, "shuffle-finetune"), drop_last=False)
    u = distribution_u(config, dataset.k)
    frozen_z = None if config.finetune_encoders else latents(dataset, params)
    state: ClusterState | None = None

    for epoch in range(1, config.finetune_epochs + 1):
        start = time.perf_counter()
        if state is None or (epoch - 1) % config.kmeans_refresh_epochs == 0:
            state = refresh_targets(dataset, params, config, epoch)
        dark = [torch.from_numpy(d) for d in state.dark_targets]
        total_sd = 0.0
        batches = batch_iter(dataset, plan, epoch)
        for idx in batches:
            ti = torch.from_numpy(idx)
            if frozen_z is None:
                zs = [encode(ae, x) for ae, x in zip(params.autoencoders, _views(dataset, idx))]
            else:
                zs = [z[ti] for z in frozen_z]
            ys = [student_probs(params.heads, z) for z in zs]
            loss = losses.self_distillation_loss(
                [d[ti] for d in dark], ys, config.tau_d, u, literal_sign=config.distill_literal_sign
            )
            _check_finite({"self_distill": loss}, "finetune", epoch)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            ema_update(params.heads.teacher, params.heads.student, config.momentum_mu)
            total_sd += loss.item()
            if on_step is not None:
                on_step(params)
        rec = TrainLogRecord(
            epoch,
            "finetune",
            losses.LossBreakdown.from_components(self_distill=total_sd / len(batches)),
            evaluate_params(dataset, params) if track_metrics else None,
            time.perf_counter() - start,
        )
        train_log.append(rec)
        log.info("finetune epoch %d self-distill %.5f", epoch, rec.loss_breakdown.total)
    return params, train_log
