from __future__ import annotations

import numpy as np
import pytest

from distilmvc.config import TrainConfig
from distilmvc.dataset import MultiViewDataset, SyntheticSpec, normalize_minmax, synth_generate

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def _report(name: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

    return _report


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(
        batch_size=16,
        pretrain_epochs=3,
        finetune_epochs=2,
        learning_rate=1e-3,
        latent_dim=8,
        head_dim=6,
        encoder_hidden=(16, 12),
        student_hidden=10,
        seed=3,
    )


@pytest.fixture
def small_dataset() -> MultiViewDataset:
    spec = SyntheticSpec(n_per_cluster=20, k=3, view_dims=(5, 4), cluster_separation=6.0, noise_scale=0.1, seed=1)
    return normalize_minmax(synth_generate(spec))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
