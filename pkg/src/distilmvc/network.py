"""Per-view autoencoders, shared student/teacher heads, EMA coupling and checkpoints.

Everything runs in float64 on CPU so that checkpoints round-trip bit-exactly and
the finite-difference gradient checks are meaningful.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .config import TrainConfig, make_rng
from .errors import IntegrityError, ShapeError, StructuralError, VersionError

DTYPE = torch.float64


@dataclass(frozen=True)
class MLPSpec:
    layer_widths: tuple[int, ...]
    activation: str = "relu"
    final_activation: str = "none"

    def __post_init__(self) -> None:
        if len(self.layer_widths) < 2 or min(self.layer_widths) < 1:
            raise ShapeError(f"invalid layer widths {self.layer_widths}")
        if self.activation != "relu" or self.final_activation not in ("none", "softmax"):
            raise ShapeError("unsupported activation")


class MLP(nn.Module):
    """Dense stack with ReLU between layers and an optional final softmax."""

    def __init__(self, spec: MLPSpec):
        super().__init__()
        self.spec = spec
        w = spec.layer_widths
        self.layers = nn.ModuleList(nn.Linear(a, b, dtype=DTYPE) for a, b in zip(w[:-1], w[1:]))

    @property
    def in_features(self) -> int:
        return self.spec.layer_widths[0]

    @property
    def out_features(self) -> int:
        return self.spec.layer_widths[-1]

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = torch.relu(x)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.logits(x)
        if self.spec.final_activation == "softmax":
            x = torch.softmax(x, dim=-1)
        return x


class Autoencoder(nn.Module):
    def __init__(self, view_dim: int, hidden: Sequence[int], latent_dim: int, view_index: int):
        super().__init__()
        self.view_index = view_index
        self.encoder = MLP(MLPSpec((view_dim, *hidden, latent_dim)))
        self.decoder = MLP(MLPSpec((latent_dim, *reversed(tuple(hidden)), view_dim)))

    @property
    def view_dim(self) -> int:
        return self.encoder.in_features

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_features


class Heads(nn.Module):
    """Student feature head w_s, predictor w_p (softmax over k) and teacher head w_t."""

    def __init__(self, latent_dim: int, hidden: int, head_dim: int, k: int):
        super().__init__()
        self.student = MLP(MLPSpec((latent_dim, hidden, head_dim)))
        self.predictor = MLP(MLPSpec((head_dim, k), final_activation="softmax"))
        self.teacher = MLP(MLPSpec((latent_dim, hidden, head_dim)))

    def student_parameters(self) -> list[nn.Parameter]:
        return [*self.student.parameters(), *self.predictor.parameters()]


class ModelParams(nn.Module):
    def __init__(self, view_dims: Sequence[int], k: int, config: TrainConfig):
        super().__init__()
        self.k = k
        self.autoencoders = nn.ModuleList(
            Autoencoder(d, config.encoder_hidden, config.latent_dim, i) for i, d in enumerate(view_dims)
        )
        self.heads = Heads(config.latent_dim, config.student_hidden, config.head_dim, k)

    @property
    def view_dims(self) -> list[int]:
        return [ae.view_dim for ae in self.autoencoders]

    def named_arrays(self) -> list[tuple[str, torch.Tensor]]:
        """Parameters in declaration order (the checkpoint order)."""
        return list(self.state_dict(keep_vars=False).items())


# ------------------------------------------------------------------ init


def _fan_in_uniform(stack: MLP, rng: np.random.Generator) -> None:
    """Variance-preserving fan-in uniform init.

    Weights ~ U(-a, a) with a = sqrt(6 / fan_in) for layers followed by ReLU and
    sqrt(3 / fan_in) for the output layer; biases ~ U(-b, b) with b = 1 / sqrt(fan_in).
    """
    with torch.no_grad():
        for i, layer in enumerate(stack.layers):
            fan_in = layer.in_features
            gain = 6.0 if i < len(stack.layers) - 1 else 3.0
            a = math.sqrt(gain / fan_in)
            b = 1.0 / math.sqrt(fan_in)
            layer.weight.copy_(torch.from_numpy(rng.uniform(-a, a, size=tuple(layer.weight.shape))))
            layer.bias.copy_(torch.from_numpy(rng.uniform(-b, b, size=tuple(layer.bias.shape))))


def init_params(config: TrainConfig, view_dims: Sequence[int], k: int, seed: int | None = None) -> ModelParams:
    """Fan-in scaled uniform init from a PCG64 stream; teacher starts as a copy of the student head."""
    seed = config.seed if seed is None else seed
    rng = make_rng(seed, "init")
    params = ModelParams(view_dims, k, config)
    for ae in params.autoencoders:
        _fan_in_uniform(ae.encoder, rng)
        _fan_in_uniform(ae.decoder, rng)
    _fan_in_uniform(params.heads.student, rng)
    _fan_in_uniform(params.heads.predictor, rng)
    params.heads.teacher.load_state_dict(params.heads.student.state_dict())
    return params


# --------------------------------------------------------------- forward


def _as_input(x, width: int, what: str) -> torch.Tensor:
    x = torch.as_tensor(x, dtype=DTYPE)
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{what}: expected (batch, {width}), got {tuple(x.shape)}")
    return x


def encode(ae: Autoencoder, x) -> torch.Tensor:
    return ae.encoder(_as_input(x, ae.view_dim, "encode"))


def decode(ae: Autoencoder, z) -> torch.Tensor:
    return ae.decoder(_as_input(z, ae.latent_dim, "decode"))


def student_probs(heads: Heads, z) -> torch.Tensor:
    return heads.predictor(heads.student(_as_input(z, heads.student.in_features, "student_probs")))


def teacher_features(heads: Heads, z) -> torch.Tensor:
    return heads.teacher(_as_input(z, heads.teacher.in_features, "teacher_features"))


@torch.no_grad()
def ema_update(teacher: nn.Module, student: nn.Module, mu: float) -> nn.Module:
    """In place: theta <- mu * theta + (1 - mu) * xi, over congruent parameter lists."""
    t_params = list(teacher.parameters())
    s_params = list(student.parameters())
    if len(t_params) != len(s_params) or any(a.shape != b.shape for a, b in zip(t_params, s_params)):
        raise StructuralError("teacher and student stacks have different layer shapes")
    for theta, xi in zip(t_params, s_params):
        theta.copy_(mu * theta + (1.0 - mu) * xi)
    return teacher


# ------------------------------------------------------------ checkpoint

MAGIC = b"DMVC"
VERSION = 1
STAGES = ("pretrained", "finetuned")


@dataclass
class Checkpoint:
    config: TrainConfig
    params: ModelParams
    stage: str
    rng_state: bytes = b""
    version: int = VERSION


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Layout: magic, u32 version, u32 header length, JSON header, raw <f8 tensors, sha256 of all preceding bytes."""
    arrays = ckpt.params.named_arrays()
    header = {
        "config": ckpt.config.to_dict(),
        "stage": ckpt.stage,
        "rng_state": ckpt.rng_state.hex(),
        "view_dims": ckpt.params.view_dims,
        "k": ckpt.params.k,
        "tensors": [[name, list(t.shape)] for name, t in arrays],
    }
    head = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", ckpt.version, len(head)))
    buf.write(head)
    for _, t in arrays:
        buf.write(t.detach().numpy().astype("<f8", copy=False).tobytes(order="C"))
    body = buf.getvalue()
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 12 + 32 or raw[:4] != MAGIC:
        raise IntegrityError(f"{path}: not a checkpoint file (bad magic or too short)")
    version, head_len = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise VersionError(f"{path}: checkpoint version {version}, this build reads version {VERSION}")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError(f"{path}: checksum mismatch (truncated or corrupt)")

    header = json.loads(body[12 : 12 + head_len])
    config = TrainConfig.from_dict(header["config"])
    params = ModelParams(header["view_dims"], header["k"], config)
    offset = 12 + head_len
    state = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(arr.astype(np.float64))
        offset += 8 * count
    if offset != len(body):
        raise IntegrityError(f"{path}: {len(body) - offset} trailing bytes")
    params.load_state_dict(state)
    return Checkpoint(config, params, header["stage"], bytes.fromhex(header["rng_state"]), version)
