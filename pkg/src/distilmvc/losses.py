"""Training objectives: reconstruction, hierarchical contrastive, IIC and self-distillation.

All functions accept array-likes or tensors and return 0-d float64 tensors so
they can sit directly inside an autograd graph.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Sequence

import torch

from .errors import ConfigError, NumericGuardError, ShapeError, ValidationError

DTYPE = torch.float64
EPS = 1e-12


@dataclass
class LossBreakdown:
    rec: float = 0.0
    stu: float = 0.0
    tea: float = 0.0
    iic: float = 0.0
    self_distill: float = 0.0
    total: float = 0.0

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_components(cls, **parts: float) -> LossBreakdown:
        out = cls(**parts)
        out.total = out.rec + out.stu + out.tea + out.iic + out.self_distill
        return out


def _t(x) -> torch.Tensor:
    return torch.as_tensor(x, dtype=DTYPE)


def _check_rows_stochastic(p: torch.Tensor, what: str, atol: float = 1e-6) -> None:
    if p.ndim != 2:
        raise ShapeError(f"{what}: expected a matrix, got shape {tuple(p.shape)}")
    with torch.no_grad():
        if (p < -atol).any() or not torch.allclose(p.sum(dim=1), torch.ones(p.shape[0], dtype=p.dtype), atol=atol, rtol=0):
            raise ValidationError(f"{what}: rows must be probability distributions")


def cosine_similarity(a, b) -> torch.Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    na, nb = a.norm(), b.norm()
    if na == 0 or nb == 0:
        raise NumericGuardError("cosine similarity of a zero-norm vector")
    return (a @ b) / torch.clamp(na * nb, min=EPS)


def reconstruction_loss(x_views: Sequence, xhat_views: Sequence, reduction: str = "sum") -> torch.Tensor:
    """Squared Euclidean reconstruction error summed over views.

    ``reduction="sum"`` sums over samples; ``"mean"`` averages over samples (used in training).
    """
    if len(x_views) != len(xhat_views):
        raise ShapeError("number of views differs")
    total = _t(0.0)
    for x, xh in zip(x_views, xhat_views):
        x, xh = _t(x), _t(xh)
        if x.shape != xh.shape:
            raise ShapeError(f"reconstruction shape {tuple(xh.shape)} != input shape {tuple(x.shape)}")
        per_sample = ((x - xh) ** 2).reshape(x.shape[0], -1).sum(dim=1)
        total = total + (per_sample.mean() if reduction == "mean" else per_sample.sum())
    return total


def entropy_regularizer(y_views: Sequence) -> torch.Tensor:
    """Sum over views of the entropy of the batch-mean cluster distribution."""
    h = _t(0.0)
    for y in y_views:
        y = _t(y)
        _check_rows_stochastic(y, "entropy_regularizer")
        p = y.mean(dim=0)
        h = h - (p * torch.log(torch.clamp(p, min=EPS))).sum()
    return h


def _normalized_rows(x: torch.Tensor) -> torch.Tensor:
    norms = x.norm(dim=1, keepdim=True)
    if (norms == 0).any():
        raise NumericGuardError("zero-norm row in contrastive input")
    return x / torch.clamp(norms, min=EPS)


def _pair_term(a: torch.Tensor, b: torch.Tensor, tau: float, include_self: bool) -> torch.Tensor:
    n = a.shape[0]
    same = a @ a.T / tau
    cross = a @ b.T / tau
    if not include_self:
        same = same.masked_fill(torch.eye(n, dtype=torch.bool), float("-inf"))
    log_denom = torch.logsumexp(torch.cat([same, cross], dim=1), dim=1)
    per_anchor = log_denom - torch.diagonal(cross)
    return per_anchor.sum() / (2 * n)


def contrastive_loss(views: Sequence, tau: float, include_self_negatives: bool = False) -> torch.Tensor:
    """Symmetric cross-view InfoNCE over every ordered view pair, cosine similarity with temperature."""
    views = [_t(v) for v in views]
    if len(views) < 2:
        raise ShapeError("need at least 2 views")
    if not tau > 0:
        raise ConfigError("temperature must be > 0")
    n = views[0].shape[0]
    if any(v.shape != views[0].shape for v in views):
        raise ShapeError("all views must share the same shape")
    if n < 2:
        raise ValidationError("need at least 2 samples to have negatives")
    normed = [_normalized_rows(v) for v in views]
    total = _t(0.0)
    for i, j in itertools.permutations(range(len(normed)), 2):
        total = total + _pair_term(normed[i], normed[j], tau, include_self_negatives)
    return total


def student_contrastive_loss(
    y_views: Sequence, tau_s: float, include_self_negatives: bool = False, with_entropy: bool = True
) -> torch.Tensor:
    loss = contrastive_loss(y_views, tau_s, include_self_negatives)
    if with_entropy:
        loss = loss - entropy_regularizer(y_views)
    return loss


def teacher_contrastive_loss(t_views: Sequence, tau_t: float, include_self_negatives: bool = False) -> torch.Tensor:
    # no entropy term: it would smooth the teacher features
    return contrastive_loss(t_views, tau_t, include_self_negatives)


def iic_joint(pa, pb) -> torch.Tensor:
    pa, pb = _t(pa), _t(pb)
    if pa.shape != pb.shape:
        raise ShapeError(f"joint inputs differ in shape: {tuple(pa.shape)} vs {tuple(pb.shape)}")
    j = pa.T @ pb / pa.shape[0]
    j = (j + j.T) / 2
    return j / j.sum()


def mutual_information(joint: torch.Tensor) -> torch.Tensor:
    r = joint.sum(dim=1, keepdim=True)
    c = joint.sum(dim=0, keepdim=True)
    logj = torch.log(torch.clamp(joint, min=EPS))
    return (joint * (logj - torch.log(torch.clamp(r, min=EPS)) - torch.log(torch.clamp(c, min=EPS)))).sum()


def iic_mi_loss(z_views: Sequence, as_logits: bool = True) -> torch.Tensor:
    """Negative cross-view mutual information, summed over unordered view pairs.

    With ``as_logits`` each row is softmax-normalized into a distribution over the
    latent dimensions; otherwise rows are taken as distributions already.
    """
    z_views = [_t(z) for z in z_views]
    if len(z_views) < 2:
        raise ShapeError("need at least 2 views")
    d = z_views[0].shape[1]
    if d < 2:
        raise ConfigError("IIC needs an alphabet of at least 2 symbols")
    probs = [torch.softmax(z, dim=1) for z in z_views] if as_logits else z_views
    total = _t(0.0)
    for i, j in itertools.combinations(range(len(probs)), 2):
        total = total - mutual_information(iic_joint(probs[i], probs[j]))
    return total


def uniform_u(k: int) -> torch.Tensor:
    return torch.full((k,), 1.0 / k, dtype=DTYPE)


def distill_targets(dark, tau_d: float, u) -> torch.Tensor:
    return (1.0 - tau_d) * _t(dark) + tau_d * _t(u).reshape(1, -1)


def self_distillation_loss(
    dark_views: Sequence, y_views: Sequence, tau_d: float, u=None, literal_sign: bool = False
) -> torch.Tensor:
    """Forward KL(q || y) with q the u-smoothed dark-knowledge target, mean over samples, summed over views.

    ``literal_sign`` negates the result, for comparison runs only: that objective is unbounded below.
    """
    if not 0.0 <= tau_d < 1.0:
        raise ConfigError("tau_d must lie in [0, 1)")
    if len(dark_views) != len(y_views):
        raise ShapeError("number of views differs")
    total = _t(0.0)
    for dark, y in zip(dark_views, y_views):
        dark, y = _t(dark), _t(y)
        if dark.shape != y.shape:
            raise ShapeError(f"target shape {tuple(dark.shape)} != prediction shape {tuple(y.shape)}")
        uu = uniform_u(y.shape[1]) if u is None else _t(u)
        if uu.shape != (y.shape[1],):
            raise ShapeError("u must have length k")
        q = distill_targets(dark, tau_d, uu)
        kl = (q * (torch.log(torch.clamp(q, min=EPS)) - torch.log(torch.clamp(y, min=EPS)))).sum(dim=1)
        total = total + kl.mean()
    return -total if literal_sign else total
