"""Command-line entry point: synth, pretrain, finetune, evaluate, infer, run-all."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import TrainConfig, sub_seed
from .dataset import MultiViewDataset, SyntheticSpec, load_dataset, normalize_minmax, save_dataset, synth_generate
from .errors import ConfigError, DistilMVCError, StageError, ValidationError
from .network import Checkpoint, ModelParams, load_checkpoint, save_checkpoint
from .trainer import evaluate_params, finetune, infer_clusters, pretrain

log = logging.getLogger("distilmvc")

CHECKPOINT = "checkpoint.bin"

# flag -> (TrainConfig field, help); the flag set shared by every training command
FLAG_TABLE = {
    "seed": ("seed", "master seed; init/shuffle/kmeans seeds derive from it"),
    "batch-size": ("batch_size", "mini-batch size"),
    "pretrain-epochs": ("pretrain_epochs", "pretraining epochs"),
    "finetune-epochs": ("finetune_epochs", "fine-tuning epochs"),
    "lr": ("learning_rate", "Adam learning rate"),
    "tau-s": ("tau_s", "student contrastive temperature"),
    "tau-t": ("tau_t", "teacher contrastive temperature"),
    "tau-d": ("tau_d", "distillation smoothing factor"),
    "mu": ("momentum_mu", "EMA momentum of the teacher head"),
    "latent-dim": ("latent_dim", "autoencoder latent width"),
    "head-dim": ("head_dim", "student/teacher head output width"),
    "u-mode": ("u_mode", "smoothing distribution {uniform,gaussian}"),
    "dark-mode": ("dark_mode", "dark-knowledge form {soft,onehot}"),
    "kmeans-refresh-epochs": ("kmeans_refresh_epochs", "epochs between pseudo-label refreshes"),
}
CONFIG_FLAGS = {flag: name for flag, (name, _) in FLAG_TABLE.items()}

# extra keys accepted in --config files
FILE_ONLY = {f.name for f in fields(TrainConfig)} - set(CONFIG_FLAGS.values())


class UsageError(DistilMVCError):
    pass


EXIT_USAGE = 2
USAGE_ERRORS = (UsageError, ConfigError, ValidationError)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _coerce(name: str, raw: str) -> Any:
    default = getattr(TrainConfig(), name)
    if name == "dark_temp":
        return None if raw.strip().lower() in ("", "none") else float(raw)
    if isinstance(default, bool):
        return _bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(type(default[0])(x) for x in raw.replace(" ", "").split(",") if x)
    return raw.strip()


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Flat ``key = value`` file; keys are flag names (``tau-s``) or field names (``tau_s``)."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        name = CONFIG_FLAGS.get(key, key.replace("-", "_"))
        if name not in CONFIG_FLAGS.values() and name not in FILE_ONLY:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            out[name] = _coerce(name, value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def effective_config(args: argparse.Namespace, base: TrainConfig | None = None) -> TrainConfig:
    """Defaults (or a checkpoint's config) < --config file < command-line flags."""
    values = (base or TrainConfig()).to_dict()
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for flag, name in CONFIG_FLAGS.items():
        v = getattr(args, flag.replace("-", "_"), None)
        if v is not None:
            values[name] = v
    return TrainConfig.from_dict(values)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training configuration (flags override --config)")
    g.add_argument("--config", help="key=value config file")
    for flag, (name, text) in FLAG_TABLE.items():
        default = getattr(d, name)
        kw: dict[str, Any] = {"default": None, "help": f"{text} (default: {default})"}
        if name == "u_mode":
            kw["choices"] = ("uniform", "gaussian")
        elif name == "dark_mode":
            kw["choices"] = ("soft", "onehot")
        else:
            kw["type"] = type(default)
        g.add_argument(f"--{flag}", **kw)


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    s = SyntheticSpec()
    p.add_argument("--k", type=int, default=s.k, help=f"clusters (default: {s.k})")
    p.add_argument("--n-per-cluster", type=int, default=s.n_per_cluster, help=f"default: {s.n_per_cluster}")
    p.add_argument("--view-dims", default=",".join(map(str, s.view_dims)), help="comma-separated view widths")
    p.add_argument("--separation", type=float, default=s.cluster_separation, help=f"default: {s.cluster_separation}")
    p.add_argument("--noise", type=float, default=s.noise_scale, help=f"default: {s.noise_scale}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distilmvc", description="Multi-view clustering with self-distillation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic multi-view dataset")
    _add_synth_flags(p)
    p.add_argument("--seed", type=int, default=0, help="default: 0")
    p.add_argument("--out", required=True)

    for name, needs_ckpt in (("pretrain", False), ("finetune", True), ("evaluate", True), ("infer", True)):
        p = sub.add_parser(name)
        p.add_argument("--data", required=True, help="dataset directory")
        p.add_argument("--out", required=True, help="output directory")
        if needs_ckpt:
            p.add_argument("--checkpoint", required=True, help="input checkpoint")
        if name in ("pretrain", "finetune"):
            _add_config_flags(p)

    p = sub.add_parser("run-all", help="synth-or-load -> pretrain -> finetune -> evaluate")
    p.add_argument("--data", help="dataset directory (omit to synthesize one)")
    p.add_argument("--out", required=True)
    _add_synth_flags(p)
    p.add_argument("--data-seed", type=int, default=SyntheticSpec().seed, help="synthetic dataset seed (default: 0)")
    _add_config_flags(p)
    return parser


# ------------------------------------------------------------------ helpers


def _prepare(dataset: MultiViewDataset, config: TrainConfig) -> MultiViewDataset:
    return normalize_minmax(dataset) if config.normalize else dataset


def _write_manifest(out: Path, command: str, config: TrainConfig, **paths: Any) -> None:
    manifest = {"command": command, "config": config.to_dict(), **{k: (str(v) if v else None) for k, v in paths.items()}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_metrics(out: Path, report) -> None:
    text = report.to_json()
    (out / "metrics.json").write_text(text + "\n")
    print(text)


def _rng_state(config: TrainConfig, stage: str) -> bytes:
    return json.dumps({"seed": config.seed, "stage": stage, "next": sub_seed(config.seed, stage)}).encode()


def _do_pretrain(data: MultiViewDataset, config: TrainConfig, out: Path) -> ModelParams:
    log_path = out / "pretrain_log.jsonl"
    log_path.unlink(missing_ok=True)
    params, _ = pretrain(data, config, log_path=log_path, track_metrics=data.labels is not None)
    save_checkpoint(Checkpoint(config, params, "pretrained", _rng_state(config, "pretrained")), out / CHECKPOINT)
    return params


def _do_finetune(data: MultiViewDataset, params: ModelParams, config: TrainConfig, out: Path, name: str) -> ModelParams:
    log_path = out / "finetune_log.jsonl"
    log_path.unlink(missing_ok=True)
    params, _ = finetune(data, params, config, log_path=log_path, track_metrics=data.labels is not None)
    save_checkpoint(Checkpoint(config, params, "finetuned", _rng_state(config, "finetuned")), out / name)
    return params


def _synth_spec(args: argparse.Namespace, seed: int) -> SyntheticSpec:
    try:
        dims = tuple(int(x) for x in args.view_dims.split(",") if x)
    except ValueError:
        raise UsageError(f"--view-dims must be comma-separated integers, got {args.view_dims!r}") from None
    return SyntheticSpec(args.n_per_cluster, args.k, dims, args.separation, args.noise, seed)


# ----------------------------------------------------------------- commands


def cmd_synth(args: argparse.Namespace) -> int:
    spec = _synth_spec(args, args.seed)
    save_dataset(synth_generate(spec), args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    config = effective_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "pretrain", config, dataset_path=args.data, checkpoint_in=None, checkpoint_out=out / CHECKPOINT)
    _do_pretrain(_prepare(load_dataset(args.data), config), config, out)
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.stage != "pretrained":
        raise StageError(f"finetune needs a pretrained checkpoint, {args.checkpoint} is {ckpt.stage}")
    config = effective_config(args, base=ckpt.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "finetune", config, dataset_path=args.data, checkpoint_in=args.checkpoint, checkpoint_out=out / CHECKPOINT)
    _do_finetune(_prepare(load_dataset(args.data), config), ckpt.params, config, out, CHECKPOINT)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    data = load_dataset(args.data)
    if data.labels is None:
        raise UsageError(f"evaluate needs ground-truth labels; {args.data} has no labels.csv")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics(out, evaluate_params(_prepare(data, ckpt.config), ckpt.params))
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    data = _prepare(load_dataset(args.data), ckpt.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels, probs = infer_clusters(data, ckpt.params)
    np.savetxt(out / "labels.csv", labels, fmt="%d")
    np.savetxt(out / "probs.csv", probs, delimiter=",", fmt="%.17g")
    print(f"wrote {out / 'labels.csv'} and {out / 'probs.csv'}")
    return 0


def cmd_run_all(args: argparse.Namespace) -> int:
    config = effective_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.data:
        data_path = Path(args.data)
    else:
        data_path = out / "data"
        save_dataset(synth_generate(_synth_spec(args, args.data_seed)), data_path)
    raw = load_dataset(data_path)
    if raw.labels is None:
        raise UsageError(f"run-all ends with evaluate, which needs labels; {data_path} has none")
    _write_manifest(out, "run-all", config, dataset_path=data_path, checkpoint_in=None, checkpoint_out=out / "finetuned.bin")
    data = _prepare(raw, config)
    params = _do_pretrain(data, config, out)
    (out / CHECKPOINT).rename(out / "pretrained.bin")
    params = _do_finetune(data, params, config, out, "finetuned.bin")
    _write_metrics(out, evaluate_params(data, params))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "infer": cmd_infer,
    "run-all": cmd_run_all,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DistilMVCError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"distilmvc {args.command}: error: {msg}", file=sys.stderr)
        # bad arguments share argparse's exit status; runtime failures get 1
        return EXIT_USAGE if isinstance(exc, USAGE_ERRORS) else 1


if __name__ == "__main__":
    sys.exit(main())
