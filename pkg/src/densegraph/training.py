"""WGAN-GP training of the generator against the conditional GCN critic."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .critic import Critic, CriticConfig, collate_dense
from .datasets import ClassStatistics, LabeledGraphSet, compute_class_statistics
from .generator import Generator, GeneratorConfig, SoftBatch, TemperatureSchedule, temperature
from .graph import DenseGraph, Graph, to_dense

log = logging.getLogger(__name__)

# generator learning rate per dataset; the critic uses 5e-4 throughout
GENERATOR_LR = {"MUTAG": 1e-4, "ENZYMES": 3e-4, "PROTEINS": 2e-4}

METRICS_HEADER = ["epoch", "batch", "critic_loss", "gen_loss", "gp", "temperature"]


class ConfigError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    n_critic: int = 5
    lambda_gp: float = 10.0
    lr_g: float = 1e-4
    lr_d: float = 5e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    cf: float = 1.0
    schedule: TemperatureSchedule = field(default_factory=TemperatureSchedule)
    seed: int = 0
    checkpoint_every: int = 50

    def __post_init__(self):
        if self.n_critic < 1:
            raise ConfigError("n_critic must be >= 1")
        if self.lambda_gp < 0:
            raise ConfigError("lambda_gp must be >= 0")
        if not (self.lr_g > 0 and self.lr_d > 0):
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.cf <= 0:
            raise ConfigError("batch_size >= 1, epochs >= 0 and cf > 0 are required")

    @classmethod
    def for_dataset(cls, name: str, **overrides) -> "TrainConfig":
        lr_g = GENERATOR_LR.get(name.upper(), cls.lr_g)
        return cls(**{"lr_g": lr_g, **overrides})

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "schedule"}
        d.update(t_start=self.schedule.t_start, t_end=self.schedule.t_end,
                 alpha=self.schedule.alpha)
        return d

    @classmethod
    def from_dict(cls, d: dict, base: Optional["TrainConfig"] = None) -> "TrainConfig":
        base = base or cls()
        kinds = {f.name: f.type for f in fields(cls)}
        sched = {k: float(d[k]) for k in ("t_start", "t_end", "alpha") if k in d}
        kw = {}
        for key, value in d.items():
            if key in ("t_start", "t_end", "alpha"):
                continue
            if key not in kinds or key == "schedule":
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = int(value) if kinds[key] == "int" else float(value)
        try:
            schedule = replace(base.schedule, **sched)
            return replace(base, schedule=schedule, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path, dataset_name: Optional[str] = None) -> TrainConfig:
    """Parse a flat ``key = value`` file (``#`` starts a comment)."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (p.strip() for p in line.split("=", 1))
            try:
                float(value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: value for {key!r} is not numeric") from None
            values[key] = value
    base = TrainConfig.for_dataset(dataset_name) if dataset_name else TrainConfig()
    try:
        return TrainConfig.from_dict(values, base)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_models(ds: LabeledGraphSet, seed: int):
    torch.manual_seed(seed)
    gen = Generator(GeneratorConfig(num_classes=ds.num_classes, feature_dim=ds.feature_dim,
                                    simplex_features=ds.one_hot))
    critic = Critic(CriticConfig(num_classes=ds.num_classes, feature_dim=ds.feature_dim))
    return gen, critic


def pad_nodes(t: torch.Tensor, width: int) -> torch.Tensor:
    """Zero-pad axis 1 of a ``(B, n)`` or ``(B, n, d)`` tensor to ``width``."""
    extra = width - t.shape[1]
    if extra == 0:
        return t
    return F.pad(t, (0, extra)) if t.dim() == 2 else F.pad(t, (0, 0, 0, extra))


def pad_square(t: torch.Tensor, width: int) -> torch.Tensor:
    extra = width - t.shape[-1]
    return t if extra == 0 else F.pad(t, (0, extra, 0, extra))


def interpolate_pair(real: DenseGraph, fake, eps: float):
    """Convex combination ``eps * real + (1 - eps) * fake`` of padded dense inputs.

    ``fake`` is anything with ``adjacency``/``edge_probs``, ``features`` and
    ``mask`` of the same width. Returns ``(features, adjacency, mask)``.
    """
    fa = fake.adjacency if hasattr(fake, "adjacency") else fake.edge_probs
    fa, fx, fm = (torch.as_tensor(v) for v in (fa, fake.features, fake.mask))
    ra, rx, rm = (torch.as_tensor(v, dtype=fa.dtype) for v in (real.adjacency, real.features, real.mask))
    if ra.shape != fa.shape or rx.shape != fx.shape:
        raise ValueError(f"padding mismatch: real {tuple(ra.shape)} vs fake {tuple(fa.shape)}")
    a = eps * ra + (1 - eps) * fa
    x = eps * rx + (1 - eps) * fx
    return x, a, torch.maximum(rm, fm.to(rm.dtype))


def interpolate_batch(real, fake, eps: torch.Tensor):
    """Batched interpolation of ``(x, a, m)`` triples; ``eps`` has shape ``(B,)``."""
    rx, ra, rm = real
    fx, fa, fm = fake
    if ra.shape != fa.shape or rx.shape != fx.shape:
        raise ValueError(f"padding mismatch: real {tuple(ra.shape)} vs fake {tuple(fa.shape)}")
    e2 = eps.view(-1, 1, 1)
    return e2 * rx + (1 - e2) * fx, e2 * ra + (1 - e2) * fa, torch.maximum(rm, fm)


def gradient_penalty(critic, x, a, m, y, create_graph: bool = True) -> torch.Tensor:
    """Mean of ``(||grad D||_2 - 1)^2`` with the norm over adjacency and features jointly."""
    x = x.detach().requires_grad_(True)
    a = a.detach().requires_grad_(True)
    scores = critic(x, a, m, y)
    gx, ga = torch.autograd.grad(scores.sum(), (x, a), create_graph=create_graph,
                                 allow_unused=True)
    gx = torch.zeros_like(x) if gx is None else gx
    ga = torch.zeros_like(a) if ga is None else ga
    sq = gx.flatten(1).pow(2).sum(1) + ga.flatten(1).pow(2).sum(1)
    # epsilon keeps sqrt differentiable at a zero gradient
    norm = torch.sqrt(sq + 1e-16)
    return ((norm - 1.0) ** 2).mean()


@dataclass
class CriticLoss:
    loss: torch.Tensor
    real_score: torch.Tensor
    fake_score: torch.Tensor
    gp: torch.Tensor


def critic_loss(critic, real, fake, labels, lambda_gp: float, eps: torch.Tensor) -> CriticLoss:
    """``-E[D(real)] + E[D(fake)] + lambda * GP`` on padded ``(x, a, m)`` triples."""
    d_real = critic(*real, labels).mean()
    d_fake = critic(*fake, labels).mean()
    if lambda_gp > 0:
        gp = gradient_penalty(critic, *interpolate_batch(real, fake, eps), labels)
    else:
        gp = torch.zeros((), dtype=d_real.dtype)
    return CriticLoss(-d_real + d_fake + lambda_gp * gp, d_real, d_fake, gp)


def dense_batch(graphs: Sequence[Graph], width: int, dtype=torch.float32):
    return collate_dense([to_dense(g, width) for g in graphs], width, dtype=dtype)


def soft_triplet(batch: SoftBatch, width: int):
    return (pad_nodes(batch.features, width), pad_square(batch.edge_probs, width),
            pad_nodes(batch.mask, width))


@dataclass
class StepResult:
    critic_loss: float
    gp: float


def critic_step(gen: Generator, critic: Critic, opt_d, real: Sequence[Graph],
                stats: Sequence[ClassStatistics], config: TrainConfig, T: float,
                rng: np.random.Generator) -> StepResult:
    """One critic update; the generator is only run forward."""
    labels = [g.label for g in real]
    with torch.no_grad():
        fake = gen.generate_batch(stats, labels, T, rng, cf=config.cf)
    width = max(max(g.n for g in real), max(fake.sizes))
    dtype = gen.dtype
    real_t = dense_batch(real, width, dtype)
    fake_t = soft_triplet(fake, width)
    eps = torch.as_tensor(rng.random(len(real)), dtype=dtype)
    opt_d.zero_grad(set_to_none=True)
    out = critic_loss(critic, real_t, fake_t, fake.labels, config.lambda_gp, eps)
    out.loss.backward()
    opt_d.step()
    return StepResult(float(out.loss.detach()), float(out.gp.detach()))


def generator_step(gen: Generator, critic: Critic, opt_g, labels: Sequence[int],
                   stats: Sequence[ClassStatistics], config: TrainConfig, T: float,
                   rng: np.random.Generator) -> float:
    """One generator update against a frozen critic; returns ``-E[D(fake)]``."""
    fake = gen.generate_batch(stats, labels, T, rng, cf=config.cf)
    width = max(fake.sizes)
    for p in critic.parameters():
        p.requires_grad_(False)
    try:
        opt_g.zero_grad(set_to_none=True)
        loss = -critic(*soft_triplet(fake, width), fake.labels).mean()
        loss.backward()
        opt_g.step()
    finally:
        for p in critic.parameters():
            p.requires_grad_(True)
    return float(loss.detach())


def make_optimizers(gen, critic, config: TrainConfig):
    betas = (config.adam_beta1, config.adam_beta2)
    return (torch.optim.Adam(gen.parameters(), lr=config.lr_g, betas=betas),
            torch.optim.Adam(critic.parameters(), lr=config.lr_d, betas=betas))


@dataclass
class TrainResult:
    checkpoints: list
    history: list[dict]

    @property
    def final(self):
        return self.checkpoints[-1]


def train(ds: LabeledGraphSet, config: TrainConfig, out_dir=None,
          on_epoch: Optional[Callable[[int, list], None]] = None) -> TrainResult:
    """Run the 5:1-style adversarial loop and return checkpoints plus the loss log.

    With ``out_dir`` set, periodic checkpoints, ``final.dgck`` and
    ``metrics.csv`` are written there. A non-finite loss aborts the run after
    writing ``diverged.dgck``.
    """
    from .checkpoint import Checkpoint, save_checkpoint

    stats = compute_class_statistics(ds)
    gen, critic = build_models(ds, config.seed)
    opt_g, opt_d = make_optimizers(gen, critic, config)
    rng = np.random.default_rng(config.seed)
    out = Path(out_dir) if out_dir is not None else None
    metrics_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out / "metrics.csv", "w", newline="", encoding="utf-8")
        writer = csv.writer(metrics_fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)

    def snapshot(epoch):
        return Checkpoint(generator=gen, critic=critic, class_stats=list(stats), epoch=epoch,
                          rng_state=rng.bit_generator.state, config=config,
                          label_mapping=dict(ds.label_mapping), dataset_name=ds.name).frozen()

    checkpoints = [snapshot(0)]
    if out is not None:
        save_checkpoint(checkpoints[0], out / "checkpoint_0000.dgck")
    history: list[dict] = []
    try:
        for epoch in range(config.epochs):
            T = temperature(config.schedule, epoch)
            order = rng.permutation(len(ds.graphs))
            epoch_rows = []
            for b, start in enumerate(range(0, len(order), config.batch_size)):
                real = [ds.graphs[i] for i in order[start:start + config.batch_size]]
                steps = [critic_step(gen, critic, opt_d, real, stats, config, T, rng)
                         for _ in range(config.n_critic)]
                g_loss = generator_step(gen, critic, opt_g, [g.label for g in real],
                                        stats, config, T, rng)
                row = {
                    "epoch": epoch, "batch": b,
                    "critic_loss": float(np.mean([s.critic_loss for s in steps])),
                    "gen_loss": g_loss,
                    "gp": float(np.mean([s.gp for s in steps])),
                    "temperature": T,
                }
                history.append(row)
                epoch_rows.append(row)
                if metrics_fh is not None:
                    writer.writerow([row[k] if k in ("epoch", "batch") else repr(row[k])
                                     for k in METRICS_HEADER])
                if not all(math.isfinite(row[k]) for k in ("critic_loss", "gen_loss", "gp")):
                    path = None
                    if out is not None:
                        path = out / "diverged.dgck"
                        save_checkpoint(snapshot(epoch), path)
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {b}: {row}", path)
            if on_epoch is not None:
                on_epoch(epoch, epoch_rows)
            done = epoch + 1
            if config.checkpoint_every > 0 and done % config.checkpoint_every == 0:
                ck = snapshot(done)
                checkpoints.append(ck)
                if out is not None:
                    save_checkpoint(ck, out / f"checkpoint_{done:04d}.dgck")
        if not checkpoints or checkpoints[-1].epoch != config.epochs:
            checkpoints.append(snapshot(config.epochs))
        if out is not None:
            save_checkpoint(checkpoints[-1], out / "final.dgck")
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return TrainResult(checkpoints=checkpoints, history=history)
