"""Versioned single-file checkpoints.

Layout::

    b"DGCKPT\\0\\n"            8-byte magic
    uint32 LE                 format version
    uint64 LE                 manifest length in bytes
    manifest                  UTF-8 JSON: metadata, tensor names/shapes/offsets, payload digest
    payload                   raw little-endian float32 tensors, back to back
"""
from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .critic import Critic, CriticConfig
from .datasets import ClassStatistics
from .generator import Generator, GeneratorConfig, TemperatureSchedule

MAGIC = b"DGCKPT\x00\n"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    generator: Generator
    critic: Critic
    class_stats: list[ClassStatistics]
    epoch: int
    rng_state: dict
    config: object  # TrainConfig
    label_mapping: dict[int, int] = field(default_factory=dict)
    dataset_name: str = ""

    def frozen(self) -> "Checkpoint":
        """Deep copy detached from the live training modules."""
        return Checkpoint(
            generator=copy.deepcopy(self.generator),
            critic=copy.deepcopy(self.critic),
            class_stats=list(self.class_stats),
            epoch=int(self.epoch),
            rng_state=copy.deepcopy(self.rng_state),
            config=self.config,
            label_mapping=dict(self.label_mapping),
            dataset_name=self.dataset_name,
        )

    @property
    def inverse_label_mapping(self) -> dict[int, int]:
        return {v: k for k, v in self.label_mapping.items()}

    def rng(self) -> np.random.Generator:
        """A generator resumed from the stored rng state."""
        bitgen = getattr(np.random, self.rng_state["bit_generator"])()
        bitgen.state = copy.deepcopy(self.rng_state)
        return np.random.Generator(bitgen)


def _tensors(ck: Checkpoint):
    for prefix, module in (("generator", ck.generator), ("critic", ck.critic)):
        for name, t in module.state_dict().items():
            yield f"{prefix}.{name}", t


def save_checkpoint(ck: Checkpoint, path) -> None:
    from .training import TrainConfig

    config = ck.config if isinstance(ck.config, TrainConfig) else TrainConfig()
    entries, chunks, offset = [], [], 0
    for name, t in _tensors(ck):
        arr = np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    manifest = {
        "format": "densegraph-checkpoint",
        "dtype": "float32-le",
        "tensors": entries,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "generator_config": asdict(ck.generator.config),
        "critic_config": asdict(ck.critic.config),
        "class_stats": [s.to_dict() for s in ck.class_stats],
        "epoch": int(ck.epoch),
        "rng_state": ck.rng_state,
        "train_config": config.to_dict(),
        "label_mapping": sorted([int(k), int(v)] for k, v in ck.label_mapping.items()),
        "dataset_name": ck.dataset_name,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    from .training import TrainConfig

    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, mlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a densegraph checkpoint")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version} "
                              f"(expected {FORMAT_VERSION})")
    start = _HEADER.size
    if len(data) < start + mlen:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[start:start + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from exc
    payload = data[start + mlen:]
    if hashlib.sha256(payload).hexdigest() != manifest.get("payload_sha256"):
        raise CheckpointError(f"{path}: payload is truncated or corrupt")

    try:
        gen = Generator(GeneratorConfig(**manifest["generator_config"]))
        critic = Critic(CriticConfig(**manifest["critic_config"]))
        tensors = {}
        for e in manifest["tensors"]:
            raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
            arr = np.frombuffer(raw, dtype="<f4").reshape(e["shape"])
            tensors[e["name"]] = torch.from_numpy(arr.astype(np.float32))
        for prefix, module in (("generator", gen), ("critic", critic)):
            sd = {k[len(prefix) + 1:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}
            module.load_state_dict(sd, strict=True)
        tc = manifest["train_config"]
        sched = TemperatureSchedule(tc["t_start"], tc["t_end"], tc["alpha"])
        config = TrainConfig(**{k: v for k, v in tc.items()
                                if k not in ("t_start", "t_end", "alpha")}, schedule=sched)
        return Checkpoint(
            generator=gen,
            critic=critic,
            class_stats=[ClassStatistics.from_dict(s) for s in manifest["class_stats"]],
            epoch=int(manifest["epoch"]),
            rng_state=manifest["rng_state"],
            config=config,
            label_mapping={int(k): int(v) for k, v in manifest["label_mapping"]},
            dataset_name=manifest.get("dataset_name", ""),
        )
    except (KeyError, TypeError, ValueError, RuntimeError) as exc:
        raise CheckpointError(f"{path}: inconsistent checkpoint contents ({exc})") from exc


def generate_corpus(ck: Checkpoint, count_per_class: int, seed: int,
                    T: Optional[float] = None):
    """``count_per_class`` hard graphs per class, in class order."""
    from .generator import temperature

    if T is None:
        T = temperature(ck.config.schedule, ck.epoch)
    rng = np.random.default_rng(seed)
    gen = ck.generator.eval()
    out = []
    for c in range(gen.config.num_classes):
        for _ in range(count_per_class):
            out.append(gen.generate_hard(ck.class_stats, c, T, rng, cf=ck.config.cf))
    return out
