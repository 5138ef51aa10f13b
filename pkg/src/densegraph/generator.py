"""Class-conditional graph generator with a distance-based edge predictor.

Nodes receive independent noise, are decoded into features together with a
class embedding, and are then mapped into a latent edge space where close
pairs are likely to connect. At inference the ``floor(rho * C(n, 2))`` most
probable pairs become edges; during training the probability matrix itself
is handed to the critic as a weighted adjacency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .datasets import ClassStatistics
from .graph import Graph, new_graph


@dataclass(frozen=True)
class GeneratorConfig:
    num_classes: int
    feature_dim: int
    noise_dim: int = 16
    class_dim: int = 8
    hidden_dim: int = 32
    edge_dim: int = 32
    theta_init: float = 1.0
    # softmax on the node decoder output; used for one-hot corpora
    simplex_features: bool = False


@dataclass(frozen=True)
class TemperatureSchedule:
    t_start: float = 2.0
    t_end: float = 0.5
    alpha: float = 0.03

    def __post_init__(self):
        if not (self.t_start >= self.t_end > 0):
            raise ValueError("temperature schedule needs t_start >= t_end > 0")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


def temperature(sched: TemperatureSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return max(sched.t_end, sched.t_start - sched.alpha * epoch)


@dataclass
class SoftGraph:
    features: torch.Tensor
    edge_probs: torch.Tensor
    label: int
    n: int


@dataclass
class SoftBatch:
    """Padded batch of soft graphs; rows past each graph's size are zero."""

    features: torch.Tensor   # (B, n_pad, d)
    edge_probs: torch.Tensor  # (B, n_pad, n_pad)
    mask: torch.Tensor       # (B, n_pad)
    labels: torch.Tensor     # (B,)
    sizes: list[int]
    logits: torch.Tensor     # (B, n_pad, n_pad), pre-sigmoid edge scores

    def graph(self, b: int) -> SoftGraph:
        n = self.sizes[b]
        return SoftGraph(self.features[b, :n], self.edge_probs[b, :n, :n],
                         int(self.labels[b]), n)


def sample_size(stats: ClassStatistics, cf: float, rng: np.random.Generator) -> int:
    """Draw a node count from a clipped, rounded normal around the class mean.

    Always consumes exactly one normal draw, so the rng stream does not depend
    on the class statistics.
    """
    if cf <= 0:
        raise ValueError("cf must be positive")
    z = rng.standard_normal()
    if stats.sigma_n == 0:
        n = int(round(stats.mu_n))
    else:
        n = int(round(stats.mu_n + cf * stats.sigma_n * z))
    return int(min(max(n, stats.n_min), stats.n_max))


def _mlp(d_in: int, hidden: int, d_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d_in, hidden), nn.LeakyReLU(0.2), nn.Linear(hidden, d_out))


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c = config
        self.class_embedding = nn.Embedding(c.num_classes, c.class_dim)
        self.node_mlp = _mlp(c.noise_dim + c.class_dim, c.hidden_dim, c.feature_dim)
        self.edge_embed_mlp = _mlp(c.feature_dim, c.hidden_dim, c.edge_dim)
        self.theta = nn.Parameter(torch.tensor(float(c.theta_init)))

    @property
    def dtype(self) -> torch.dtype:
        return self.theta.dtype

    def embed_class(self, y) -> torch.Tensor:
        y = torch.as_tensor(y, dtype=torch.long)
        if torch.any(y < 0) or torch.any(y >= self.config.num_classes):
            raise ValueError(f"class {y.tolist()} outside [0, {self.config.num_classes})")
        return self.class_embedding(y)

    def decode_nodes(self, z: torch.Tensor, e_y: torch.Tensor) -> torch.Tensor:
        """Node features from noise ``(..., n, noise_dim)`` and the class embedding.

        For one-hot corpora the decoder ends in a softmax so features live on
        the same simplex as the real ones.
        """
        e = e_y.unsqueeze(-2).expand(*z.shape[:-1], e_y.shape[-1])
        out = self.node_mlp(torch.cat([z, e], dim=-1))
        return torch.softmax(out, dim=-1) if self.config.simplex_features else out

    def synthesize_features(self, e_y: torch.Tensor, n: int, rng: np.random.Generator,
                            z: Optional[np.ndarray] = None) -> torch.Tensor:
        if n < 1:
            raise ValueError("n must be >= 1")
        if z is None:
            z = rng.standard_normal((n, self.config.noise_dim))
        z = torch.as_tensor(np.asarray(z), dtype=self.dtype)
        return self.decode_nodes(z, e_y)

    def edge_logits(self, x: torch.Tensor, T: float) -> torch.Tensor:
        """``(theta - ||h_i - h_j||) / T`` for every pair; works on batched ``x``."""
        if not T > 0:
            raise ValueError(f"temperature must be positive, got {T}")
        h = self.edge_embed_mlp(x)
        diff = h.unsqueeze(-2) - h.unsqueeze(-3)
        d2 = (diff * diff).sum(-1)
        n = x.shape[-2]
        eye = torch.eye(n, dtype=x.dtype, device=x.device)
        # keep sqrt differentiable on the diagonal and for coincident points
        dist = torch.sqrt(d2 + eye + 1e-12) * (1 - eye)
        return (self.theta - dist) / T

    def edge_probabilities(self, x: torch.Tensor, T: float) -> torch.Tensor:
        return _mirror_upper(torch.sigmoid(self.edge_logits(x, T)))

    def generate_soft(self, stats: Sequence[ClassStatistics], y: int, T: float,
                      rng: np.random.Generator, cf: float = 1.0) -> SoftGraph:
        e_y = self.embed_class(int(y))
        n = sample_size(stats[int(y)], cf, rng)
        x = self.synthesize_features(e_y, n, rng)
        return SoftGraph(features=x, edge_probs=self.edge_probabilities(x, T),
                         label=int(y), n=n)

    def generate_batch(self, stats: Sequence[ClassStatistics], labels: Sequence[int], T: float,
                       rng: np.random.Generator, cf: float = 1.0,
                       n_pad: Optional[int] = None) -> SoftBatch:
        """Padded equivalent of calling :meth:`generate_soft` once per label.

        Draws from ``rng`` in the same order as the per-graph calls.
        """
        labels = [int(y) for y in labels]
        sizes, noise = [], []
        for y in labels:
            if not 0 <= y < self.config.num_classes:
                raise ValueError(f"class {y} outside [0, {self.config.num_classes})")
            n = sample_size(stats[y], cf, rng)
            sizes.append(n)
            noise.append(rng.standard_normal((n, self.config.noise_dim)))
        width = max(sizes) if n_pad is None else n_pad
        if width < max(sizes):
            raise ValueError(f"n_pad={width} smaller than sampled size {max(sizes)}")
        z = np.zeros((len(labels), width, self.config.noise_dim))
        mask = np.zeros((len(labels), width))
        for b, (n, zb) in enumerate(zip(sizes, noise)):
            z[b, :n] = zb
            mask[b, :n] = 1.0
        y_t = torch.tensor(labels, dtype=torch.long)
        mask_t = torch.as_tensor(mask, dtype=self.dtype)
        x = self.decode_nodes(torch.as_tensor(z, dtype=self.dtype), self.embed_class(y_t))
        logits = self.edge_logits(x, T)
        feats = x * mask_t.unsqueeze(-1)
        pair_mask = mask_t.unsqueeze(-1) * mask_t.unsqueeze(-2)
        probs = _mirror_upper(torch.sigmoid(logits)) * pair_mask
        return SoftBatch(features=feats, edge_probs=probs, mask=mask_t, labels=y_t,
                         sizes=sizes, logits=logits)

    @torch.no_grad()
    def generate_hard(self, stats: Sequence[ClassStatistics], y: int, T: float,
                      rng: np.random.Generator, cf: float = 1.0,
                      discretize: Optional[bool] = None) -> Graph:
        e_y = self.embed_class(int(y))
        n = sample_size(stats[int(y)], cf, rng)
        x = self.synthesize_features(e_y, n, rng)
        # rank on logits: sigmoid saturates, logits keep the distance order
        scores = self.edge_logits(x, T).double().numpy()
        edges = select_edges(scores, stats[int(y)].rho, n)
        return new_graph(n, edges, emit_features(x.double().numpy(), discretize
                                                 if discretize is not None
                                                 else self.config.simplex_features), y)


def _mirror_upper(P: torch.Tensor) -> torch.Tensor:
    # vectorized kernels may round (i, j) and (j, i) differently
    upper = torch.triu(P, diagonal=1)
    return upper + upper.transpose(-1, -2)


def emit_features(x: np.ndarray, one_hot: bool) -> np.ndarray:
    if not one_hot:
        return np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x, dtype=np.float64)
    out[np.arange(len(x)), np.argmax(x, axis=1)] = 1.0
    return out


def num_selected_edges(rho: float, n: int) -> int:
    pairs = n * (n - 1) // 2
    return min(int(math.floor(rho * pairs)), pairs)


def select_edges(P, rho: float, n: int) -> list[tuple[int, int]]:
    """Top ``floor(rho * C(n, 2))`` pairs of a symmetric score matrix.

    Ties are broken by lexicographic ``(i, j)``. Any strictly monotone
    transform of the scores (probabilities, logits) selects the same set.
    """
    P = np.asarray(P.detach().cpu() if isinstance(P, torch.Tensor) else P, dtype=np.float64)
    k = num_selected_edges(rho, n)
    if k <= 0:
        return []
    iu, ju = np.triu_indices(n, k=1)
    order = np.argsort(-P[iu, ju], kind="stable")[:k]
    return sorted((int(iu[t]), int(ju[t])) for t in order)


def generate_random_baseline(stats: Sequence[ClassStatistics], y: int, rng: np.random.Generator,
                             p_fixed: Optional[float] = None, cf: float = 1.0,
                             feature_dim: int = 1) -> Graph:
    """Fixed-probability edge sampling with the same size model as the generator."""
    st = stats[int(y)]
    p = st.rho if p_fixed is None else float(p_fixed)
    if not 0.0 <= p <= 1.0:
        raise ValueError("p_fixed must lie in [0, 1]")
    n = sample_size(st, cf, rng)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    x = rng.standard_normal((n, feature_dim))
    return new_graph(n, list(zip(iu[keep].tolist(), ju[keep].tolist())), x, y)
