"""Conditional Wasserstein critic over (possibly soft) dense adjacency."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .graph import DenseGraph


@dataclass(frozen=True)
class CriticConfig:
    num_classes: int
    feature_dim: int
    hidden_dim: int = 32
    num_layers: int = 3
    class_dim: int = 8
    normalize_adjacency: bool = False


class GCNLayer(nn.Module):
    """``relu(B h_v + W sum_u A_vu h_u)``, with padded rows held at zero."""

    def __init__(self, d_in: int, d_out: int):
        super().__init__()
        self.self_weight = nn.Linear(d_in, d_out, bias=True)
        self.neighbor_weight = nn.Linear(d_in, d_out, bias=False)

    def forward(self, h, adj, mask):
        if h.shape[-1] != self.self_weight.in_features:
            raise ValueError(
                f"layer expects {self.self_weight.in_features} input features, got {h.shape[-1]}"
            )
        if adj.shape[-1] != h.shape[-2] or adj.shape[-2] != h.shape[-2]:
            raise ValueError(f"adjacency {tuple(adj.shape)} does not match features {tuple(h.shape)}")
        agg = adj @ h
        out = torch.relu(self.self_weight(h) + self.neighbor_weight(agg))
        return out * mask.unsqueeze(-1)


def gcn_layer(h, adj, mask, layer: GCNLayer):
    return layer(h, adj, mask)


def global_mean_pool(h, mask):
    """Mean over unmasked rows; accepts ``(n, d)`` or batched ``(B, n, d)``."""
    count = mask.sum(-1, keepdim=True)
    if torch.any(count == 0):
        raise ValueError("cannot pool a graph with an empty mask")
    return (h * mask.unsqueeze(-1)).sum(-2) / count


def normalize(adj, mask):
    deg = adj.sum(-1)
    inv = torch.where(deg > 0, deg.clamp_min(1e-12).rsqrt(), torch.zeros_like(deg)) * mask
    return inv.unsqueeze(-1) * adj * inv.unsqueeze(-2)


class Critic(nn.Module):
    def __init__(self, config: CriticConfig):
        super().__init__()
        self.config = config
        c = config
        dims = [c.feature_dim] + [c.hidden_dim] * c.num_layers
        if c.num_layers < 1:
            raise ValueError("critic needs at least one GCN layer")
        self.gcn_layers = nn.ModuleList(GCNLayer(a, b) for a, b in zip(dims[:-1], dims[1:]))
        self.class_embedding = nn.Embedding(c.num_classes, c.class_dim)
        self.score_mlp = nn.Sequential(
            nn.Linear(c.hidden_dim + c.class_dim, c.hidden_dim),
            nn.LeakyReLU(0.2),
            nn.Linear(c.hidden_dim, 1),
        )

    def forward(self, features, adj, mask, labels):
        """Scores for a batch: features ``(B, n, d)``, adj ``(B, n, n)``, mask ``(B, n)``."""
        labels = torch.as_tensor(labels, dtype=torch.long)
        if torch.any(labels < 0) or torch.any(labels >= self.config.num_classes):
            raise ValueError(f"class outside [0, {self.config.num_classes})")
        if self.config.normalize_adjacency:
            adj = normalize(adj, mask)
        h = features * mask.unsqueeze(-1)
        for layer in self.gcn_layers:
            h = layer(h, adj, mask)
        g = global_mean_pool(h, mask)
        f = torch.cat([g, self.class_embedding(labels)], dim=-1)
        return self.score_mlp(f).squeeze(-1)


def critic_score(critic: Critic, dense, y=None) -> torch.Tensor:
    """Score a single :class:`~densegraph.graph.DenseGraph` (or a list of them)."""
    items = [dense] if isinstance(dense, DenseGraph) else list(dense)
    dtype = next(critic.parameters()).dtype
    x, a, m = collate_dense(items, dtype=dtype)
    labels = torch.tensor([it.label for it in items] if y is None else
                          ([y] * len(items) if isinstance(y, int) else list(y)))
    out = critic(x, a, m, labels)
    return out[0] if isinstance(dense, DenseGraph) else out


def collate_dense(items, n_pad=None, dtype=torch.float32):
    """Stack DenseGraph-like items into padded ``(features, adjacency, mask)`` tensors."""
    width = max(len(it.mask) for it in items) if n_pad is None else n_pad
    d = items[0].features.shape[1]
    x = torch.zeros(len(items), width, d, dtype=dtype)
    a = torch.zeros(len(items), width, width, dtype=dtype)
    m = torch.zeros(len(items), width, dtype=dtype)
    for b, it in enumerate(items):
        k = len(it.mask)
        x[b, :k] = torch.as_tensor(it.features, dtype=dtype)
        a[b, :k, :k] = torch.as_tensor(it.adjacency, dtype=dtype)
        m[b, :k] = torch.as_tensor(it.mask, dtype=dtype)
    return x, a, m
