"""TUDataset parsing and the per-class statistics that condition generation."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .graph import Graph, GraphValidationError, is_one_hot, new_graph

log = logging.getLogger(__name__)


class DatasetParseError(ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}" + (f":{line}" if line is not None else "") + ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass
class LabeledGraphSet:
    graphs: list[Graph]
    num_classes: int
    feature_dim: int
    name: str
    # original label value -> dense class id
    label_mapping: dict[int, int] = field(default_factory=dict)
    one_hot: bool = False

    def __len__(self):
        return len(self.graphs)

    def by_class(self, c: int) -> list[Graph]:
        return [g for g in self.graphs if g.label == c]

    def subset(self, indices) -> "LabeledGraphSet":
        return LabeledGraphSet(
            graphs=[self.graphs[i] for i in indices],
            num_classes=self.num_classes,
            feature_dim=self.feature_dim,
            name=self.name,
            label_mapping=dict(self.label_mapping),
            one_hot=self.one_hot,
        )

    def __post_init__(self):
        for g in self.graphs:
            if not 0 <= g.label < self.num_classes:
                raise GraphValidationError(f"label {g.label} outside [0, {self.num_classes})")
            if g.features.shape[1] != self.feature_dim:
                raise GraphValidationError(
                    f"feature dimension {g.features.shape[1]} != {self.feature_dim}"
                )


@dataclass(frozen=True)
class ClassStatistics:
    label: int
    mu_n: float
    sigma_n: float
    n_min: int
    n_max: int
    mu_m: float
    rho: float
    count: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ClassStatistics":
        return cls(**d)


def _read_lines(path: Path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    while lines and not lines[-1]:
        lines.pop()
    return lines


def _parse_ints(path: Path, ncols: Optional[int] = None) -> np.ndarray:
    rows = []
    for k, ln in enumerate(_read_lines(path), start=1):
        parts = [p.strip() for p in ln.split(",")]
        if ncols is not None and len(parts) != ncols:
            raise DatasetParseError(f"expected {ncols} fields, got {len(parts)}", path, k)
        try:
            rows.append([int(p) for p in parts])
        except ValueError:
            raise DatasetParseError(f"non-integer field in {ln!r}", path, k) from None
    if not rows:
        return np.zeros((0, ncols or 1), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def _parse_floats(path: Path) -> np.ndarray:
    rows = []
    width = None
    for k, ln in enumerate(_read_lines(path), start=1):
        try:
            vals = [float(p) for p in ln.split(",")]
        except ValueError:
            raise DatasetParseError(f"non-numeric field in {ln!r}", path, k) from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DatasetParseError(f"expected {width} fields, got {len(vals)}", path, k)
        if not all(math.isfinite(v) for v in vals):
            raise DatasetParseError("non-finite value", path, k)
        rows.append(vals)
    return np.asarray(rows, dtype=np.float64)


def _dataset_dir(root, name) -> Path:
    root = Path(root)
    nested = root / name
    if (nested / f"{name}_A.txt").exists():
        return nested
    return root


def load_tudataset(root, name: str, label_mapping: Optional[dict] = None,
                   feature_source: str = "auto") -> LabeledGraphSet:
    """Read a TUDataset directory (``root/name/`` or ``root/`` itself).

    Node features come from ``DS_node_attributes.txt`` when present, else a
    one-hot encoding of ``DS_node_labels.txt``, else a constant 1.0 column.
    ``feature_source`` may force ``"attributes"`` or ``"labels"``. Graph
    labels are remapped to ``0..C-1`` in sorted order unless an explicit
    ``label_mapping`` (original -> dense) is given.
    """
    d = _dataset_dir(root, name)
    path = lambda suffix: d / f"{name}_{suffix}.txt"  # noqa: E731

    for suffix in ("A", "graph_indicator", "graph_labels"):
        if not path(suffix).exists():
            raise DatasetParseError(f"missing mandatory file {path(suffix).name}", path(suffix))

    indicator = _parse_ints(path("graph_indicator"), 1)[:, 0]
    graph_labels = _parse_ints(path("graph_labels"), 1)[:, 0]
    edges = _parse_ints(path("A"), 2)
    num_nodes = len(indicator)
    num_graphs = len(graph_labels)

    if num_nodes == 0:
        raise DatasetParseError("graph indicator is empty", path("graph_indicator"))
    if np.any(np.diff(indicator) < 0):
        raise DatasetParseError("graph indicator is not sorted by graph id", path("graph_indicator"))
    if indicator.min() < 1 or indicator.max() != num_graphs:
        raise DatasetParseError(
            f"graph ids span {indicator.min()}..{indicator.max()} but {num_graphs} labels given",
            path("graph_indicator"),
        )
    counts = np.bincount(indicator, minlength=num_graphs + 1)[1:]
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0]) + 1
        raise DatasetParseError(f"graph {missing} has no nodes", path("graph_indicator"))
    if edges.size and (edges.min() < 1 or edges.max() > num_nodes):
        bad = int(np.flatnonzero((edges < 1).any(axis=1) | (edges > num_nodes).any(axis=1))[0])
        raise DatasetParseError(f"node id outside 1..{num_nodes}", path("A"), bad + 1)

    if path("edge_labels").exists():
        log.warning("%s: edge labels are not used and will be ignored", path("edge_labels").name)

    feats, one_hot = _node_features(path, num_nodes, feature_source)

    if label_mapping is None:
        label_mapping = {int(v): k for k, v in enumerate(np.unique(graph_labels))}
    else:
        label_mapping = {int(k): int(v) for k, v in label_mapping.items()}
        unknown = set(np.unique(graph_labels).tolist()) - set(label_mapping)
        if unknown:
            raise DatasetParseError(f"graph labels {sorted(unknown)} not in label mapping",
                                    path("graph_labels"))
    num_classes = max(label_mapping.values()) + 1 if label_mapping else 0

    starts = np.concatenate([[0], np.cumsum(counts)])
    e0 = edges - 1
    edge_graph = indicator[e0[:, 0]] if edges.size else np.zeros(0, dtype=np.int64)
    if edges.size:
        cross = np.flatnonzero(edge_graph != indicator[e0[:, 1]])
        if cross.size:
            raise DatasetParseError("edge joins nodes of different graphs", path("A"), int(cross[0]) + 1)
    order = np.argsort(edge_graph, kind="stable")
    e_sorted = e0[order]
    bounds = np.searchsorted(edge_graph[order], np.arange(1, num_graphs + 2))

    graphs = []
    for gidx in range(num_graphs):
        lo, hi = starts[gidx], starts[gidx + 1]
        local = e_sorted[bounds[gidx]:bounds[gidx + 1]] - lo
        # self-loops are not representable; some corpora carry them
        local = local[local[:, 0] != local[:, 1]]
        graphs.append(new_graph(
            hi - lo, local.tolist(), feats[lo:hi], label_mapping[int(graph_labels[gidx])]
        ))

    return LabeledGraphSet(
        graphs=graphs,
        num_classes=num_classes,
        feature_dim=feats.shape[1],
        name=name,
        label_mapping=label_mapping,
        one_hot=one_hot,
    )


def _node_features(path, num_nodes: int, feature_source: str):
    attrs, labels = path("node_attributes"), path("node_labels")
    if feature_source not in ("auto", "attributes", "labels"):
        raise ValueError(f"unknown feature_source {feature_source!r}")
    use_attrs = attrs.exists() and feature_source in ("auto", "attributes")
    use_labels = labels.exists() and not use_attrs and feature_source in ("auto", "labels")
    if feature_source == "attributes" and not attrs.exists():
        raise DatasetParseError("node attributes requested but file is missing", attrs)
    if feature_source == "labels" and not labels.exists():
        raise DatasetParseError("node labels requested but file is missing", labels)

    if use_attrs:
        x = _parse_floats(attrs)
        if len(x) != num_nodes:
            raise DatasetParseError(f"{len(x)} attribute rows for {num_nodes} nodes", attrs)
        return x, is_one_hot(x)
    if use_labels:
        lab = _parse_ints(labels, 1)[:, 0]
        if len(lab) != num_nodes:
            raise DatasetParseError(f"{len(lab)} node labels for {num_nodes} nodes", labels)
        values, idx = np.unique(lab, return_inverse=True)
        x = np.zeros((num_nodes, len(values)), dtype=np.float64)
        x[np.arange(num_nodes), idx] = 1.0
        return x, True
    return np.ones((num_nodes, 1), dtype=np.float64), False


def save_tudataset(graphs: list[Graph], root, name: str,
                   inverse_label_mapping: Optional[dict] = None) -> Path:
    """Write graphs in TUDataset layout under ``root/name/``.

    Features go to ``DS_node_attributes.txt``; one-hot features are also
    written as ``DS_node_labels.txt``. ``inverse_label_mapping`` maps dense
    class ids back to the original label values.
    """
    d = Path(root) / name
    d.mkdir(parents=True, exist_ok=True)
    inv = inverse_label_mapping or {}
    offset = 0
    a_lines, ind_lines, attr_lines, nl_lines, gl_lines = [], [], [], [], []
    all_one_hot = all(is_one_hot(g.features) for g in graphs)
    for gidx, g in enumerate(graphs, start=1):
        for i, j in g.edges:
            a_lines.append(f"{i + offset + 1}, {j + offset + 1}")
            a_lines.append(f"{j + offset + 1}, {i + offset + 1}")
        for row in g.features:
            attr_lines.append(", ".join(repr(float(v)) for v in row))
            if all_one_hot:
                nl_lines.append(str(int(np.argmax(row))))
        ind_lines.extend([str(gidx)] * g.n)
        gl_lines.append(str(int(inv.get(g.label, g.label))))
        offset += g.n

    def write(suffix, lines):
        with open(d / f"{name}_{suffix}.txt", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(ln + "\n" for ln in lines))

    write("A", a_lines)
    write("graph_indicator", ind_lines)
    write("graph_labels", gl_lines)
    write("node_attributes", attr_lines)
    if all_one_hot:
        write("node_labels", nl_lines)
    return d


def compute_class_statistics(ds: LabeledGraphSet) -> list[ClassStatistics]:
    """Per-class size and density statistics, indexed by class id.

    ``rho`` is the ratio of class means, ``2 * mu_m / (mu_n * (mu_n - 1))``,
    and 0 when ``mu_n <= 1``.
    """
    out = []
    for c in range(ds.num_classes):
        members = ds.by_class(c)
        if not members:
            raise ValueError(f"class {c} has no graphs")
        out.append(_stats_for(c, members))
    return out


def pooled_statistics(ds: LabeledGraphSet) -> ClassStatistics:
    if not ds.graphs:
        raise ValueError("dataset is empty")
    return _stats_for(-1, ds.graphs)


def _stats_for(label: int, graphs: list[Graph]) -> ClassStatistics:
    sizes = np.array([g.n for g in graphs], dtype=np.float64)
    nedges = np.array([g.num_edges for g in graphs], dtype=np.float64)
    mu_n = float(sizes.mean())
    mu_m = float(nedges.mean())
    rho = 2.0 * mu_m / (mu_n * (mu_n - 1.0)) if mu_n > 1.0 else 0.0
    return ClassStatistics(
        label=label,
        mu_n=mu_n,
        sigma_n=float(sizes.std()),
        n_min=int(sizes.min()),
        n_max=int(sizes.max()),
        mu_m=mu_m,
        rho=min(max(rho, 0.0), 1.0),
        count=len(graphs),
    )


def split(ds: LabeledGraphSet, train_fraction: float, seed: int):
    """Stratified, seed-deterministic split into (train, held-out)."""
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    rng = np.random.default_rng(seed)
    labels = np.array([g.label for g in ds.graphs], dtype=np.int64)
    per_class = [np.flatnonzero(labels == c) for c in range(ds.num_classes)]
    # largest-remainder allocation so the total is floor(f * N + 0.5)
    exact = np.array([train_fraction * len(idx) for idx in per_class])
    take = np.floor(exact).astype(np.int64)
    total = int(math.floor(train_fraction * len(labels) + 0.5))
    spare = total - int(take.sum())
    for c in np.argsort(-(exact - take), kind="stable")[:max(spare, 0)]:
        take[c] += 1
    train_idx, held_idx = [], []
    for idx, k in zip(per_class, take):
        idx = idx[rng.permutation(len(idx))]
        train_idx.extend(idx[:k].tolist())
        held_idx.extend(idx[k:].tolist())
    return ds.subset(sorted(train_idx)), ds.subset(sorted(held_idx))


def dataset_root_exists(root, name) -> bool:
    d = _dataset_dir(root, name)
    return os.path.exists(d / f"{name}_A.txt")
