"""Statistical comparison of generated and real graph corpora.

Each graph contributes one normalized histogram per statistic (degree,
clustering coefficient, normalized-Laplacian spectrum); corpora are compared
with a Gaussian-kernel MMD^2 over those per-graph samples.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .datasets import LabeledGraphSet
from .graph import Graph, degree_sequence, wl_hash

DEFAULT_WEIGHTS = (0.4, 0.4, 0.2)
MAX_DEGREE_BINS = 64


@dataclass(frozen=True)
class HistogramSpec:
    kind: str
    bins: int
    range: tuple[float, float]

    def __post_init__(self):
        if self.kind not in ("degree", "clustering", "spectral"):
            raise ValueError(f"unknown histogram kind {self.kind!r}")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not self.range[0] < self.range[1]:
            raise ValueError("histogram range must satisfy lo < hi")

    def centers(self) -> np.ndarray:
        if self.kind == "degree":
            return np.arange(self.bins, dtype=np.float64)
        edges = np.linspace(self.range[0], self.range[1], self.bins + 1)
        return 0.5 * (edges[:-1] + edges[1:])


def degree_spec(graphs: Sequence[Graph]) -> HistogramSpec:
    """Bins ``0..max_degree`` over the given graphs, capped at 64 bins."""
    dmax = max((max(degree_sequence(g)) for g in graphs), default=0)
    bins = min(dmax + 1, MAX_DEGREE_BINS)
    return HistogramSpec("degree", bins, (0.0, float(bins)))


CLUSTERING_SPEC = HistogramSpec("clustering", 10, (0.0, 1.0))
SPECTRAL_SPEC = HistogramSpec("spectral", 20, (0.0, 2.0))


def degree_histogram(g: Graph, spec: HistogramSpec) -> np.ndarray:
    deg = np.minimum(np.asarray(degree_sequence(g)), spec.bins - 1)
    return np.bincount(deg, minlength=spec.bins).astype(np.float64) / g.n


def clustering_coefficients(g: Graph) -> np.ndarray:
    """Local clustering for nodes of degree > 1 (others are omitted)."""
    a = g.adjacency()
    deg = a.sum(1)
    closed = np.einsum("ij,jk,ki->i", a, a, a) / 2.0  # edges among neighbours
    keep = deg > 1
    return 2.0 * closed[keep] / (deg[keep] * (deg[keep] - 1))


def _binned(values: np.ndarray, spec: HistogramSpec) -> np.ndarray:
    lo, hi = spec.range
    idx = np.floor((values - lo) / (hi - lo) * spec.bins).astype(np.int64)
    idx = np.clip(idx, 0, spec.bins - 1)
    return np.bincount(idx, minlength=spec.bins).astype(np.float64)


def clustering_histogram(g: Graph, spec: HistogramSpec = CLUSTERING_SPEC) -> np.ndarray:
    """Normalized histogram of clustering coefficients.

    A graph with no node of degree > 1 yields the all-zero vector, which is the
    empty flag (every other histogram sums to 1).
    """
    c = clustering_coefficients(g)
    if c.size == 0:
        return np.zeros(spec.bins)
    return _binned(c, spec) / c.size


def normalized_laplacian(g: Graph) -> np.ndarray:
    a = g.adjacency()
    deg = a.sum(1)
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(g.n) - inv[:, None] * a * inv[None, :]


def laplacian_spectrum(g: Graph) -> np.ndarray:
    try:
        ev = np.linalg.eigvalsh(normalized_laplacian(g))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed on {g!r}: {exc}") from exc
    return np.clip(ev, 0.0, 2.0)


def spectral_histogram(g: Graph, spec: HistogramSpec = SPECTRAL_SPEC) -> np.ndarray:
    ev = laplacian_spectrum(g)
    return _binned(ev, spec) / ev.size


def _as_matrix(samples) -> np.ndarray:
    if len(samples) == 0:
        raise ValueError("MMD needs non-empty sample lists")
    lengths = {len(np.ravel(s)) for s in samples}
    if len(lengths) != 1:
        raise ValueError(f"histograms have inconsistent lengths {sorted(lengths)}")
    return np.array([np.ravel(s) for s in samples], dtype=np.float64)


def median_bandwidth(X: np.ndarray, Y: np.ndarray) -> float:
    pooled = np.vstack([X, Y])
    if len(pooled) < 2:
        return 1.0
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def mmd2(P, Q, sigma: Optional[float] = None, return_raw: bool = False):
    """Biased (V-statistic) MMD^2 with a Gaussian RBF kernel.

    The bandwidth defaults to the median pairwise distance over ``P`` and ``Q``
    combined (1.0 if that median is zero). The result is clamped at zero;
    ``return_raw=True`` also returns the pre-clamp value.
    """
    X, Y = _as_matrix(P), _as_matrix(Q)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"histogram length mismatch: {X.shape[1]} vs {Y.shape[1]}")
    s = median_bandwidth(X, Y) if sigma is None else float(sigma)
    gamma = 1.0 / (2.0 * s * s)
    kxx = np.exp(-gamma * cdist(X, X, "sqeuclidean")).mean()
    kyy = np.exp(-gamma * cdist(Y, Y, "sqeuclidean")).mean()
    # both orientations so that swapping P and Q is bitwise symmetric
    kxy = 0.5 * (np.exp(-gamma * cdist(X, Y, "sqeuclidean")).mean()
                 + np.exp(-gamma * cdist(Y, X, "sqeuclidean")).mean())
    raw = float(kxx + kyy - 2.0 * kxy)
    val = max(raw, 0.0)
    return (val, raw) if return_raw else val


def check_weights(weights) -> tuple[float, float, float]:
    a, b, c = (float(w) for w in weights)
    if min(a, b, c) < 0 or abs(a + b + c - 1.0) > 1e-9:
        raise ValueError(f"MMD weights must be non-negative and sum to 1, got {(a, b, c)}")
    return a, b, c


def combined_mmd(deg: float, clu: float, spec: float, weights=DEFAULT_WEIGHTS) -> float:
    a, b, c = check_weights(weights)
    return a * deg + b * clu + c * spec


def uniqueness(generated: Sequence[Graph], iterations: int = 3, init_labels=None) -> float:
    if not generated:
        raise ValueError("uniqueness of an empty list is undefined")
    digests = {wl_hash(g, iterations, init_labels) for g in generated}
    return len(digests) / len(generated)


def novelty(generated: Sequence[Graph], training: Sequence[Graph], iterations: int = 3,
            init_labels=None) -> float:
    if not generated:
        raise ValueError("novelty of an empty list is undefined")
    seen = {wl_hash(g, iterations, init_labels) for g in training}
    fresh = sum(wl_hash(g, iterations, init_labels) not in seen for g in generated)
    return fresh / len(generated)


@dataclass
class ClassReport:
    label: int
    mmd_degree: float
    mmd_clustering: float
    mmd_spectral: float
    mmd_combined: float
    avg_nodes_real: float
    avg_nodes_gen: float
    avg_edges_real: float
    avg_edges_gen: float
    uniqueness: float
    novelty: float
    num_real: int
    num_gen: int
    missing: bool = False


@dataclass
class EvalReport:
    dataset: str
    weights: tuple[float, float, float]
    classes: list[ClassReport]
    # per class and kind: (bin centers, mean real histogram, mean generated histogram)
    histograms: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "weights": list(self.weights),
                "classes": [asdict(c) for c in self.classes]}

    def row(self, label: int) -> ClassReport:
        for c in self.classes:
            if c.label == label:
                return c
        raise KeyError(label)


REPORT_COLUMNS = [
    "dataset", "class", "mmd_degree", "mmd_clustering", "mmd_spectral",
    "avg_nodes_real", "avg_nodes_gen", "avg_edges_real", "avg_edges_gen",
    "mmd_combined", "uniqueness", "novelty", "num_real", "num_gen", "missing",
]


def histogram_samples(graphs: Sequence[Graph], deg_spec: HistogramSpec):
    return {
        "degree": [degree_histogram(g, deg_spec) for g in graphs],
        "clustering": [clustering_histogram(g, CLUSTERING_SPEC) for g in graphs],
        "spectral": [spectral_histogram(g, SPECTRAL_SPEC) for g in graphs],
    }


def evaluate(real: LabeledGraphSet, generated: Sequence[Graph], weights=DEFAULT_WEIGHTS,
             training: Optional[Sequence[Graph]] = None) -> EvalReport:
    """Per-class comparison of ``generated`` against the real graphs of each class.

    Novelty is measured against ``training`` (default: every real graph).
    Classes without generated graphs are reported with ``missing=True`` and NaN
    metrics.
    """
    weights = check_weights(weights)
    for g in generated:
        if not 0 <= g.label < real.num_classes:
            raise ValueError(f"generated graph has class {g.label}, not present in the real set")
    training = list(real.graphs if training is None else training)
    deg_spec = degree_spec(list(real.graphs) + list(generated))
    specs = {"degree": deg_spec, "clustering": CLUSTERING_SPEC, "spectral": SPECTRAL_SPEC}
    classes, hists = [], {}
    for c in range(real.num_classes):
        r = real.by_class(c)
        q = [g for g in generated if g.label == c]
        avg_nodes_real = float(np.mean([g.n for g in r])) if r else math.nan
        avg_edges_real = float(np.mean([g.num_edges for g in r])) if r else math.nan
        if not q or not r:
            nan = math.nan
            classes.append(ClassReport(c, nan, nan, nan, nan, avg_nodes_real, nan,
                                       avg_edges_real, nan, nan, nan, len(r), len(q),
                                       missing=True))
            continue
        hr, hq = histogram_samples(r, deg_spec), histogram_samples(q, deg_spec)
        m = {k: mmd2(hr[k], hq[k]) for k in hr}
        for k in hr:
            hists[(c, k)] = (specs[k].centers(), np.mean(hr[k], axis=0), np.mean(hq[k], axis=0))
        classes.append(ClassReport(
            label=c,
            mmd_degree=m["degree"],
            mmd_clustering=m["clustering"],
            mmd_spectral=m["spectral"],
            mmd_combined=combined_mmd(m["degree"], m["clustering"], m["spectral"], weights),
            avg_nodes_real=avg_nodes_real,
            avg_nodes_gen=float(np.mean([g.n for g in q])),
            avg_edges_real=avg_edges_real,
            avg_edges_gen=float(np.mean([g.num_edges for g in q])),
            uniqueness=uniqueness(q),
            novelty=novelty(q, training),
            num_real=len(r),
            num_gen=len(q),
        ))
    return EvalReport(dataset=real.name, weights=weights, classes=classes, histograms=hists)


def write_report(report: EvalReport, out_dir, inverse_label_mapping=None) -> dict[str, Path]:
    """Write ``report.csv``, ``report.json`` and ``hist_<kind>_class<c>.csv`` files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inv = inverse_label_mapping or {}
    paths = {"csv": out / "report.csv", "json": out / "report.json"}
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for c in report.classes:
            d = asdict(c)
            w.writerow([report.dataset, c.label] + [_fmt(d[k]) for k in REPORT_COLUMNS[2:]])
    payload = report.to_dict()
    payload["original_labels"] = {str(c.label): inv.get(c.label, c.label) for c in report.classes}
    paths["json"].write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n",
                             encoding="utf-8")
    for (c, kind), (centers, real_mass, gen_mass) in sorted(report.histograms.items()):
        p = out / f"hist_{kind}_class{c}.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_center", "real_mass", "gen_mass"])
            for row in zip(centers, real_mass, gen_mass):
                w.writerow([_fmt(v) for v in row])
        paths[f"hist_{kind}_{c}"] = p
    return paths


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v
