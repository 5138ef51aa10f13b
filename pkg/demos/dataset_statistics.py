"""
Per-class size and density of MUTAG
===================================

Loads the bundled MUTAG copy and prints the numbers the generator is
conditioned on.
"""
from pathlib import Path

from densegraph import compute_class_statistics, load_tudataset
from densegraph.datasets import pooled_statistics

ROOT = Path(__file__).resolve().parents[1] / "tests" / "data"

ds = load_tudataset(ROOT, "MUTAG")
print(ds.name, len(ds), "graphs,", ds.num_classes, "classes, feature dim", ds.feature_dim)

# original labels are -1 / 1; they become dense ids 0 / 1
print("label mapping:", ds.label_mapping)

for s in compute_class_statistics(ds):
    print(f"class {s.label}: {s.count:3d} graphs  n = {s.mu_n:.2f} +- {s.sigma_n:.2f} "
          f"[{s.n_min}, {s.n_max}]  m = {s.mu_m:.2f}  rho = {s.rho:.4f}")

p = pooled_statistics(ds)
print(f"pooled: n = {p.mu_n:.2f}, m = {p.mu_m:.2f}, rho = {p.rho:.4f}")

# density fixes the edge budget of every generated graph
for n in (10, 18, 28):
    print(n, "nodes ->", int(p.rho * n * (n - 1) / 2), "edges")
