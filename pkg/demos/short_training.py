"""
A short adversarial run on MUTAG
================================

Twenty epochs with the MUTAG learning rates. The full budget is 300 epochs,
about two minutes on one core.
"""
from pathlib import Path
import tempfile

import numpy as np
import torch

from densegraph import TrainConfig, load_tudataset, train
from densegraph.checkpoint import generate_corpus, load_checkpoint

torch.set_num_threads(1)
ROOT = Path(__file__).resolve().parents[1] / "tests" / "data"
ds = load_tudataset(ROOT, "MUTAG")

config = TrainConfig.for_dataset("MUTAG", epochs=20, checkpoint_every=10, seed=0)
print("lr_g", config.lr_g, "lr_d", config.lr_d, "n_critic", config.n_critic)


def report(epoch, rows):
    if epoch % 5 == 0:
        r = rows[-1]
        print(f"epoch {epoch:3d}  T={r['temperature']:.2f}  D={r['critic_loss']:+.3f}  "
              f"G={r['gen_loss']:+.3f}  gp={r['gp']:.3f}")


out = Path(tempfile.mkdtemp())
result = train(ds, config, out_dir=out, on_epoch=report)
print("checkpoints:", sorted(p.name for p in out.glob("*.dgck")))

# the saved file regenerates the same corpus
ck = load_checkpoint(out / "final.dgck")
a, b = generate_corpus(ck, 5, seed=3), generate_corpus(result.final, 5, seed=3)
print("reload reproduces generation:", a == b)
print("mean nodes per class:", [np.mean([g.n for g in a if g.label == c]) for c in (0, 1)])
