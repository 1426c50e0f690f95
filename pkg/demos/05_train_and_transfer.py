"""Small end-to-end run: generate data, train briefly, transfer and composite.

Usage: python 05_train_and_transfer.py [out_dir]
Runs in well under a minute on one core.
"""

import logging
import sys
from pathlib import Path

import numpy as np

from lightxfer.io import read_pfm, write_png
from lightxfer.losses import loss_config
from lightxfer.network import NetConfig
from lightxfer.pipeline import GenConfig, composite_scene, evaluate, generate_dataset, load_dataset, train, transfer

logging.basicConfig(level=logging.INFO, format="%(message)s")
out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")

gen = GenConfig(scenes=4, shapes=("sphere", "torus"), views=4, size=32, test_scenes=1)
generate_dataset(gen, out / "data")
data = load_dataset(out / "data")
print("train/test:", len(data.split("train")), len(data.split("test")))

net = NetConfig(base_channels=8, depth=2, input_size=32)
model, run = train(data, net, loss_config("full"), epochs=3, seed=0)
for e in run["epochs"]:
    print(f"epoch {e['epoch']}: total {e['mean_total']:.4f}")
print("held-out means:", evaluate(model, data)["full"]["mean"])

# take one held-out sample and push it through transfer and compositing
sample = next(s for s in data.manifest["samples"] if s["split"] == "test")
load = lambda name: read_pfm(out / "data" / sample["files"][name])  # noqa: E731
I_s, S_prime, M, scene = load("I_s"), load("S_prime"), load("M"), load("I_scene")
I_t = transfer(model, I_s, S_prime, M)

# the full-frame render stands in for the PBR image; only the object is replaced
final = composite_scene(scene, M, I_t)
print("object L1 against the render:", float(np.abs(final - scene).sum() / (3 * M.sum())))
assert np.array_equal(final[M[..., 0] == 0], scene[M[..., 0] == 0])
write_png(out / "transfer.png", I_t)
write_png(out / "composite.png", final)
write_png(out / "scene.png", scene)
print("wrote", out / "composite.png")
