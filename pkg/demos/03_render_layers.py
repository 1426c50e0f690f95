"""Render one procedural room and save every layer as a PNG.

Usage: python 03_render_layers.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from lightxfer.io import write_png
from lightxfer.pipeline import GenConfig, render_sample

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

gen = GenConfig(size=128)
images, record, src, tgt = render_sample(gen, scene_idx=0, shape_idx=2, view=3)

print("target shape:", record["shape"])
print("composition error, source and target:", record["source_composition_error"], record["composition_error"])

# linear layers, clipped for display
for name in ("D", "S", "R", "R_l", "alpha2", "I", "S_rough"):
    write_png(out / f"target_{name}.png", np.clip(getattr(tgt, name), 0, 1))
write_png(out / "source_I.png", np.clip(src.I, 0, 1))
write_png(out / "mask.png", np.repeat(tgt.M, 3, axis=2), encode_srgb=False)

# the rough mesh changes only the shading of the target object
diff = np.abs(tgt.S_rough - tgt.S).max(axis=2)
inside = tgt.M[..., 0] > 0
print("shading change inside / outside mask:", diff[inside].mean(), diff[~inside].mean())
print("wrote", sorted(p.name for p in out.glob("*.png")))
