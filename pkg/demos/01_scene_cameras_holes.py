"""Build one synthetic scene, split its trajectory with curation, degrade it
and look at where the holes end up.

    python3 demos/01_scene_cameras_holes.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from artifact import numcore as nc
from artifact.camsample import curate
from artifact.images import grid, write_png
from artifact.splat import degrade, gen_scene, orbit_cameras, render

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/01")
out.mkdir(parents=True, exist_ok=True)
rng = nc.Rng(0)

# 40 content Gaussians inside six coloured walls, 8 cameras on an orbit arc
scene = gen_scene(rng.child(0), 40)
cams = orbit_cameras(rng.child(1), 8, size=32)
print(f"scene: {len(scene)} primitives; {len(cams)} cameras")

# farthest-pair split, then farthest-point selection inside each half
cur = curate(cams, 3)
print("group 1 (reconstruction inputs):", cur.group1, "selected", cur.selected1)
print("group 2 (held out):", cur.group2, "selected", cur.selected2)

# drop what the selected inputs never saw, jitter the rest
deg = degrade(scene, [cams[i] for i in cur.selected1], rng.child(2))
print(f"degraded scene keeps {len(deg)} of {len(scene)} primitives")

clean = [render(scene, c) for c in cams]
bad = [render(deg, c) for c in cams]
for name, idx in (("inputs", cur.group1), ("held out", cur.group2)):
    op = np.mean([bad[i].opacity.mean() for i in idx])
    print(f"mean degraded opacity on {name}: {op:.3f}")

rows = [[r.rgb for r in clean], [r.rgb for r in bad], [np.repeat(r.opacity[..., None], 3, -1) for r in bad]]
write_png(out / "clean_degraded_opacity.png", grid(rows))
print("wrote", out / "clean_degraded_opacity.png")
