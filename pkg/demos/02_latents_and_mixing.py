"""The latent space and the opacity-mixed starting point of the flow.

Frames become latents by space-to-depth and a fixed gain. The ODE starts
from the degraded latent where the rendering is confident and from noise
where it is not.

    python3 demos/02_latents_and_mixing.py
"""
import numpy as np

from artifact import flowmatch as fm
from artifact import numcore as nc
from artifact.splat import gen_scene, orbit_cameras, render

rng = nc.Rng(1)
scene = gen_scene(rng.child(0), 30)
cam = orbit_cameras(rng.child(1), 1, size=32)[0]
r = render(scene, cam)

z = fm.encode(r.rgb[None])
print("frame", r.rgb.shape, "-> latent", z.shape, f"(gain {fm.LATENT_GAIN:g})")
assert np.array_equal(fm.decode(z, size=r.rgb.shape[:2]), r.rgb[None]), "round trip is exact"
print(f"pixel std {r.rgb.std():.3f}, latent std {z.std():.3f}")

O = fm.opacity_downscale(r.opacity[None])
z0 = fm.opacity_mix(z[None], O[None], rng.child(2))[0]
# weight O on the rendering and 1 - O on fresh noise, cell by cell
edges = np.quantile(O, [0.0, 1 / 3, 2 / 3, 1.0])
for lo, hi in zip(edges[:-1], edges[1:]):
    m = (O >= lo) & (O <= hi)
    corr = np.corrcoef(z0[m].ravel(), z[m].ravel())[0, 1]
    print(f"opacity in [{lo:.2f},{hi:.2f}]: {m.sum():3d} cells, corr(z0, z_deg) = {corr:+.2f}")

# straight-line interpolant between the mixed source and the clean target
for t in (0.0, 0.5, 1.0):
    zt, v = fm.interpolant(z0, z, t)
    print(f"t={t:.1f}: mean |z_t - target| {np.abs(zt - z).mean():.3f}, velocity norm {np.linalg.norm(v):.1f}")
