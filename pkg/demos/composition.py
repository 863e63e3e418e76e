"""Composing fields: densities add, and everything else follows.

Several fields superposed act as one scene whose density is the sum of the
parts.  That single rule fixes every joint quantity: transmittances
multiply, the depth law splits into per-component terms that sum back to
the scene's own law, colors mix density-weighted, and rendering the
composite equals rendering one merged field.  Each identity is checked
numerically below.
"""

import numpy as np

import rayfields as rf
from rayfields.compose import joint_depth_component_pdf

scene = rf.two_blob_demo_scene()
d = np.array([-0.92, 0.18, -0.12])
ray = rf.Ray((4.5, -1.2, 1.4), d / np.linalg.norm(d), t_far=scene.t_far)
quad = rf.QuadratureConfig(seed=7)

print("== transmittance of the composite = product over components ==")
ts = np.linspace(0.5, 14.0, 8)
total = rf.transmittance_grid(scene, ray, ts, n_panels=64)
parts = [rf.transmittance_grid(rf.CompositeScene((c,), t_far=scene.t_far), ray, ts, n_panels=64)
         for c in scene.components]
prod = np.prod(parts, axis=0)
print(f"  max |T_scene - prod T_i| = {np.abs(total - prod).max():.3e}")
assert np.abs(total - prod).max() < 1e-12

print("\n== joint depth/component density sums to the scene depth law ==")
worst = 0.0
for t in (1.0, 4.0, 6.0, 9.0):
    joint = joint_depth_component_pdf(scene, ray, t, quad)
    pdf = rf.depth_pdf(scene, ray, t, quad)
    worst = max(worst, abs(joint.sum() - pdf))
print(f"  max |sum_i p(t, i) - p(t)| = {worst:.3e}")
assert worst < 1e-12

print("\n== composite render = render of one merged field ==")
comp = rf.composite_render(scene, ray, quad)
merged = rf.hierarchical_render(rf.merged_field(scene), ray, quad)
print(f"  color diff = {np.abs(comp.render.color - merged.color).max():.3e}")
print(f"  depth diff = {abs(comp.render.depth_raw - merged.depth_raw):.3e}")
assert np.abs(comp.render.color - merged.color).max() < 1e-12

print("\n== per-component depth mass and the ray's segment label ==")
marginal, residual = rf.component_marginal(scene, ray, quad)
print(f"  component masses = {np.round(marginal, 4)}  vacuum residual = {residual:.2e}")
names = {0: "blob A", 1: "blob B", 2: "ground/dome", -1: "empty"}
targets = {
    "at blob A": rf.Ray((-4.5, -0.3, 0.55), (1.0, 0.0, 0.0), scene.t_far),
    "at blob B": rf.Ray((4.5, 0.4, 0.5), np.array([-1.0, 0.0, 0.0]), scene.t_far),
    "at ground": rf.Ray((4.5, 0.0, 2.0), np.array([-0.6, 0.0, -0.8]), scene.t_far),
    "into sky ": rf.Ray((4.5, 0.0, 2.0), np.array([0.6, 0.0, 0.8]), scene.t_far),
}
for label, r in targets.items():
    print(f"  {label} -> {names[rf.segment_ray(scene, r, quad)]}")

print("\n== constant-density mixture: color is the sigma-weighted average ==")
sigmas, colors = [0.02, 0.05, 0.03], [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
mix = rf.mixture_render_constant(np.array(sigmas), np.array(colors))
want = np.average(colors, axis=0, weights=sigmas)
print(f"  mixture color = {np.round(mix, 6)}  expected = {np.round(want, 6)}")
assert np.abs(mix - want).max() < 1e-9

print("\nall checks passed")
