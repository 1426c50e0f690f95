"""Build rough meshes: Loop subdivision followed by vertex noise."""

import numpy as np

from lightxfer.mesh import (
    bounding_radius,
    dihedral_angles,
    euler_characteristic,
    loop_subdivide,
    make_primitive,
    make_r3dm,
)

ico = make_primitive("icosphere")
for level in range(4):
    m = loop_subdivide(ico, level)
    print(f"level {level}: V={m.n_vertices:5d} F={m.n_faces:5d} chi={euler_characteristic(m)}")

# subdivision smooths: dihedral angles shrink
for level in (0, 2):
    print("mean dihedral at level", level, round(float(np.degrees(dihedral_angles(loop_subdivide(ico, level))).mean()), 2))

# noise is measured against the bounding radius
torus = make_primitive("torus", 1.0, rings=24, sides=12)
r = bounding_radius(torus)
for frac in (0.0, 0.01, 0.05):
    rough = make_r3dm(torus, 1, frac * r, seed=1)
    clean = loop_subdivide(torus, 1)
    shift = np.linalg.norm(rough.vertices - clean.vertices, axis=1)
    print(f"sigma={frac:.2f}*r: mean vertex shift {shift.mean():.4f}")
