"""Indexed triangle meshes: primitives, Loop subdivision and seeded vertex noise.

A rough mesh is made by densifying a clean one with Loop subdivision and then
displacing every vertex with Gaussian noise (:func:`make_r3dm`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TopologyError(ValueError):
    """Raised when a mesh is not a closed 2-manifold where one is required."""


@dataclass
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None
    material_id: int = 0

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")
        if self.faces.size:
            tri = self.vertices[self.faces]
            area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
            if not np.all(area2 > 0.0):
                raise ValueError(f"face {int(np.argmin(area2 > 0.0))} is degenerate (zero area)")
        if self.normals is None:
            self.normals = vertex_normals(self.vertices, self.faces)
        else:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.faces.copy(), self.normals.copy(), self.material_id)

    def transformed(self, scale: float = 1.0, translate=(0.0, 0.0, 0.0), rotate_y: float = 0.0) -> "TriMesh":
        """Scaled, rotated about +y (radians), then translated copy."""
        c, s = np.cos(rotate_y), np.sin(rotate_y)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        v = (self.vertices * scale) @ rot.T + np.asarray(translate, dtype=np.float64)
        return TriMesh(v, self.faces.copy(), self.normals @ rot.T, self.material_id)


def face_normals(vertices: np.ndarray, faces: np.ndarray, normalize: bool = True) -> np.ndarray:
    tri = vertices[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    if normalize:
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
    return n


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    # cross product length is twice the area, so this is area weighting
    fn = face_normals(vertices, faces, normalize=False)
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, faces[:, k], fn)
    length = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.divide(acc, length, out=np.zeros_like(acc), where=length > 0)


def compute_normals(m: TriMesh) -> TriMesh:
    """Return a copy of `m` with area-weighted unit vertex normals.

    Vertices referenced by no face get a zero normal and trigger a warning.
    """
    n = vertex_normals(m.vertices, m.faces)
    isolated = ~np.any(n != 0.0, axis=1)
    if isolated.any():
        warnings.warn(f"{int(isolated.sum())} isolated vertices given zero normals", stacklevel=2)
    return TriMesh(m.vertices.copy(), m.faces.copy(), n, m.material_id)


def split_faces(m: TriMesh) -> TriMesh:
    """Unweld `m` so every face owns its three vertices; normals become face normals."""
    v = m.vertices[m.faces].reshape(-1, 3)
    f = np.arange(len(v)).reshape(-1, 3)
    return compute_normals(TriMesh(v, f, np.zeros_like(v), m.material_id))


# -- primitives ---------------------------------------------------------------

def _icosahedron():
    t = (1.0 + 5.0**0.5) / 2.0
    v = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
        dtype=np.float64,
    )
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _midpoint_split(v, f):
    edges, inverse = unique_edges(f)
    mids = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    e = inverse.reshape(-1, 3) + len(v)
    return np.vstack([v, mids]), _split_faces_4(f, e)


def _split_faces_4(f, e):
    # e[:, 0] is edge (f0, f1), e[:, 1] is (f1, f2), e[:, 2] is (f2, f0)
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    ab, bc, ca = e[:, 0], e[:, 1], e[:, 2]
    return np.concatenate(
        [np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1), np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)]
    )


def make_primitive(kind: str, size: float = 1.0, subdiv: int = 0, rings: int = 8, sides: int = 6) -> TriMesh:
    """Closed, outward-wound primitive centred at the origin.

    kind is one of ``"icosphere"`` (radius `size`, `subdiv` midpoint splits),
    ``"box"`` (half-extent `size`) or ``"torus"`` (outer radius `size`, axis +y).
    """
    if size <= 0:
        raise ValueError(f"size must be positive, got {size}")
    if kind == "icosphere":
        if subdiv < 0:
            raise ValueError(f"subdiv must be >= 0, got {subdiv}")
        v, f = _icosahedron()
        for _ in range(subdiv):
            v, f = _midpoint_split(v, f)
        return TriMesh(v * size, f)
    if kind == "box":
        v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
        f = np.array(
            [[0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],  # -x, +x
             [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],  # -y, +y
             [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]],  # -z, +z
            dtype=np.int64,
        )
        return TriMesh(v * size, f)
    if kind == "torus":
        if rings < 3 or sides < 3:
            raise ValueError(f"torus needs rings >= 3 and sides >= 3, got ({rings}, {sides})")
        major, minor = 0.7 * size, 0.3 * size
        u = 2 * np.pi * np.arange(rings) / rings
        w = 2 * np.pi * np.arange(sides) / sides
        uu, ww = np.meshgrid(u, w, indexing="ij")
        r = major + minor * np.cos(ww)
        v = np.stack([r * np.cos(uu), minor * np.sin(ww), r * np.sin(uu)], -1).reshape(-1, 3)
        i, j = np.meshgrid(np.arange(rings), np.arange(sides), indexing="ij")
        i, j = i.ravel(), j.ravel()
        p00 = i * sides + j
        p10 = ((i + 1) % rings) * sides + j
        p01 = i * sides + (j + 1) % sides
        p11 = ((i + 1) % rings) * sides + (j + 1) % sides
        f = np.concatenate([np.stack([p00, p01, p11], 1), np.stack([p00, p11, p10], 1)])
        return TriMesh(v, f)
    raise ValueError(f"unknown primitive kind {kind!r}")


def tessellate(m: TriMesh, levels: int = 1) -> TriMesh:
    """Split every face into four at its edge midpoints without moving any vertex."""
    v, f = m.vertices, m.faces
    for _ in range(levels):
        edges, inverse = unique_edges(f)
        mids = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
        e = inverse.reshape(-1, 3) + len(v)
        v, f = np.vstack([v, mids]), _split_faces_4(f, e)
    return TriMesh(v, f, material_id=m.material_id)


def make_ground(half_size: float = 10.0, height: float = 0.0) -> TriMesh:
    """Upward-facing square quad in the plane y = `height`."""
    h = half_size
    v = np.array([[-h, height, -h], [h, height, -h], [h, height, h], [-h, height, h]], dtype=np.float64)
    return TriMesh(v, np.array([[0, 2, 1], [0, 3, 2]]))


# -- topology -------------------------------------------------------------------

def unique_edges(faces: np.ndarray):
    """Undirected edges of `faces` and, for each face-edge, its index into them.

    Face-edge order is (f0, f1), (f1, f2), (f2, f0) per face.
    """
    fe = np.stack([faces, np.roll(faces, -1, axis=1)], axis=-1).reshape(-1, 2)
    fe = np.sort(fe, axis=1)
    edges, inverse = np.unique(fe, axis=0, return_inverse=True)
    return edges, inverse.ravel()


def euler_characteristic(m: TriMesh) -> int:
    edges, _ = unique_edges(m.faces)
    return m.n_vertices - len(edges) + m.n_faces


def is_closed_manifold(m: TriMesh) -> bool:
    _, inverse = unique_edges(m.faces)
    return bool(np.all(np.bincount(inverse) == 2))


def dihedral_angles(m: TriMesh) -> np.ndarray:
    """Angle between the normals of the two faces sharing each interior edge."""
    _, inverse = unique_edges(m.faces)
    fn = face_normals(m.vertices, m.faces)
    owner = np.repeat(np.arange(m.n_faces), 3)
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse)
    pairs = owner[order][np.repeat(counts == 2, counts)].reshape(-1, 2)
    cos = np.einsum("ij,ij->i", fn[pairs[:, 0]], fn[pairs[:, 1]])
    return np.arccos(np.clip(cos, -1.0, 1.0))


def loop_subdivide(m: TriMesh, levels: int = 1) -> TriMesh:
    """Loop subdivision of a closed triangle mesh, applied `levels` times."""
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    if levels == 0:
        return m.copy()
    v, f = m.vertices, m.faces
    for _ in range(levels):
        v, f = _loop_once(v, f)
    return TriMesh(v, f, material_id=m.material_id)


def _loop_once(v, f):
    edges, inverse = unique_edges(f)
    counts = np.bincount(inverse, minlength=len(edges))
    if np.any(counts != 2):
        bad = edges[np.argmax(counts != 2)]
        raise TopologyError(
            f"edge ({bad[0]}, {bad[1]}) is shared by {counts[np.argmax(counts != 2)]} faces; "
            "Loop subdivision needs a closed manifold"
        )
    # opposite vertex of each face-edge: (f0,f1)->f2, (f1,f2)->f0, (f2,f0)->f1
    opposite = np.roll(f, -2, axis=1).ravel()
    opp_sum = np.zeros((len(edges), 3))
    np.add.at(opp_sum, inverse, v[opposite])
    edge_pts = 0.375 * (v[edges[:, 0]] + v[edges[:, 1]]) + 0.125 * opp_sum

    nbr_sum = np.zeros_like(v)
    np.add.at(nbr_sum, edges[:, 0], v[edges[:, 1]])
    np.add.at(nbr_sum, edges[:, 1], v[edges[:, 0]])
    valence = np.bincount(edges.ravel(), minlength=len(v)).astype(np.float64)
    beta = (0.625 - (0.375 + 0.25 * np.cos(2 * np.pi / valence)) ** 2) / valence
    vert_pts = (1.0 - valence * beta)[:, None] * v + beta[:, None] * nbr_sum

    e = inverse.reshape(-1, 3) + len(v)
    return np.vstack([vert_pts, edge_pts]), _split_faces_4(f, e)


# -- roughening -----------------------------------------------------------------

def bounding_radius(m: TriMesh) -> float:
    """Radius of the sphere about the vertex centroid enclosing all vertices."""
    c = m.vertices.mean(axis=0)
    return float(np.linalg.norm(m.vertices - c, axis=1).max())


def perturb_vertices(m: TriMesh, sigma: float, seed: int) -> TriMesh:
    """Displace every vertex by an isotropic Gaussian of std `sigma`; normals recomputed."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return m.copy()
    rng = np.random.default_rng(seed)
    v = m.vertices + rng.normal(0.0, sigma, size=m.vertices.shape)
    return TriMesh(v, m.faces.copy(), material_id=m.material_id)


def make_r3dm(m: TriMesh, levels: int, sigma: float, seed: int) -> TriMesh:
    """Rough stand-in for a reconstructed mesh: Loop-subdivide, then add vertex noise."""
    return perturb_vertices(loop_subdivide(m, levels), sigma, seed)


# -- OBJ ------------------------------------------------------------------------

def write_obj(m: TriMesh, path) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in m.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in m.faces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_obj(path) -> TriMesh:
    """Read ``v`` and ``f`` records; polygons are fan-triangulated, other records ignored."""
    verts, faces = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
    return TriMesh(np.array(verts), np.array(faces, dtype=np.int64))
