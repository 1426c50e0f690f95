"""Layered ray-cast renderer producing diffuse, shading, reflection and specular elements.

For every pixel the beauty image is exactly::

    I = D * S + R * R_l + alpha2

with D the albedo, S ambient plus shadowed Lambertian lighting, R the
material's reflection strength, R_l the albedo times shading seen along the
mirror direction, and alpha2 a Blinn-Phong specular term. All layers are
linear and un-tonemapped.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numba
import numpy as np

# TBB shipped with some distributions is too old for numba; OpenMP is always present.
numba.config.THREADING_LAYER = "omp"

from .mesh import TriMesh, face_normals

HIT_EPS = 1e-6
SURFACE_OFFSET = 1e-4
LEAF_SIZE = 4


@dataclass(frozen=True)
class Material:
    albedo: tuple = (0.8, 0.8, 0.8)
    reflect_strength: float = 0.0
    specular_exponent: float = 32.0
    specular_scale: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.albedo, dtype=np.float64)
        if a.shape != (3,) or np.any(a < 0) or np.any(a > 1):
            raise ValueError(f"albedo must be an RGB triple in [0, 1], got {self.albedo}")
        if not 0.0 <= self.reflect_strength <= 1.0:
            raise ValueError(f"reflect_strength must be in [0, 1], got {self.reflect_strength}")
        if self.specular_exponent <= 0:
            raise ValueError("specular_exponent must be positive")
        if self.specular_scale < 0:
            raise ValueError("specular_scale must be >= 0")


@dataclass(frozen=True)
class Light:
    """A point light (`vector` is its position) or a directional light.

    For directional lights `vector` is the unit direction pointing from the
    surface towards the light. Point lights fall off with inverse square distance.
    """

    kind: str
    vector: tuple
    intensity: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("point", "directional"):
            raise ValueError(f"unknown light kind {self.kind!r}")
        if np.any(np.asarray(self.intensity) < 0):
            raise ValueError("light intensity must be >= 0")
        if self.kind == "directional" and abs(np.linalg.norm(self.vector) - 1.0) > 1e-9:
            raise ValueError("directional light vector must be unit length")


@dataclass(frozen=True)
class Camera:
    position: tuple
    look_at: tuple
    up: tuple = (0.0, 1.0, 0.0)
    vertical_fov: float = 40.0
    width: int = 64
    height: int = 64

    def basis(self):
        pos = np.asarray(self.position, dtype=np.float64)
        fwd = np.asarray(self.look_at, dtype=np.float64) - pos
        if not 0.0 < self.vertical_fov < 180.0:
            raise ValueError(f"vertical_fov must be in (0, 180), got {self.vertical_fov}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera resolution must be positive")
        norm = np.linalg.norm(fwd)
        if norm == 0:
            raise ValueError("camera position equals look_at")
        fwd /= norm
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            raise ValueError("camera up vector is parallel to the view direction")
        right /= np.linalg.norm(right)
        return pos, fwd, right, np.cross(right, fwd)

    def rays(self):
        """Unit ray directions for pixel centres, row 0 at the top; shape ``(H*W, 3)``."""
        pos, fwd, right, up = self.basis()
        half_h = math.tan(math.radians(self.vertical_fov) / 2.0)
        half_w = half_h * self.width / self.height
        ys = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * half_h
        xs = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * half_w
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        d = fwd + xx[..., None] * right + yy[..., None] * up
        d = d.reshape(-1, 3)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.broadcast_to(pos, d.shape).copy(), d


@dataclass(frozen=True)
class SceneObject:
    mesh: TriMesh
    material: Material
    smooth: bool = True  # interpolate vertex normals; False shades with face normals


@dataclass(frozen=True)
class Scene:
    objects: tuple
    lights: tuple = ()
    ambient: tuple = (0.0, 0.0, 0.0)
    target_object_index: int = 0

    def __post_init__(self):
        if not self.objects:
            raise ValueError("scene has no objects")
        if not 0 <= self.target_object_index < len(self.objects):
            raise ValueError(f"target_object_index {self.target_object_index} out of range")

    def with_target_mesh(self, mesh: TriMesh) -> "Scene":
        objs = list(self.objects)
        objs[self.target_object_index] = replace(objs[self.target_object_index], mesh=mesh)
        return replace(self, objects=tuple(objs))


@dataclass
class LayerSet:
    D: np.ndarray
    S: np.ndarray
    R: np.ndarray
    R_l: np.ndarray
    alpha2: np.ndarray
    I: np.ndarray
    M: np.ndarray
    S_rough: np.ndarray

    def composition_error(self) -> float:
        """Max absolute deviation of I from D*S + R*R_l + alpha2."""
        return float(np.abs(self.I - (self.D * self.S + self.R * self.R_l + self.alpha2)).max())


# -- intersection ---------------------------------------------------------------

@numba.njit(cache=True, inline="always")
def _tri_hit(ox, oy, oz, dx, dy, dz, v0, v1, v2):
    # Moller-Trumbore; returns (t, u, v) with t = inf on miss
    e1x, e1y, e1z = v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]
    e2x, e2y, e2z = v2[0] - v0[0], v2[1] - v0[1], v2[2] - v0[2]
    px, py, pz = dy * e2z - dz * e2y, dz * e2x - dx * e2z, dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-12:
        return np.inf, 0.0, 0.0
    inv = 1.0 / det
    sx, sy, sz = ox - v0[0], oy - v0[1], oz - v0[2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf, 0.0, 0.0
    qx, qy, qz = sy * e1z - sz * e1y, sz * e1x - sx * e1z, sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= HIT_EPS:
        return np.inf, 0.0, 0.0
    return t, u, v


def ray_triangle_intersect(origin, direction, tri):
    """Nearest intersection of one ray with one triangle.

    Returns ``(t, (b0, b1, b2))`` with barycentric weights of the three
    vertices, or ``None`` on a miss.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    v0, v1, v2 = (np.asarray(p, dtype=np.float64) for p in tri)
    t, u, v = _tri_hit(o[0], o[1], o[2], d[0], d[1], d[2], v0, v1, v2)
    if not np.isfinite(t):
        return None
    return t, (1.0 - u - v, u, v)


def intersect_brute_force(tris: np.ndarray, origins: np.ndarray, dirs: np.ndarray):
    """Vectorized nearest hit of every ray against every triangle in ``(T, 3, 3)`` `tris`."""
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    e1, e2 = v1 - v0, v2 - v0
    n = len(origins)
    best_t = np.full(n, np.inf)
    best_i = np.full(n, -1, dtype=np.int64)
    best_u = np.zeros(n)
    best_v = np.zeros(n)
    chunk = max(1, 2_000_000 // max(len(tris), 1))
    for s in range(0, n, chunk):
        o = origins[s:s + chunk, None, :]
        d = dirs[s:s + chunk, None, :]
        p = np.cross(d, e2[None])
        det = np.einsum("rtk,tk->rt", p, e1)
        ok = np.abs(det) >= 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        sv = o - v0[None]
        u = np.einsum("rtk,rtk->rt", sv, p) * inv
        q = np.cross(sv, e1[None])
        v = np.einsum("rtk,rtk->rt", np.broadcast_to(d, q.shape), q) * inv
        t = np.einsum("tk,rtk->rt", e2, q) * inv
        hit = ok & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > HIT_EPS)
        t = np.where(hit, t, np.inf)
        idx = np.argmin(t, axis=1)
        rows = np.arange(len(idx))
        bt = t[rows, idx]
        has = np.isfinite(bt)
        best_t[s:s + chunk] = bt
        best_i[s:s + chunk] = np.where(has, idx, -1)
        best_u[s:s + chunk] = np.where(has, u[rows, idx], 0.0)
        best_v[s:s + chunk] = np.where(has, v[rows, idx], 0.0)
    return best_t, best_i, best_u, best_v


# -- BVH --------------------------------------------------------------------------

@dataclass
class BVH:
    """Flattened median-split bounding volume hierarchy over a triangle soup.

    Node ``k`` is a leaf when ``count[k] > 0``; its triangles are
    ``order[start[k]:start[k] + count[k]]``. Interior nodes store their two
    children in ``left`` and ``right``.
    """

    tris: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.lo)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.count))

    def intersect(self, origins, dirs, tmax=None, any_hit=False):
        """Nearest hit per ray: ``(t, triangle index or -1, u, v, nodes visited)``."""
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        if tmax is None:
            tmax = np.full(len(origins), np.inf)
        return _traverse(
            origins, dirs, np.ascontiguousarray(tmax, dtype=np.float64), any_hit,
            self.lo, self.hi, self.left, self.right, self.start, self.count, self.order, self.tris,
        )


def build_bvh(scene_or_tris) -> BVH:
    """Build a BVH for a :class:`Scene` or a ``(T, 3, 3)`` triangle array.

    Nodes split at the median centroid along the longest centroid-bounds axis
    until at most four triangles remain.
    """
    tris = flatten_scene(scene_or_tris).tris if isinstance(scene_or_tris, Scene) else scene_or_tris
    tris = np.ascontiguousarray(tris, dtype=np.float64)
    if len(tris) == 0:
        raise ValueError("cannot build a BVH over zero triangles")
    lo, hi, left, right, start, count, order, n = _build_nodes(tris, LEAF_SIZE)
    return BVH(tris, lo[:n], hi[:n], left[:n], right[:n], start[:n], count[:n], order)


@numba.njit(cache=True)
def _build_nodes(tris, leaf_size):
    n_tri = tris.shape[0]
    cap = 2 * n_tri + 1
    lo = np.empty((cap, 3))
    hi = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    order = np.arange(n_tri)
    cent = np.empty((n_tri, 3))
    tmin = np.empty((n_tri, 3))
    tmax = np.empty((n_tri, 3))
    for i in range(n_tri):
        for ax in range(3):
            a, b, c = tris[i, 0, ax], tris[i, 1, ax], tris[i, 2, ax]
            cent[i, ax] = (a + b + c) / 3.0
            tmin[i, ax] = min(a, min(b, c))
            tmax[i, ax] = max(a, max(b, c))
    stack = np.empty((cap, 3), dtype=np.int64)
    n = 0
    sp = 0
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, n_tri
    n = 1
    sp = 1
    while sp > 0:
        sp -= 1
        k, a, b = stack[sp, 0], stack[sp, 1], stack[sp, 2]
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for ax in range(3):
            lo[k, ax] = np.inf
            hi[k, ax] = -np.inf
        for j in range(a, b):
            t = order[j]
            for ax in range(3):
                lo[k, ax] = min(lo[k, ax], tmin[t, ax])
                hi[k, ax] = max(hi[k, ax], tmax[t, ax])
                clo[ax] = min(clo[ax], cent[t, ax])
                chi[ax] = max(chi[ax], cent[t, ax])
        start[k] = a
        count[k] = b - a
        if b - a <= leaf_size:
            continue
        axis = 0
        for ax in range(1, 3):
            if chi[ax] - clo[ax] > chi[axis] - clo[axis]:
                axis = ax
        ids = order[a:b].copy()
        part = np.argsort(cent[ids, axis], kind="mergesort")
        for j in range(b - a):
            order[a + j] = ids[part[j]]
        m = a + (b - a) // 2
        lk, rk = n, n + 1
        n += 2
        left[k], right[k], count[k] = lk, rk, 0
        stack[sp, 0], stack[sp, 1], stack[sp, 2] = rk, m, b
        stack[sp + 1, 0], stack[sp + 1, 1], stack[sp + 1, 2] = lk, a, m
        sp += 2
    return lo, hi, left, right, start, count, order, n


@numba.njit(cache=True, inline="always")
def _box_hit(ox, oy, oz, ix, iy, iz, lo, hi, tmax):
    t0 = 0.0
    t1 = tmax
    for ax in range(3):
        o = ox if ax == 0 else (oy if ax == 1 else oz)
        inv = ix if ax == 0 else (iy if ax == 1 else iz)
        ta = (lo[ax] - o) * inv
        tb = (hi[ax] - o) * inv
        if ta > tb:
            ta, tb = tb, ta
        # nan arises from 0 * inf when the ray lies in a slab plane; treat as inside
        if ta == ta and ta > t0:
            t0 = ta
        if tb == tb and tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@numba.njit(cache=True, parallel=True)
def _traverse(origins, dirs, tmax, any_hit, lo, hi, left, right, start, count, order, tris):
    n = origins.shape[0]
    out_t = np.full(n, np.inf)
    out_i = np.full(n, -1, dtype=np.int64)
    out_u = np.zeros(n)
    out_v = np.zeros(n)
    visits = np.zeros(n, dtype=np.int64)
    for r in numba.prange(n):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        ix = 1.0 / dx if dx != 0.0 else np.inf
        iy = 1.0 / dy if dy != 0.0 else np.inf
        iz = 1.0 / dz if dz != 0.0 else np.inf
        best = tmax[r]
        best_i = -1
        bu = 0.0
        bv = 0.0
        stack = np.empty(64, dtype=np.int64)
        sp = 0
        stack[sp] = 0
        sp += 1
        nvis = 0
        while sp > 0:
            sp -= 1
            k = stack[sp]
            nvis += 1
            if not _box_hit(ox, oy, oz, ix, iy, iz, lo[k], hi[k], best):
                continue
            if count[k] > 0:
                for j in range(start[k], start[k] + count[k]):
                    ti = order[j]
                    t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, tris[ti, 0], tris[ti, 1], tris[ti, 2])
                    # ties go to the lower triangle index so results match brute force
                    if t < best or (t == best and best_i >= 0 and ti < best_i):
                        best = t
                        best_i = ti
                        bu = u
                        bv = v
                if any_hit and best_i >= 0:
                    break
            else:
                stack[sp] = right[k]
                stack[sp + 1] = left[k]
                sp += 2
        if best_i >= 0:
            out_t[r] = best
            out_i[r] = best_i
            out_u[r] = bu
            out_v[r] = bv
        visits[r] = nvis
    return out_t, out_i, out_u, out_v, visits


def set_render_threads(n: int | None = None) -> int:
    """Cap render parallelism at `n` (default: ``LIGHTXFER_THREADS`` or all cores)."""
    if n is None:
        n = int(os.environ.get("LIGHTXFER_THREADS", numba.config.NUMBA_NUM_THREADS))
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# -- scene flattening and shading -------------------------------------------------

@dataclass
class FlatScene:
    tris: np.ndarray      # (T, 3, 3) positions
    normals: np.ndarray   # (T, 3, 3) per-corner shading normals
    geo_normals: np.ndarray  # (T, 3)
    obj: np.ndarray       # (T,) object index
    albedo: np.ndarray    # (n_obj, 3)
    reflect: np.ndarray   # (n_obj,)
    spec_exp: np.ndarray
    spec_scale: np.ndarray


def flatten_scene(scene: Scene) -> FlatScene:
    tris, norms, geo, obj = [], [], [], []
    for k, so in enumerate(scene.objects):
        m = so.mesh
        gn = face_normals(m.vertices, m.faces)
        tris.append(m.vertices[m.faces])
        norms.append(m.normals[m.faces] if so.smooth else np.repeat(gn[:, None, :], 3, axis=1))
        geo.append(gn)
        obj.append(np.full(m.n_faces, k, dtype=np.int64))
    mats = [so.material for so in scene.objects]
    return FlatScene(
        tris=np.ascontiguousarray(np.concatenate(tris)),
        normals=np.concatenate(norms),
        geo_normals=np.concatenate(geo),
        obj=np.concatenate(obj),
        albedo=np.array([m.albedo for m in mats], dtype=np.float64),
        reflect=np.array([m.reflect_strength for m in mats], dtype=np.float64),
        spec_exp=np.array([m.specular_exponent for m in mats], dtype=np.float64),
        spec_scale=np.array([m.specular_scale for m in mats], dtype=np.float64),
    )


@dataclass
class _Hits:
    hit: np.ndarray   # bool (n,)
    pos: np.ndarray
    n: np.ndarray     # shading normal facing the incoming ray
    ng: np.ndarray    # geometric normal facing the incoming ray
    obj: np.ndarray   # object index or -1


def _resolve_hits(flat: FlatScene, bvh: BVH, origins, dirs) -> _Hits:
    t, tri, u, v, _ = bvh.intersect(origins, dirs)
    hit = tri >= 0
    ti = np.where(hit, tri, 0)
    w = np.stack([1.0 - u - v, u, v], axis=1)
    n = np.einsum("rk,rkc->rc", w, flat.normals[ti])
    ng = flat.geo_normals[ti].copy()
    flip = np.einsum("rc,rc->r", ng, dirs) > 0
    ng[flip] *= -1
    n[flip] *= -1
    length = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.where(length > 1e-12, n / np.where(length > 1e-12, length, 1.0), ng)
    pos = origins + np.where(hit, t, 0.0)[:, None] * dirs
    return _Hits(hit=hit, pos=pos, n=n, ng=ng, obj=np.where(hit, flat.obj[ti], -1))


def _shade(flat: FlatScene, bvh: BVH, scene: Scene, hits: _Hits, view_dirs, with_specular: bool):
    """Shading S and (optionally) the Blinn specular residual at hit points."""
    n_rays = len(hits.hit)
    S = np.zeros((n_rays, 3))
    spec = np.zeros((n_rays, 3))
    idx = np.flatnonzero(hits.hit)
    if idx.size == 0:
        return S, spec
    p = hits.pos[idx]
    nrm = hits.n[idx]
    origin = p + SURFACE_OFFSET * hits.ng[idx]
    S[idx] = np.asarray(scene.ambient, dtype=np.float64)
    obj = hits.obj[idx]
    for light in scene.lights:
        intensity = np.asarray(light.intensity, dtype=np.float64)
        if light.kind == "directional":
            ldir = np.broadcast_to(np.asarray(light.vector, dtype=np.float64), p.shape)
            dist = np.full(len(idx), np.inf)
            falloff = np.ones(len(idx))
        else:
            delta = np.asarray(light.vector, dtype=np.float64) - p
            dist = np.linalg.norm(delta, axis=1)
            ldir = delta / dist[:, None]
            falloff = 1.0 / dist**2
        _, blocker, _, _, _ = bvh.intersect(origin, ldir, tmax=dist, any_hit=True)
        vis = (blocker < 0).astype(np.float64) * falloff
        ndl = np.maximum(0.0, np.einsum("rc,rc->r", nrm, ldir))
        S[idx] += (ndl * vis)[:, None] * intensity
        if with_specular:
            h = ldir - view_dirs[idx]
            h /= np.linalg.norm(h, axis=1, keepdims=True)
            ndh = np.maximum(0.0, np.einsum("rc,rc->r", nrm, h))
            lobe = flat.spec_scale[obj] * ndh ** flat.spec_exp[obj]
            spec[idx] += (lobe * vis)[:, None] * intensity
    return S, spec


def _shading_only(scene: Scene, origins, dirs):
    flat = flatten_scene(scene)
    bvh = build_bvh(flat.tris)
    hits = _resolve_hits(flat, bvh, origins, dirs)
    S, _ = _shade(flat, bvh, scene, hits, dirs, with_specular=False)
    return S


def render_layers(scene: Scene, cam: Camera, substitute_rough: TriMesh | None = None) -> LayerSet:
    """Render every layer of `scene` seen through `cam`.

    With `substitute_rough`, ``S_rough`` is the shading of the same scene with
    the target object's mesh replaced; every other layer uses the original geometry.
    """
    origins, dirs = cam.rays()
    flat = flatten_scene(scene)
    bvh = build_bvh(flat.tris)
    hits = _resolve_hits(flat, bvh, origins, dirs)
    hit = hits.hit
    obj = np.where(hit, hits.obj, 0)

    S, alpha2 = _shade(flat, bvh, scene, hits, dirs, with_specular=True)
    D = np.where(hit[:, None], flat.albedo[obj], 0.0)
    R = np.where(hit, flat.reflect[obj], 0.0)[:, None] * np.ones(3)

    # one mirror bounce: albedo * shading at the secondary hit, black on miss
    refl = dirs - 2.0 * np.einsum("rc,rc->r", dirs, hits.n)[:, None] * hits.n
    refl /= np.linalg.norm(refl, axis=1, keepdims=True)
    r_origin = hits.pos + SURFACE_OFFSET * hits.ng
    sec = _resolve_hits(flat, bvh, r_origin, refl)
    sec.hit &= hit
    S2, _ = _shade(flat, bvh, scene, sec, refl, with_specular=False)
    R_l = np.where(sec.hit[:, None], flat.albedo[np.where(sec.hit, sec.obj, 0)], 0.0) * S2

    I = D * S + R * R_l + alpha2
    M = (hits.obj == scene.target_object_index).astype(np.float64)[:, None]
    if substitute_rough is None:
        S_rough = S.copy()
    else:
        S_rough = _shading_only(scene.with_target_mesh(substitute_rough), origins, dirs)

    shape3 = (cam.height, cam.width, 3)
    return LayerSet(
        D=D.reshape(shape3), S=S.reshape(shape3), R=R.reshape(shape3), R_l=R_l.reshape(shape3),
        alpha2=alpha2.reshape(shape3), I=I.reshape(shape3), M=M.reshape(cam.height, cam.width, 1),
        S_rough=S_rough.reshape(shape3),
    )


def perturb_lighting(scene: Scene, seed: int, energy_gain_range=(1.0, 1.0), position_jitter: float = 0.0) -> Scene:
    """Jitter every light's position (direction for directional lights) and scale its energy.

    Each light gets one gain drawn uniformly from `energy_gain_range`, applied
    to all channels, and an isotropic Gaussian jitter of std `position_jitter`.
    """
    lo, hi = energy_gain_range
    if not hi >= lo >= 1.0:
        raise ValueError(f"energy gain range must satisfy hi >= lo >= 1, got {energy_gain_range}")
    rng = np.random.default_rng(seed)
    lights = []
    for light in scene.lights:
        gain = rng.uniform(lo, hi)
        jitter = rng.normal(0.0, 1.0, 3) * position_jitter
        vec = np.asarray(light.vector, dtype=np.float64)
        if position_jitter > 0:
            vec = vec + jitter
            if light.kind == "directional":
                vec = vec / np.linalg.norm(vec)
        intensity = tuple(float(c) * gain for c in light.intensity)
        lights.append(Light(light.kind, tuple(float(c) for c in vec), intensity))
    return replace(scene, lights=tuple(lights))
