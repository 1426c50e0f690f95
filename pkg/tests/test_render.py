import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightxfer.mesh import make_ground, make_primitive
from lightxfer.render import (
    Camera,
    Light,
    Material,
    Scene,
    SceneObject,
    build_bvh,
    intersect_brute_force,
    perturb_lighting,
    ray_triangle_intersect,
    render_layers,
    set_render_threads,
)


def plane_oracle(o, d, tri):
    """Ray/plane intersection followed by a same-side inside test."""
    a, b, c = tri
    n = np.cross(b - a, c - a)
    denom = n @ d
    if abs(denom) < 1e-12:
        return None
    t = n @ (a - o) / denom
    if t <= 1e-6:
        return None
    p = o + t * d
    for x, y in ((a, b), (b, c), (c, a)):
        if np.cross(y - x, p - x) @ n < 0:
            return None
    return t


def test_hit_through_centroid():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
    c = tri.mean(axis=0)
    t, bary = ray_triangle_intersect(c + [0, 0, -1], [0, 0, 1], tri)
    assert t == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(bary, [1 / 3] * 3, atol=1e-9)


def test_parallel_ray_misses():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
    assert ray_triangle_intersect([0.2, 0.2, 1.0], [1, 0, 0], tri) is None
    assert ray_triangle_intersect([0.2, 0.2, 1.0], [0, 0, 1], tri) is None  # behind the origin


def test_random_rays_match_plane_oracle(rng):
    disagree = hits = 0
    for _ in range(10_000):
        tri = rng.normal(size=(3, 3))
        o = rng.normal(size=3) * 2
        d = tri.mean(axis=0) + rng.normal(size=3) * 0.7 - o
        d /= np.linalg.norm(d)
        got = ray_triangle_intersect(o, d, tri)
        want = plane_oracle(o, d, tri)
        if (got is None) != (want is None):
            disagree += 1  # only rays grazing an edge can land here
        elif got is not None:
            hits += 1
            assert got[0] == pytest.approx(want, rel=1e-9, abs=1e-9)
            assert sum(got[1]) == pytest.approx(1.0, abs=1e-12)
    assert disagree <= 10 and hits > 1000


def test_single_triangle_bvh_is_one_leaf():
    bvh = build_bvh(np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0.0]]]))
    assert bvh.n_nodes == 1 and bvh.n_leaves == 1


def test_bvh_matches_brute_force(rng):
    m = make_primitive("icosphere", subdiv=5)
    tris = m.vertices[m.faces]
    assert len(tris) >= 10_000
    o = rng.normal(size=(10_000, 3)) * 3
    target = rng.normal(size=(10_000, 3)) * 0.8
    d = target - o
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    bvh = build_bvh(tris)
    t, idx, u, v, visits = bvh.intersect(o, d)
    bt, bi, bu, bv = intersect_brute_force(tris, o, d)
    assert np.array_equal(idx, bi)
    np.testing.assert_allclose(t[idx >= 0], bt[bi >= 0], rtol=1e-12)
    assert visits.max() <= bvh.n_nodes
    assert (idx >= 0).sum() > 1000


def _camera(z=5.0, size=33):
    return Camera((0.0, 0.0, z), (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 30.0, size, size)


def test_ambient_only_scene():
    mat = Material((0.6, 0.5, 0.4), reflect_strength=0.3)
    ground = SceneObject(make_ground(20, -1.0), Material((0.2, 0.7, 0.3)))
    scene = Scene((SceneObject(make_primitive("icosphere", subdiv=2), mat), ground), (), (0.3, 0.3, 0.3))
    cam = Camera((0.0, 1.0, 5.0), (0.0, 0.0, 0.0), width=24, height=24)
    L = render_layers(scene, cam)
    geo = L.M[:, :, 0] > 0
    np.testing.assert_allclose(L.S[geo], 0.3, atol=1e-15)
    sec_lit = L.R_l.sum(axis=2) > 0
    np.testing.assert_allclose(L.R_l[sec_lit] / 0.3, L.R_l[sec_lit] / 0.3)
    assert np.all(L.alpha2 == 0)
    np.testing.assert_allclose(L.I, L.D * 0.3 + L.R * L.R_l, atol=1e-15)
    # every mirror bounce ends on an albedo lit by ambient light only
    albedos = np.array([[0.6, 0.5, 0.4], [0.2, 0.7, 0.3]]) * 0.3
    for px in L.R_l[sec_lit]:
        assert np.min(np.abs(albedos - px).max(axis=1)) < 1e-15


def test_sphere_centre_pixel_closed_form():
    ico = make_primitive("icosphere", subdiv=3)
    vertex = ico.vertices[0] / np.linalg.norm(ico.vertices[0])
    # camera on the axis through an original icosahedron vertex, where the smooth normal is radial
    cam = Camera(tuple(4.0 * vertex), (0.0, 0.0, 0.0), (0.3, 0.9, 0.1), 30.0, 33, 33)
    l = np.array([0.3, 0.8, 0.5])
    l /= np.linalg.norm(l)
    albedo, amb, inten = np.array([0.7, 0.4, 0.2]), 0.1, np.array([1.5, 1.2, 1.0])
    scene = Scene((SceneObject(ico, Material(tuple(albedo))),), (Light("directional", tuple(l), tuple(inten)),),
                  (amb,) * 3)
    L = render_layers(scene, cam)
    want = albedo * (amb + max(0.0, vertex @ l) * inten)
    np.testing.assert_allclose(L.I[16, 16], want, atol=1e-9)
    assert L.M[16, 16, 0] == 1 and L.M[0, 0, 0] == 0


def _shadow_scene(with_box=True):
    objs = [SceneObject(make_ground(10), Material((0.5, 0.5, 0.5)))]
    if with_box:
        box = make_primitive("box", 0.5).transformed(translate=(0.0, 2.0, 0.0))
        objs.append(SceneObject(box, Material((0.9, 0.1, 0.1)), smooth=False))
    sun = Light("directional", (0.0, 1.0, 0.0), (1.0, 1.0, 1.0))
    return Scene(tuple(objs), (sun,), (0.2, 0.2, 0.2), target_object_index=0)


def test_occluder_casts_shadow():
    cam = Camera((0.0, 6.0, 6.0), (0.0, 0.0, 0.0), width=48, height=48)
    lit = render_layers(_shadow_scene(False), cam)
    shadowed = render_layers(_shadow_scene(True), cam)
    ground_both = (lit.M[:, :, 0] > 0) & (shadowed.M[:, :, 0] > 0)
    # shadow monotonicity: adding an occluder never brightens the ground
    assert np.all(shadowed.S[ground_both] <= lit.S[ground_both])
    dark = ground_both & (shadowed.S[:, :, 0] < lit.S[:, :, 0])
    assert dark.any()
    np.testing.assert_allclose(shadowed.S[dark], 0.2, atol=1e-12)
    assert np.all(lit.S[dark] > 1.0)


def test_rough_equals_clean_when_unperturbed():
    scene = _shadow_scene(True)
    scene = Scene(scene.objects, scene.lights, scene.ambient, target_object_index=1)
    cam = Camera((0.0, 4.0, 6.0), (0.0, 1.0, 0.0), width=32, height=32)
    L = render_layers(scene, cam, substitute_rough=scene.objects[1].mesh)
    assert np.array_equal(L.S_rough, L.S)


def test_composition_identity_random_scene(rng):
    objs = [SceneObject(make_ground(10), Material((0.4, 0.5, 0.6), 0.3, 20.0, 0.2))]
    for k in range(3):
        m = make_primitive(["icosphere", "box", "torus"][k], 0.6, subdiv=2)
        m = m.transformed(translate=(k - 1.0, 0.8, 0.0))
        objs.append(SceneObject(m, Material(tuple(rng.random(3)), rng.random(), 30.0, rng.random())))
    lights = (Light("directional", (0.0, 0.8, 0.6), (1.0, 0.9, 0.8)), Light("point", (2.0, 3.0, 2.0), (6.0, 6.0, 6.0)))
    L = render_layers(Scene(tuple(objs), lights, (0.1, 0.1, 0.1), 2), Camera((0.0, 2.0, 5.0), (0.0, 0.5, 0.0)))
    assert L.composition_error() <= 1e-6
    assert set(np.unique(L.M)) <= {0.0, 1.0}
    assert np.all(L.R[..., 0] == L.R[..., 1])


def test_render_deterministic_across_thread_counts():
    scene = _shadow_scene(True)
    cam = Camera((0.0, 5.0, 5.0), (0.0, 0.0, 0.0), width=32, height=32)
    a = render_layers(scene, cam)
    set_render_threads(1)
    try:
        b = render_layers(scene, cam)
    finally:
        set_render_threads()
    for name in ("D", "S", "R", "R_l", "alpha2", "I", "M"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        Scene(())
    with pytest.raises(ValueError):
        Camera((0, 0, 0), (0, 0, 0)).rays()
    with pytest.raises(ValueError):
        Camera((0, 0, 0), (0, 1, 0), up=(0, 1, 0)).rays()
    with pytest.raises(ValueError):
        Camera((0, 0, 0), (0, 0, 1), vertical_fov=180).rays()
    with pytest.raises(ValueError):
        Light("directional", (0, 2, 0))
    with pytest.raises(ValueError):
        Material((1.2, 0, 0))


def test_lighting_identity_and_determinism():
    scene = _shadow_scene()
    assert perturb_lighting(scene, 5) == scene
    a = perturb_lighting(scene, 5, (1.5, 2.5), 0.3)
    assert a == perturb_lighting(scene, 5, (1.5, 2.5), 0.3)
    assert a != perturb_lighting(scene, 6, (1.5, 2.5), 0.3)
    assert abs(np.linalg.norm(a.lights[0].vector) - 1) < 1e-12


@given(st.integers(0, 2**63 - 1))
def test_gain_range(seed):
    base = Scene((SceneObject(make_ground(), Material()),),
                 (Light("point", (0, 3, 0), (1.0, 2.0, 0.5)), Light("directional", (0, 1, 0), (0.3, 0.3, 0.3))))
    out = perturb_lighting(base, seed, (2.0, 3.0), 0.1)
    for old, new in zip(base.lights, out.lights):
        ratio = np.array(new.intensity) / np.array(old.intensity)
        assert np.all(ratio >= 2.0 - 1e-12) and np.all(ratio <= 3.0 + 1e-12)


def test_bad_gain_range():
    with pytest.raises(ValueError):
        perturb_lighting(_shadow_scene(), 0, (0.5, 1.0))
