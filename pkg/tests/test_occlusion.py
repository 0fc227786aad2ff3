import json

import numpy as np
import pytest
from scipy.ndimage import minimum_filter

from helpers import array_scene, rays_to_plane, segment_hits_sphere
from saproj.images import read_gray, read_png16
from saproj.occlusion import (
    NO_SURFACE,
    coverage_colors,
    coverage_map,
    render_illuminance,
    save_coverage,
    save_shadow,
    visible,
)
from saproj.scene import CapsuleOccluder, MeshTarget, PlaneTarget, SphereOccluder

FINGER = CapsuleOccluder([0, 0, 0.01], [0, 0, 0.3], 0.01)


def test_visible_examples():
    scene = array_scene(res=32, cam_res=16)
    proj = scene.projector(6)
    point = np.array([0.1, -0.05, 0.0])
    normal = np.array([0.0, 0.0, 1.0])
    assert visible(point, proj, (), normal)
    mid = 0.5 * (point + proj.position)
    assert not visible(point, proj, [SphereOccluder(mid, 1e-3)], normal)
    # back faces and points outside the frustum are not lit
    assert not visible(point, proj, (), -normal)
    assert not visible(np.array([3.0, 0.0, 0.0]), proj, ())


def test_visible_matches_segment_sampling():
    rng = np.random.default_rng(0)
    scene = array_scene(res=32, cam_res=16)
    proj = scene.projector(18)
    pts = np.column_stack([rng.uniform(-0.5, 0.5, 10_000), rng.uniform(-0.25, 0.25, 10_000), np.zeros(10_000)])
    t = rng.uniform(0.05, 0.95, 10_000)[:, None]
    centres = pts + t * (proj.position - pts) + rng.normal(0, 0.03, (10_000, 3))
    radii = rng.uniform(0.005, 0.05, 10_000)
    got = np.array([visible(p, proj, [SphereOccluder(c, r)]) for p, c, r in zip(pts, centres, radii)])
    s = np.linspace(0, 1, 1000)
    grazing = 0
    for k in range(10_000):
        samples = pts[k] + s[:, None] * (proj.position - pts[k])
        dist = np.linalg.norm(samples - centres[k], axis=1).min()
        if abs(dist - radii[k]) < 1e-3:
            grazing += 1
            continue
        assert got[k] == (dist >= radii[k])
    assert grazing < 500
    assert 1000 < (~got).sum() < 9000


def test_occluder_free_coverage_is_full():
    scene = array_scene(res=32, cam_res=32)
    cmap = coverage_map(scene)
    assert np.all(cmap.counts == 25)
    assert cmap.deficit() == 0
    single = scene.with_projectors([scene.projector(12)])
    assert np.all(coverage_map(single).counts == 1)


def test_off_surface_pixels_are_marked():
    scene = array_scene(res=32, cam_res=32, field=1.5)
    cmap = coverage_map(scene)
    assert np.any(cmap.counts == NO_SURFACE)
    assert np.all(cmap.counts[cmap.surface] >= 0)
    assert cmap.deficit() == int(np.sum(25 - cmap.counts[cmap.surface]))


def test_coverage_deficit_matches_ray_enumeration():
    ball = SphereOccluder([0.03, -0.02, 0.25], 0.04)
    scene = array_scene(res=32, cam_res=48, occluders=[ball])
    cmap = coverage_map(scene)
    cam = scene.camera
    pts = rays_to_plane(cam, cam.pixel_grid(), scene.target)
    blocked = sum(segment_hits_sphere(pts, p.position, ball.center, ball.radius).sum() for p in scene.projectors)
    assert cmap.deficit() == blocked
    assert cmap.counts.min() < 25


def test_centred_sphere_gives_symmetric_coverage():
    scene = array_scene(res=32, cam_res=64, occluders=[SphereOccluder([0, 0, 0.3], 0.05)])
    c = coverage_map(scene).counts
    assert c.min() < 25
    assert np.array_equal(c, c[:, ::-1]) and np.array_equal(c, c[::-1, :])


@pytest.fixture(scope="module")
def finger_reports():
    base = array_scene(res=64, cam_res=64, field=0.3, rows=3, cols=3)
    one = base.with_occluders([FINGER])
    two = base.with_occluders([FINGER, SphereOccluder([0.06, 0.04, 0.2], 0.02)])
    return {
        name: (coverage_map(s), render_illuminance(s, np.ones((64, 64))))
        for name, s in (("free", base), ("one", one), ("two", two))
    }


def test_no_occluder_means_no_shadow(finger_reports):
    _, rep = finger_reports["free"]
    assert np.all(rep.defined)
    assert np.array_equal(rep.illuminance, np.ones((64, 64)))
    assert rep.area_pixels == 0 and rep.area_m2 == 0.0


def test_adding_occluders_never_adds_light(finger_reports):
    (c0, r0), (c1, r1), (c2, r2) = (finger_reports[k] for k in ("free", "one", "two"))
    assert np.all(c1.counts <= c0.counts) and np.all(c2.counts <= c1.counts)
    both = r1.defined & r2.defined
    assert np.all(r2.illuminance[both] <= r1.illuminance[both] + 1e-12)
    assert r2.area_pixels >= r1.area_pixels
    assert c2.deficit() > c1.deficit() > 0


def test_single_projector_umbra():
    scene = array_scene(res=256, cam_res=64, field=0.3, occluders=[FINGER])
    single = scene.with_projectors([scene.projector(0)])
    rep = render_illuminance(single, np.ones((64, 64)))
    assert rep.min_illuminance == 0.0
    assert rep.area_pixels > 0 and rep.area_m2 > 0
    # the finger's own footprint hides the plane from the camera
    assert np.any(~rep.defined)
    assert np.all(np.isnan(rep.illuminance[~rep.defined]))


def test_full_coverage_means_full_light():
    scene = array_scene(res=512, cam_res=64, field=0.3, rows=3, cols=3, occluders=[FINGER])
    counts = coverage_map(scene).counts
    rep = render_illuminance(scene, np.ones((64, 64)))
    # projector pixels are finer than camera pixels; a camera pixel's light comes
    # from its one-pixel neighbourhood, so full coverage there means full light
    full = (minimum_filter(counts, size=3) == 9) & rep.defined
    assert full.sum() > 1000
    assert np.max(np.abs(rep.illuminance[full] - 1.0)) < 1e-9


def test_threshold_validation_and_precomputed_transports():
    scene = array_scene(res=32, cam_res=16, rows=2, cols=2, occluders=[FINGER])
    with pytest.raises(ValueError):
        render_illuminance(scene, np.ones((16, 16)), threshold=1.5)
    from saproj.transport import build_transports

    free = build_transports(scene.with_occluders(()), aligned=True)
    occ = build_transports(scene, include_occluders=True, aligned=True)
    a = render_illuminance(scene, np.ones((16, 16)))
    b = render_illuminance(scene, [np.ones((16, 16))] * 4, transports=(free, occ))
    assert np.array_equal(np.nan_to_num(a.illuminance, nan=-1), np.nan_to_num(b.illuminance, nan=-1))


def test_mesh_target_shadows_itself():
    # a wall standing on the plane, modelled as part of the target mesh
    verts = [[-0.5, -0.5, 0], [0.5, -0.5, 0], [0.5, 0.5, 0], [-0.5, 0.5, 0],
             [0.0, -0.5, 0.0], [0.0, 0.5, 0.0], [0.0, 0.5, 0.2], [0.0, -0.5, 0.2]]
    faces = [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]]
    normals = [[0, 0, 1]] * 4 + [[1, 0, 0]] * 4
    mesh = MeshTarget(np.array(verts, float), np.array(faces), np.array(normals, float))
    base = array_scene(res=16, cam_res=16, rows=1, cols=3)
    proj = base.projector(0)
    behind = np.array([0.05, 0.0, 0.0])
    assert not visible(behind, proj, (), [0, 0, 1], mesh)
    assert visible(np.array([-0.05, 0.0, 0.0]), proj, (), [0, 0, 1], mesh)
    plane = PlaneTarget([0, 0, 0], [1, 0, 0], [0, 1, 0], (1, 1))
    assert visible(behind, proj, (), [0, 0, 1], plane)


def test_coverage_export(tmp_path):
    scene = array_scene(res=16, cam_res=16, field=1.5, rows=2, cols=2,
                        occluders=[SphereOccluder([0, 0, 0.2], 0.05)])
    cmap = coverage_map(scene)
    legend = save_coverage(cmap, tmp_path)
    raw = read_png16(tmp_path / "coverage.png")
    assert np.array_equal(raw[cmap.surface], cmap.counts[cmap.surface])
    assert np.all(raw[~cmap.surface] == 65535)
    rows = (tmp_path / "coverage.csv").read_text().splitlines()
    assert rows[0] == "x,y,count" and len(rows) == 1 + 256
    assert json.loads((tmp_path / "coverage_legend.json").read_text()) == legend
    assert set(legend["counts"]) == {"0", "1", "2", "3", "4"}
    assert coverage_colors(4).shape == (5, 3)
    assert read_gray(tmp_path / "coverage_color.png").shape == (16, 16)


def test_shadow_export(tmp_path):
    thumb = CapsuleOccluder([0, 0, 0.02], [0, 0, 0.25], 0.03)
    scene = array_scene(res=128, cam_res=32, field=0.3, occluders=[thumb])
    scene = scene.with_projectors([scene.projector(0)])
    rep = render_illuminance(scene, np.ones((32, 32)))
    summary = save_shadow(rep, tmp_path, extra={"projectors": 1})
    on_disk = json.loads((tmp_path / "shadow.json").read_text())
    assert on_disk == summary
    assert on_disk["shadow_area_pixels"] == rep.area_pixels > 0
    assert on_disk["threshold"] == 0.5 and on_disk["projectors"] == 1
    mask = read_gray(tmp_path / "shadow_mask.png")
    assert np.array_equal(mask > 0.5, rep.mask)
