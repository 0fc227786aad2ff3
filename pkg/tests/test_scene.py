import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from helpers import ARRAY_HEIGHT, array_scene, camera, coaxial_scene, rays_to_plane, table
from saproj.geometry import polygon_area, quad_is_convex
from saproj.scene import (
    BehindCameraError,
    CameraModel,
    MeshTarget,
    PlaneTarget,
    ProjectorModel,
    Scene,
    back_project,
    camera_pixel_areas,
    footprints,
    look_at,
    make_grid_array,
    pixel_footprint,
    project_point,
)


def origin_device():
    rot = look_at([0, 0, 0], [0, 0, -1])
    return CameraModel(rot, [0, 0, 0], (1.0, 1.0), (0.0, 0.0), (4, 4))


def test_on_axis_point_hits_principal_point():
    assert np.allclose(project_point(origin_device(), [0, 0, -1]), [0, 0], atol=1e-15)


def test_similar_triangles():
    assert np.allclose(project_point(origin_device(), [1, 0, -1]), [1, 0], atol=1e-15)


def test_point_behind_device_raises():
    with pytest.raises(BehindCameraError):
        project_point(origin_device(), [0, 0, 1])
    with pytest.raises(BehindCameraError):
        project_point(origin_device(), [0, 0, 0])


def test_round_trip_over_random_poses():
    rng = np.random.default_rng(0)
    rots = Rotation.random(1000, random_state=1).as_matrix()
    worst = 0.0
    for rot in rots:
        f = rng.uniform(50, 2000, 2)
        res = rng.integers(16, 2048, 2)
        c = rng.uniform(0, 1, 2) * res
        dev = ProjectorModel(rot, rng.normal(0, 2, 3), tuple(f), tuple(c), tuple(res))
        px = rng.uniform(0, 1, 2) * res
        world = back_project(dev, px, rng.uniform(0.1, 10))
        worst = max(worst, float(np.max(np.abs(project_point(dev, world) - px))))
    assert worst < 1e-9


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-5, 5), st.floats(-5, 5), st.floats(0.5, 5),
    st.floats(0.0, 1.0), st.floats(0.0, 1.0),
)
def test_back_projected_point_has_requested_depth(x, y, z, u, v):
    dev = ProjectorModel(look_at([x, y, z], [0, 0, 0]), [x, y, z], (300, 300), (64, 48), (128, 96))
    world = back_project(dev, (u * 128, v * 96), 2.5)
    assert dev.to_device(world)[2] == pytest.approx(2.5, abs=1e-12)


def test_device_validation():
    rot = np.eye(3)
    with pytest.raises(ValueError):
        CameraModel(rot, [0, 0, 1], (0.0, 1.0), (0, 0), (4, 4))
    with pytest.raises(ValueError):
        CameraModel(rot, [0, 0, 1], (1.0, 1.0), (0, 0), (1, 4))
    with pytest.raises(ValueError):
        CameraModel(rot * 2, [0, 0, 1], (1.0, 1.0), (0, 0), (4, 4))
    with pytest.raises(ValueError):
        ProjectorModel(rot, [0, 0, 1], (1.0, 1.0), (0, 0), (4, 4), max_output=0.0)


# -- grid arrays ----------------------------------------------------------------


def test_single_projector_is_perpendicular():
    (p,) = make_grid_array(1, 1, 0.3, ARRAY_HEIGHT, table())
    assert np.allclose(p.position, [0, 0, ARRAY_HEIGHT])
    assert np.allclose(p.forward, [0, 0, -1], atol=1e-12)


def test_two_by_two_rays_meet_at_centre():
    projs = make_grid_array(2, 2, 0.4, 1.1, table())
    assert len(projs) == 4
    for p in projs:
        to_centre = -p.position
        off_axis = to_centre - np.dot(to_centre, p.forward) * p.forward
        assert np.linalg.norm(off_axis) < 1e-9
        # the principal point sees the centre too
        assert np.allclose(project_point(p, [0, 0, 0]), p.principal, atol=1e-9)


def test_five_by_five_layout():
    projs = make_grid_array(5, 5, 0.3, ARRAY_HEIGHT, table())
    assert [p.id for p in projs] == list(range(25))
    assert np.allclose(projs[12].forward, [0, 0, -1], atol=1e-12)
    for k in (0, 4, 20, 24):
        p = projs[k]
        # corner projectors lean in: their forward axis points back over the centre
        assert np.dot(p.forward[:2], p.position[:2]) < 0
    xs = sorted({round(p.position[0], 9) for p in projs})
    assert np.allclose(np.diff(xs), 0.3)


def test_parallel_array_and_bad_arguments():
    projs = make_grid_array(2, 3, 0.2, 1.0, table(), parallel=True)
    assert all(np.allclose(p.forward, [0, 0, -1]) for p in projs)
    with pytest.raises(ValueError):
        make_grid_array(0, 2, 0.2, 1.0, table())
    with pytest.raises(ValueError):
        make_grid_array(2, 2, -0.2, 1.0, table())


def test_scene_validation():
    t = table()
    cam = camera()
    p = make_grid_array(1, 1, 0.3, 1.0, t)[0]
    below = ProjectorModel(p.rotation, [0, 0, -1.0], p.focal, p.principal, p.resolution, id=1)
    with pytest.raises(ValueError):
        Scene([p, below], t, cam)
    with pytest.raises(ValueError):
        Scene([p, p], t, cam)
    with pytest.raises(ValueError):
        Scene([], t, cam)
    with pytest.raises(ValueError):
        Scene([p], t, cam, attenuation="cubic")


def test_reference_projector_is_central():
    assert array_scene(res=32).reference_projector().id == 12
    assert array_scene(res=32, rows=2, cols=2).reference_projector().id == 0


# -- footprints -------------------------------------------------------------------


def test_coaxial_footprint_is_the_camera_pixel():
    scene = coaxial_scene(16)
    quad = pixel_footprint(scene.projector(0), (3, 5), scene)
    assert np.allclose(quad, [[3, 5], [4, 5], [4, 6], [3, 6]], atol=1e-9)


def test_double_pitch_footprint_covers_two_by_two():
    scene = coaxial_scene(16)
    cam = scene.camera
    f = cam.focal[0] / 2
    proj = ProjectorModel(cam.rotation, cam.position, (f, f), (4.0, 4.0), (8, 8))
    s = Scene([proj], scene.target, cam)
    quad = pixel_footprint(proj, (2, 1), s)
    assert np.allclose(quad, [[4, 2], [6, 2], [6, 4], [4, 4]], atol=1e-9)


def oblique_scene():
    t = PlaneTarget([0, 0, 0], [1, 0, 0], [0, 1, 0], (3.0, 3.0))
    pos = np.array([-1.0, 0.0, 1.0])
    proj = ProjectorModel(look_at(pos, [0, 0, 0]), pos, (200, 200), (32, 32), (64, 64))
    cam = CameraModel(look_at([0, 0, 1.5], [0, 0, 0]), [0, 0, 1.5], (300, 300), (64, 64), (128, 128))
    return Scene([proj], t, cam)


def test_oblique_footprint_area_matches_ray_sampling():
    scene = oblique_scene()
    proj, cam, plane = scene.projectors[0], scene.camera, scene.target
    rng = np.random.default_rng(1)

    def to_camera(uv):
        return cam.project(rays_to_plane(proj, uv, plane))[0]

    for pixel in [(32, 32), (10, 40), (50, 12)]:
        quad = pixel_footprint(proj, pixel, scene)
        # Monte-Carlo area: mean Jacobian determinant of the pixel-to-camera map
        s = pixel + rng.uniform(0, 1, (4000, 2))
        h = 1e-4
        du = (to_camera(s + [h, 0]) - to_camera(s - [h, 0])) / (2 * h)
        dv = (to_camera(s + [0, h]) - to_camera(s - [0, h])) / (2 * h)
        mc = np.mean(np.abs(du[:, 0] * dv[:, 1] - du[:, 1] * dv[:, 0]))
        area = polygon_area(quad[None])[0]
        assert abs(area - mc) / mc < 0.01


def test_off_target_pixel_has_no_footprint():
    scene = coaxial_scene(16)
    small = PlaneTarget([0, 0, 0], [1, 0, 0], [0, 1, 0], (0.1, 0.1))
    s = Scene(scene.projectors, small, scene.camera)
    assert pixel_footprint(s.projector(0), (0, 0), s) is None
    with pytest.raises(ValueError):
        pixel_footprint(s.projector(0), (16, 0), s)


@pytest.fixture(scope="module")
def footprint_areas():
    scene = array_scene(res=32, cam_res=64)
    out = {}
    for p in scene.projectors:
        fp = footprints(scene, p)
        a = np.zeros(fp.valid.shape)
        a[fp.valid] = polygon_area(fp.quads[fp.valid])
        out[p.id] = (a, fp)
    return out


def test_footprints_follow_array_mirror_symmetry(footprint_areas):
    # the table is 2:1, so the symmetry group is the two mirrors (and their product)
    for r in range(5):
        for c in range(5):
            a = footprint_areas[5 * r + c][0]
            assert np.allclose(a[:, ::-1], footprint_areas[5 * r + (4 - c)][0], atol=1e-6)
            assert np.allclose(a[::-1, :], footprint_areas[5 * (4 - r) + c][0], atol=1e-6)


def test_footprints_convex_with_positive_area(footprint_areas):
    for a, fp in footprint_areas.values():
        assert fp.valid.any()
        assert np.all(a[fp.valid] > 0)
        assert np.all(quad_is_convex(fp.quads[fp.valid]))


def test_camera_pixel_areas_tile_the_field():
    scene = array_scene(res=16, cam_res=32)
    areas = camera_pixel_areas(scene)
    assert areas.sum() == pytest.approx(0.56 * 0.56, rel=1e-9)


def test_mesh_target_matches_plane():
    verts = np.array([[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]], dtype=float)
    mesh = MeshTarget(verts, [[0, 1, 2], [0, 2, 3]])
    plane = PlaneTarget([0, 0, 0], [1, 0, 0], [0, 1, 0], (2, 2))
    rng = np.random.default_rng(2)
    o = np.column_stack([rng.uniform(-0.9, 0.9, (50, 2)), np.ones(50)])
    d = np.tile([0.05, -0.02, -1.0], (50, 1))
    t1, p1, n1, h1 = mesh.intersect(o, d)
    t2, p2, n2, h2 = plane.intersect(o, d)
    assert np.array_equal(h1, h2)
    assert np.allclose(p1[h1], p2[h2], atol=1e-12)
    assert np.allclose(n1[h1], [0, 0, 1])
    with pytest.raises(ValueError):
        MeshTarget(verts, [[0, 1, 7]])
