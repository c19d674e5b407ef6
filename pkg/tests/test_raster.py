import numpy as np
import pytest

from meshforge import shapes
from meshforge.camera import Camera
from meshforge.mesh import Mesh
from meshforge.render import decode_normals, rasterize
from meshforge.render.kernels import available_backends


def front_camera(size=64, radius=2.0, fov_deg=90.0):
    return Camera(
        azimuth=0.0,
        elevation=0.0,
        radius=radius,
        fov_y=np.deg2rad(fov_deg),
        width=size,
        height=size,
    )


def test_empty_scene():
    cam = Camera(azimuth=0.0, elevation=0.0, radius=2.0, width=32, height=32,
                 look_at=(0.0, 0.0, 100.0))
    buffers = rasterize(shapes.cube(), cam)
    assert not buffers.mask.any()
    assert (buffers.depth == np.inf).all()
    assert (buffers.face_id == -1).all()


def test_quad_center_depth():
    # unit quad at z = 0, camera on +z at radius 2, fovY 90: depth 2 at center
    buffers = rasterize(shapes.quad(), front_camera(64))
    assert buffers.mask[32, 32]
    assert buffers.depth[32, 32] == pytest.approx(2.0, abs=1e-4)


def test_mask_iff_depth_finite_iff_faceid():
    buffers = rasterize(shapes.icosphere(2), front_camera(64, fov_deg=60))
    covered = buffers.face_id >= 0
    assert np.array_equal(covered, np.isfinite(buffers.depth))
    assert np.array_equal(covered, buffers.mask)


def test_barycentrics_nonneg_and_sum_one():
    buffers = rasterize(shapes.icosphere(2), front_camera(64, fov_deg=60))
    b = buffers.barycentrics[buffers.mask]
    assert (b >= 0).all()
    assert np.abs(b.sum(axis=1) - 1.0).max() < 1e-6


def test_covered_normals_unit_length():
    buffers = rasterize(shapes.icosphere(2), front_camera(64, fov_deg=60))
    n = decode_normals(buffers.normal[buffers.mask])
    assert np.abs(np.linalg.norm(n, axis=1) - 1.0).max() < 1e-5


def test_normals_face_camera():
    # two-sided rendering flips normals toward the eye: camera-space z > 0
    buffers = rasterize(shapes.icosphere(2), front_camera(64, fov_deg=60))
    n = decode_normals(buffers.normal[buffers.mask])
    assert (n[:, 2] > 0).all()


def test_normal_encoding_round_trip(rng):
    n = rng.standard_normal((100, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    assert np.abs(decode_normals(n * 0.5 + 0.5) - n).max() < 1e-6


def test_projected_area_fraction():
    # analytic screen-space area of one projected triangle vs covered pixels
    size = 256
    cam = front_camera(size)
    tri = Mesh([[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [-0.5, 0.5, 0.0]], [[0, 1, 2]])
    buffers = rasterize(tri, cam)
    screen, _ = cam.project(tri.vertices)
    area_pixels = 0.5 * abs(
        (screen[1, 0] - screen[0, 0]) * (screen[2, 1] - screen[0, 1])
        - (screen[1, 1] - screen[0, 1]) * (screen[2, 0] - screen[0, 0])
    )
    covered = int(buffers.mask.sum())
    # boundary error is at most ~perimeter pixels; one pixel row of the bbox
    assert abs(covered - area_pixels) < 3.0 * size


def test_depth_monotone_when_closer():
    cam = front_camera(64)
    far = rasterize(shapes.quad(), cam)
    near = rasterize(shapes.quad(z=0.5), cam)
    both = far.mask & near.mask
    assert both.any()
    assert (near.depth[both] < far.depth[both]).all()


def test_two_sided_rendering():
    # flipped winding still draws
    quad = shapes.quad()
    flipped = Mesh(quad.vertices, quad.faces[:, ::-1])
    buffers = rasterize(flipped, front_camera(32))
    assert buffers.mask.any()
    n = decode_normals(buffers.normal[buffers.mask])
    assert (n[:, 2] > 0).all()


def test_determinism_bit_identical():
    mesh = shapes.icosphere(2)
    cam = front_camera(96, fov_deg=50)
    a = rasterize(mesh, cam)
    b = rasterize(mesh, cam)
    assert np.array_equal(a.face_id, b.face_id)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.barycentrics, b.barycentrics)
    assert np.array_equal(a.normal, b.normal)


def test_near_plane_faces_skipped():
    cam = front_camera(32)
    behind = Mesh([[0, 0, 5], [1, 0, 5], [0, 1, 5]], [[0, 1, 2]])  # behind eye at z=2
    buffers = rasterize(behind, cam)
    assert not buffers.mask.any()


def test_buffer_exports_round_trip(tmp_path, rng):
    from PIL import Image

    from meshforge.render import dump_array, load_array, save_depth_png, save_mask_png

    buffers = rasterize(shapes.icosphere(1), front_camera(32))
    save_mask_png(tmp_path / "mask.png", buffers.mask)
    back = np.asarray(Image.open(tmp_path / "mask.png"))
    assert np.array_equal(back > 0, buffers.mask)

    save_depth_png(tmp_path / "depth.png", buffers.depth)
    img = np.asarray(Image.open(tmp_path / "depth.png"))
    assert img.shape == (32, 32)
    assert (img[~buffers.mask] == 0).all()

    arr = rng.standard_normal((7, 5, 3))
    dump_array(tmp_path / "fixture.npy", arr)
    assert np.array_equal(load_array(tmp_path / "fixture.npy"), arr)


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernel not built")
def test_backend_parity_bit_identical(rng):
    mesh = shapes.blob(subdivisions=2, seed=11)
    cam = Camera(azimuth=0.7, elevation=0.3, radius=2.6, width=128, height=96,
                 fov_y=np.deg2rad(48))
    pure = rasterize(mesh, cam, backend="pure")
    compiled = rasterize(mesh, cam, backend="compiled")
    assert np.array_equal(pure.face_id, compiled.face_id)
    assert np.array_equal(pure.depth, compiled.depth)
    assert np.array_equal(pure.barycentrics, compiled.barycentrics)
