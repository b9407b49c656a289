import math

import numpy as np
import pytest

from advtex import geometry
from advtex.geometry import CameraSpec


def naive_matmul(a, b):
    out = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            for k in range(4):
                out[i, j] += a[i, k] * b[k, j]
    return out


def make_camera(**kw):
    defaults = dict(eye=(0.0, 0.0, 3.0), target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0),
                    fov=math.pi / 2, near=1.0, far=3.0, width=32, height=32)
    defaults.update(kw)
    return CameraSpec(**defaults)


class TestComposeMvp:
    def test_identity(self):
        eye = np.eye(4)
        np.testing.assert_array_equal(geometry.compose_mvp(eye, eye, eye), eye)

    def test_single_factor_passthrough(self):
        t = geometry.translation((1.0, 2.0, 3.0))
        np.testing.assert_array_equal(
            geometry.compose_mvp(np.eye(4), np.eye(4), t), t)

    def test_seeded_triple_against_naive_multiply(self):
        rng = np.random.default_rng(42)
        p, v, m = rng.normal(size=(3, 4, 4))
        expected = naive_matmul(naive_matmul(p, v), m)
        np.testing.assert_allclose(geometry.compose_mvp(p, v, m), expected, atol=1e-12)

    def test_associativity(self):
        rng = np.random.default_rng(7)
        p, v, m = rng.normal(size=(3, 4, 4))
        left = geometry.compose_mvp(p, v, m)
        right = p @ (v @ m)
        np.testing.assert_allclose(left, right, rtol=1e-12)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            geometry.compose_mvp(np.eye(3), np.eye(4), np.eye(4))


class TestToClip:
    def test_identity(self):
        np.testing.assert_array_equal(
            geometry.to_clip(np.eye(4), (0.5, -0.5, 2.0)),
            np.array([0.5, -0.5, 2.0, 1.0]))

    def test_pure_scaling(self):
        mvp = geometry.scaling(2.0)
        np.testing.assert_array_equal(
            geometry.to_clip(mvp, (1.0, 1.0, 1.0)), np.array([2.0, 2.0, 2.0, 1.0]))

    def test_seeded_against_naive_matvec(self):
        rng = np.random.default_rng(3)
        mvp = rng.normal(size=(4, 4))
        p = rng.normal(size=3)
        expected = np.zeros(4)
        hom = np.array([p[0], p[1], p[2], 1.0])
        for i in range(4):
            for k in range(4):
                expected[i] += mvp[i, k] * hom[k]
        np.testing.assert_allclose(geometry.to_clip(mvp, p), expected, atol=1e-13)

    def test_linearity_of_positional_part(self):
        rng = np.random.default_rng(11)
        mvp = rng.normal(size=(4, 4))
        p, q = rng.normal(size=(2, 3))
        a, b = 0.7, -1.3
        lin = geometry.to_clip(mvp, a * p + b * q)
        # affine in homogeneous form: subtract the contribution of w
        origin = geometry.to_clip(mvp, (0.0, 0.0, 0.0))
        lhs = lin - origin
        rhs = a * (geometry.to_clip(mvp, p) - origin) + b * (geometry.to_clip(mvp, q) - origin)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestPerspective:
    def test_unit_focal_entries_at_right_angle_fov(self):
        p = geometry.perspective(make_camera())
        assert p[0, 0] == pytest.approx(1.0)
        assert p[1, 1] == pytest.approx(1.0)

    def test_near_plane_maps_to_minus_one(self):
        cam = make_camera()
        p = geometry.perspective(cam)
        clip = p @ np.array([0.0, 0.0, -cam.near, 1.0])
        assert clip[2] / clip[3] == pytest.approx(-1.0)

    def test_far_plane_maps_to_plus_one(self):
        cam = make_camera()
        p = geometry.perspective(cam)
        clip = p @ np.array([0.0, 0.0, -cam.far, 1.0])
        assert clip[2] / clip[3] == pytest.approx(1.0)

    def test_round_trip_unproject(self):
        cam = make_camera()
        p = geometry.perspective(cam)
        inv = np.linalg.inv(p)
        rng = np.random.default_rng(5)
        for _ in range(20):
            # points inside the frustum: z in (-far, -near)
            z = -rng.uniform(cam.near + 0.05, cam.far - 0.05)
            x, y = rng.uniform(-0.4, 0.4, size=2) * abs(z)
            pt = np.array([x, y, z, 1.0])
            clip = p @ pt
            back = inv @ clip
            np.testing.assert_allclose(back[:3] / back[3], pt[:3], atol=1e-9)

    def test_rejects_bad_planes_and_fov(self):
        with pytest.raises(ValueError):
            make_camera(near=3.0, far=1.0)
        with pytest.raises(ValueError):
            make_camera(fov=0.0)
        with pytest.raises(ValueError):
            make_camera(fov=math.pi)


class TestLookAt:
    def test_canonical_pose_is_identity_rotation(self):
        cam = make_camera(eye=(0.0, 0.0, 0.0), target=(0.0, 0.0, -1.0))
        v = geometry.look_at(cam)
        np.testing.assert_allclose(v[:3, :3], np.eye(3), atol=1e-12)

    def test_translation_moves_origin_to_camera_space(self):
        cam = make_camera(eye=(0.0, 0.0, 5.0), target=(0.0, 0.0, 0.0))
        v = geometry.look_at(cam)
        np.testing.assert_allclose(v @ np.array([0, 0, 0, 1.0]),
                                   np.array([0, 0, -5.0, 1.0]), atol=1e-12)

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            eye = rng.normal(size=3) * 3
            target = rng.normal(size=3)
            if np.linalg.norm(target - eye) < 0.1:
                continue
            cam = make_camera(eye=tuple(eye), target=tuple(target))
            v = geometry.look_at(cam)
            np.testing.assert_allclose(v @ np.linalg.inv(v), np.eye(4), atol=1e-9)

    def test_rotation_block_is_orthonormal(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            cam = make_camera(eye=tuple(rng.normal(size=3) * 2 + np.array([0, 0, 4])))
            r = geometry.look_at(cam)[:3, :3]
            np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-9)

    def test_rejects_degenerate_up(self):
        with pytest.raises(ValueError):
            make_camera(up=(0.0, 0.0, -1.0))  # parallel to view direction


class TestHelpers:
    def test_rotation_axis_preserves_length(self):
        rng = np.random.default_rng(1)
        r = geometry.rotation_axis(rng.normal(size=3), 0.7)[:3, :3]
        v = rng.normal(size=3)
        assert np.linalg.norm(r @ v) == pytest.approx(np.linalg.norm(v))

    def test_rotation_zero_angle_is_identity(self):
        np.testing.assert_array_equal(
            geometry.rotation_axis((0, 1, 0), 0.0), np.eye(4))

    def test_model_matrix_order(self):
        m = geometry.model_matrix((1, 0, 0), (0, 0, 0), 2.0)
        np.testing.assert_allclose(m @ np.array([1, 0, 0, 1.0]),
                                   np.array([3, 0, 0, 1.0]))

    def test_normal_matrix_counteracts_scaling(self):
        model = geometry.scaling((2.0, 1.0, 1.0))
        nm = geometry.normal_matrix(model)
        n = nm @ np.array([1.0, 0.0, 0.0])
        n /= np.linalg.norm(n)
        np.testing.assert_allclose(n, [1.0, 0.0, 0.0])
