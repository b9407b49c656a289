import math

import numpy as np
import pytest

from advtex import gradcheck, render
from advtex.fixtures import micro_scenario, quad_mesh
from advtex.geometry import CameraSpec, compose_mvp, look_at, perspective
from advtex.mesh import Mesh
from advtex.render import Lighting, rasterize, render_foreground, shade


def tri_mesh(vertices, uvs=None):
    vertices = np.asarray(vertices, float)
    n = vertices.shape[0]
    uvs = np.asarray(uvs, float) if uvs is not None else np.tile([0.5, 0.5], (n, 1))
    faces = np.arange(n).reshape(-1, 3)
    return Mesh(vertices, faces, uvs, np.tile([0.0, 0.0, 1.0], (n, 1)))


def front_camera(size=8, z=2.0, fov=90.0):
    return CameraSpec(eye=(0, 0, z), target=(0, 0, 0), up=(0, 1, 0),
                      fov=math.radians(fov), near=0.5, far=10.0,
                      width=size, height=size)


def mvp_for(camera, model=None):
    model = np.eye(4) if model is None else model
    return compose_mvp(perspective(camera), look_at(camera), model)


AMBIENT_ONLY = Lighting(ambient=1.0, diffuse=0.0, reflectance=1.0, direction=(0, 0, 1))


class TestLighting:
    def test_direction_normalized(self):
        lit = Lighting(0.5, 0.5, 1.0, (0, 0, 2))
        assert np.linalg.norm(lit.direction) == pytest.approx(1.0)

    def test_negative_intensity_rejected(self):
        with pytest.raises(ValueError):
            Lighting(-0.1, 0.5, 1.0, (0, 0, 1))

    def test_reflectance_range(self):
        with pytest.raises(ValueError):
            Lighting(0.5, 0.5, 1.5, (0, 0, 1))


class TestRasterize:
    def test_full_screen_triangle_covers_everything(self):
        cam = front_camera(size=8, z=1.0)
        mesh = tri_mesh([[-20, -20, 0], [20, -20, 0], [0, 40, 0]])
        frags = rasterize(mesh, mvp_for(cam), (8, 8))
        assert (frags.face == 0).all()

    def test_z_buffer_prefers_near_face(self):
        cam = front_camera(size=8, z=2.0)
        mesh = tri_mesh([[-20, -20, 0], [20, -20, 0], [0, 40, 0],      # far (z=0)
                         [-20, -20, 1], [20, -20, 1], [0, 40, 1]])     # near (z=1)
        frags = rasterize(mesh, mvp_for(cam), (8, 8))
        assert (frags.face == 1).all()

    def test_fully_clipped_mesh_yields_empty_buffer(self):
        cam = front_camera()
        mesh = tri_mesh([[-1, 0, 8], [1, 0, 8], [0, 1, 8]])  # behind the camera
        frags = rasterize(mesh, mvp_for(cam), (8, 8))
        assert (frags.face == -1).all()

    def test_barycentrics_nonnegative_and_sum_to_one_on_covered(self):
        sc = micro_scenario()
        frame = sc.frames()[0]
        from advtex.compositing import align_parameters
        mvp, _ = align_parameters(frame)
        frags = rasterize(sc.target_mesh, mvp, frame.image_size)
        covered = frags.covered
        sums = frags.bary[covered].sum(axis=1)
        np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-6)
        assert frags.bary[covered].min() >= -1e-12

    def test_seeded_scene_matches_bruteforce_oracle(self):
        # brute force per pixel: inclusive point-in-triangle in screen space,
        # then pick the face with minimum interpolated depth
        rng = np.random.default_rng(8)
        cam = front_camera(size=16, z=3.0, fov=70.0)
        verts = rng.uniform(-1, 1, (12, 3))
        verts[:, 2] = rng.uniform(-0.5, 0.5, 12)
        mesh = tri_mesh(verts)
        mvp = mvp_for(cam)
        frags = rasterize(mesh, mvp, (16, 16))

        clip = (mvp @ np.c_[verts, np.ones(12)].T).T
        ndc = clip[:, :3] / clip[:, 3:4]
        sx = (ndc[:, 0] + 1) * 0.5 * 16
        sy = (1 - ndc[:, 1]) * 0.5 * 16
        for r in range(16):
            for c in range(16):
                px, py = c + 0.5, r + 0.5
                hits = []
                for f_idx, face in enumerate(mesh.faces):
                    xs, ys, zs = sx[face], sy[face], ndc[face, 2]
                    det = (xs[1] - xs[0]) * (ys[2] - ys[0]) - (ys[1] - ys[0]) * (xs[2] - xs[0])
                    if det == 0:
                        continue
                    l1 = ((px - xs[0]) * (ys[2] - ys[0]) - (py - ys[0]) * (xs[2] - xs[0])) / det
                    l2 = ((xs[1] - xs[0]) * (py - ys[0]) - (ys[1] - ys[0]) * (px - xs[0])) / det
                    l0 = 1 - l1 - l2
                    if min(l0, l1, l2) > 1e-9:  # strict interior only
                        hits.append((l0 * zs[0] + l1 * zs[1] + l2 * zs[2], f_idx))
                if not hits:
                    continue  # boundary/edge pixels are tie-break territory
                hits.sort()
                depth, face = hits[0]
                if len(hits) > 1 and hits[1][0] - depth < 1e-9:
                    continue
                assert frags.face[r, c] == face, (r, c)
                assert frags.depth[r, c] == pytest.approx(depth, abs=1e-9)

    def test_determinism(self):
        sc = micro_scenario()
        frame = sc.frames()[0]
        from advtex.compositing import align_parameters
        mvp, _ = align_parameters(frame)
        a = rasterize(sc.target_mesh, mvp, frame.image_size)
        b = rasterize(sc.target_mesh, mvp, frame.image_size)
        np.testing.assert_array_equal(a.face, b.face)
        np.testing.assert_array_equal(a.bary, b.bary)
        np.testing.assert_array_equal(a.depth, b.depth)


class TestShade:
    def _quad_frags(self, size=8):
        cam = front_camera(size=size, z=1.5)
        mesh = quad_mesh(2.0)
        return mesh, rasterize(mesh, mvp_for(cam), (size, size))

    def test_ambient_only_equals_bilinear_sample(self):
        mesh, frags = self._quad_frags()
        rng = np.random.default_rng(0)
        texture = rng.uniform(0.1, 0.9, (8, 8, 3))
        image, tape = shade(frags, texture, AMBIENT_ONLY)
        t_h = t_w = 8
        for r in range(8):
            for c in range(8):
                if frags.face[r, c] < 0:
                    continue
                u, v = frags.uv[r, c]
                x = u * t_w - 0.5
                y = v * t_h - 0.5
                x0, y0 = int(np.floor(x)), int(np.floor(y))
                fx, fy = x - x0, y - y0
                xs = np.clip([x0, x0 + 1], 0, t_w - 1)
                ys = np.clip([y0, y0 + 1], 0, t_h - 1)
                expected = ((1 - fx) * (1 - fy) * texture[ys[0], xs[0]]
                            + fx * (1 - fy) * texture[ys[0], xs[1]]
                            + (1 - fx) * fy * texture[ys[1], xs[0]]
                            + fx * fy * texture[ys[1], xs[1]])
                np.testing.assert_allclose(image[r, c], expected, atol=1e-12)

    def test_backlit_surface_is_black(self):
        mesh, frags = self._quad_frags()
        lit = Lighting(ambient=0.0, diffuse=1.0, reflectance=1.0, direction=(0, 0, -1))
        image, _ = shade(frags, np.ones((4, 4, 3)), lit)
        np.testing.assert_array_equal(image, 0.0)

    def test_perpendicular_light_clamps_to_zero(self):
        mesh, frags = self._quad_frags()
        lit = Lighting(ambient=0.0, diffuse=1.0, reflectance=1.0, direction=(1, 0, 0))
        image, _ = shade(frags, np.ones((4, 4, 3)), lit)
        np.testing.assert_array_equal(image, 0.0)

    def test_seeded_scene_matches_straightline_recomputation(self):
        sc = micro_scenario()
        frame = sc.frames()[0]
        from advtex.compositing import align_parameters
        mvp, lighting = align_parameters(frame)
        frags = rasterize(sc.target_mesh, mvp, frame.image_size,
                          model=frame.target_model)
        rng = np.random.default_rng(1)
        texture = rng.uniform(0, 1, (8, 8, 3))
        image, tape = shade(frags, texture, lighting)
        light = np.asarray(lighting.direction)
        for r in range(frame.image_size[0]):
            for c in range(frame.image_size[1]):
                if frags.face[r, c] < 0:
                    np.testing.assert_array_equal(image[r, c], 0.0)
                    continue
                lam = max(0.0, float(frags.normal[r, c] @ light))
                s = lighting.reflectance * (lighting.ambient + lighting.diffuse * lam)
                sample = sum(tape.texel_weights[r, c, k]
                             * texture[tape.texel_rows[r, c, k], tape.texel_cols[r, c, k]]
                             for k in range(4))
                np.testing.assert_allclose(image[r, c], np.clip(s * sample, 0, 1),
                                           atol=1e-12)


class TestRenderForeground:
    def test_white_colors_ambient_only_gives_white_pixels(self):
        from advtex.compositing import SceneFrame
        sc = micro_scenario()
        base = sc.frames()[0]
        frame = SceneFrame(t=0, target_mesh=base.target_mesh,
                           target_model=base.target_model,
                           target_clean_colors=base.target_clean_colors,
                           camera=base.camera, lighting=AMBIENT_ONLY,
                           texture_size=base.texture_size)
        colors = np.ones((sc.target_mesh.num_vertices, 3))
        image, tape = render_foreground(sc.target_mesh, colors, frame)
        covered = tape.frags.covered
        assert covered.any()
        np.testing.assert_allclose(image[covered],
                                   np.ones((covered.sum(), 3)), atol=1e-12)

    def test_black_colors_give_black_pixels(self):
        sc = micro_scenario()
        frame = sc.frames()[0]
        colors = np.zeros((sc.target_mesh.num_vertices, 3))
        image, _ = render_foreground(sc.target_mesh, colors, frame)
        np.testing.assert_array_equal(image, 0.0)

    def test_equals_manual_three_stage_composition(self):
        from advtex.compositing import align_parameters
        from advtex.mesh import bake_vertex_colors
        sc = micro_scenario()
        frame = sc.frames()[1]
        rng = np.random.default_rng(2)
        colors = rng.uniform(0, 1, (sc.target_mesh.num_vertices, 3))
        image, _ = render_foreground(sc.target_mesh, colors, frame)

        texture = bake_vertex_colors(sc.target_mesh, colors, frame.texture_size)
        mvp, lighting = align_parameters(frame)
        frags = rasterize(sc.target_mesh, mvp, frame.image_size,
                          model=frame.target_model)
        manual, _ = shade(frags, texture, lighting)
        np.testing.assert_array_equal(image, manual)

    def test_determinism_bit_identical(self):
        sc = micro_scenario()
        frame = sc.frames()[0]
        rng = np.random.default_rng(3)
        colors = rng.uniform(0, 1, (sc.target_mesh.num_vertices, 3))
        im1, _ = render_foreground(sc.target_mesh, colors, frame)
        im2, _ = render_foreground(sc.target_mesh, colors, frame)
        np.testing.assert_array_equal(im1, im2)


class TestRenderBackward:
    def test_zero_gradient_in_zero_gradient_out(self):
        sc = micro_scenario()
        frame = sc.frames()[0]
        colors = np.full((4, 3), 0.5)
        image, tape = render_foreground(sc.target_mesh, colors, frame)
        g = render.render_backward(tape, np.zeros_like(image))
        np.testing.assert_array_equal(g, 0.0)

    def test_shape_mismatch_rejected(self):
        sc = micro_scenario()
        frame = sc.frames()[0]
        _, tape = render_foreground(sc.target_mesh, np.full((4, 3), 0.5), frame)
        with pytest.raises(ValueError):
            render.render_backward(tape, np.zeros((3, 3, 3)))

    def test_matches_finite_differences(self):
        for seed in range(2):
            assert gradcheck.check_render_backward(seed) < gradcheck.RENDER_TOL

    def test_directional_adjoint_identity(self):
        sc = micro_scenario()
        frame = sc.frames()[0]
        mesh = sc.target_mesh
        rng = np.random.default_rng(4)
        colors = rng.uniform(0.2, 0.8, (mesh.num_vertices, 3))
        delta = rng.normal(size=colors.shape)
        g = rng.normal(size=(*frame.image_size, 3))
        eps = 1e-3
        img_p, _ = render_foreground(mesh, np.clip(colors + eps * delta, 0, 1), frame)
        img_m, _ = render_foreground(mesh, np.clip(colors - eps * delta, 0, 1), frame)
        lhs = float(np.sum((img_p - img_m) / (2 * eps) * g))
        _, tape = render_foreground(mesh, colors, frame)
        rhs = float(np.sum(delta * render.render_backward(tape, g)))
        assert abs(lhs - rhs) / max(abs(rhs), 1e-12) < 1e-4

    def test_single_pixel_gradient_lands_on_generating_vertices(self):
        # 1x1 image over a quad, ambient light, 1x1 texture: the bilinear
        # footprint is a single texel, so the whole pixel gradient must land
        # on that texel's face vertices with its barycentric weights
        from advtex.compositing import SceneFrame
        cam = front_camera(size=1, z=1.5)
        mesh = quad_mesh(2.0)
        frame = SceneFrame(t=0, target_mesh=mesh, target_model=np.eye(4),
                           target_clean_colors=np.full((4, 3), 0.5), camera=cam,
                           lighting=AMBIENT_ONLY, texture_size=(1, 1))
        colors = np.random.default_rng(7).uniform(0.2, 0.8, (4, 3))
        image, tape = render_foreground(mesh, colors, frame)
        assert tape.frags.covered.all()
        # all four footprint slots clamp to the single texel
        np.testing.assert_array_equal(tape.texel_rows[0, 0], 0)
        np.testing.assert_array_equal(tape.texel_cols[0, 0], 0)
        assert tape.texel_weights[0, 0].sum() == pytest.approx(1.0)
        d_image = np.zeros((1, 1, 3))
        d_image[0, 0] = 1.0
        grad = render.render_backward(tape, d_image)
        bake = tape.bake_map
        face = mesh.faces[bake.texel_face[0, 0]]
        shading = tape.shading[0, 0]
        expected = np.zeros((4, 3))
        for corner, weight in zip(face, bake.texel_bary[0, 0]):
            expected[corner] += shading * weight
        np.testing.assert_allclose(grad, expected, atol=1e-12)

    def test_gradient_sparsity_for_uncovered_faces(self):
        # second quad far outside the frustum: its vertices must get zero grad
        cam = front_camera(size=8, z=2.0)
        verts = np.array([[-0.5, -0.5, 0], [0.5, -0.5, 0], [0.5, 0.5, 0], [-0.5, 0.5, 0],
                          [50, 50, 0], [51, 50, 0], [51, 51, 0], [50, 51, 0]], float)
        uvs = np.array([[0, 0], [0.4, 0], [0.4, 0.4], [0, 0.4],
                        [0.6, 0.6], [1, 0.6], [1, 1], [0.6, 1]])
        faces = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
        mesh = Mesh(verts, faces, uvs, np.tile([0, 0, 1.0], (8, 1)))
        from advtex.compositing import SceneFrame
        frame = SceneFrame(t=0, target_mesh=mesh, target_model=np.eye(4),
                           target_clean_colors=np.full((8, 3), 0.5), camera=cam,
                           lighting=AMBIENT_ONLY, texture_size=(8, 8))
        rng = np.random.default_rng(5)
        colors = rng.uniform(0.2, 0.8, (8, 3))
        image, tape = render_foreground(mesh, colors, frame)
        g = render.render_backward(tape, rng.normal(size=image.shape))
        assert np.abs(g[:4]).max() > 0
        np.testing.assert_array_equal(g[4:], 0.0)
