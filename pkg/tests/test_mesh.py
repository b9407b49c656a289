import numpy as np
import pytest

from advtex import mesh as meshmod
from advtex.mesh import (BakeMap, Mesh, MeshError, bake_backward, bake_vertex_colors,
                         load_mesh, load_texture, load_vertex_colors, save_texture,
                         save_vertex_colors)


def single_triangle(uvs):
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    normals = np.tile([0.0, 0.0, 1.0], (3, 1))
    return Mesh(vertices, np.array([[0, 1, 2]]), np.asarray(uvs, float), normals)


def uv_quad():
    vertices = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    uvs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    return Mesh(vertices, np.array([[0, 1, 2], [0, 2, 3]]), uvs, normals)


class TestMeshValidation:
    def test_face_index_out_of_range(self):
        with pytest.raises(MeshError, match="face index"):
            Mesh(np.zeros((2, 3)), np.array([[0, 1, 2]]), np.zeros((2, 2)),
                 np.tile([0, 0, 1.0], (2, 1)))

    def test_non_unit_normals(self):
        with pytest.raises(MeshError, match="unit length"):
            Mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float),
                 np.array([[0, 1, 2]]),
                 np.array([[0, 0], [1, 0], [0, 1]], float),
                 np.tile([0, 0, 2.0], (3, 1)))

    def test_degenerate_object_face(self):
        with pytest.raises(MeshError, match="degenerate"):
            Mesh(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float),
                 np.array([[0, 1, 2]]),
                 np.array([[0, 0], [1, 0], [0, 1]], float),
                 np.tile([0, 0, 1.0], (3, 1)))

    def test_uv_out_of_range(self):
        with pytest.raises(MeshError, match="uvs"):
            single_triangle([[0, 0], [1.5, 0], [0, 1]])


class TestBakeForward:
    def test_constant_color_triangle(self):
        m = single_triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        colors = np.tile([1.0, 0.0, 0.0], (3, 1))
        tex = bake_vertex_colors(m, colors, (8, 8))
        bake = BakeMap.build(m, (8, 8))
        covered = bake.texel_face >= 0
        assert covered.sum() > 0
        np.testing.assert_allclose(tex[covered], np.tile([1.0, 0.0, 0.0], (covered.sum(), 1)))
        np.testing.assert_allclose(tex[~covered], meshmod.FILL_COLOR)

    def test_centroid_texel_blends_equally(self):
        # triangle whose UV centroid lands exactly on the center texel of a
        # 3x3 texture: centroid of these UVs is (0.5, 0.5) = texel (1, 1)
        m = single_triangle([[0.5, 0.1], [0.2, 0.7], [0.8, 0.7]])
        colors = np.eye(3)  # red, green, blue
        tex = bake_vertex_colors(m, colors, (3, 3))
        np.testing.assert_allclose(tex[1, 1], [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_quad_against_bruteforce_texel_oracle(self):
        m = uv_quad()
        rng = np.random.default_rng(0)
        colors = rng.uniform(0, 1, (4, 3))
        tex = bake_vertex_colors(m, colors, (8, 8))
        bake = BakeMap.build(m, (8, 8))

        # independent per-texel point-in-triangle + barycentric solver;
        # on shared edges both faces interpolate to the same value, so an
        # inclusive containment test is enough
        for r in range(8):
            for c in range(8):
                p = np.array([(c + 0.5) / 8.0, (r + 0.5) / 8.0])
                hit = None
                for face in m.faces:
                    a, b, d = m.uvs[face]
                    det = (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0])
                    l1 = ((p[0] - a[0]) * (d[1] - a[1]) - (p[1] - a[1]) * (d[0] - a[0])) / det
                    l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) / det
                    l0 = 1.0 - l1 - l2
                    if min(l0, l1, l2) >= -1e-12:
                        hit = l0 * colors[face[0]] + l1 * colors[face[1]] + l2 * colors[face[2]]
                        break
                if hit is None:
                    assert bake.texel_face[r, c] == -1
                    np.testing.assert_allclose(tex[r, c], meshmod.FILL_COLOR)
                else:
                    np.testing.assert_allclose(tex[r, c], hit, atol=1e-12)

    def test_shared_edge_texels_covered_exactly_once(self):
        # the quad diagonal passes exactly through 8 texel centers
        bake = BakeMap.build(uv_quad(), (8, 8))
        assert (bake.texel_face >= 0).all()

    def test_linearity_on_covered_texels(self):
        m = uv_quad()
        rng = np.random.default_rng(1)
        c1 = rng.uniform(0, 1, (4, 3))
        c2 = rng.uniform(0, 1, (4, 3))
        a, b = 0.3, 0.7
        bake = BakeMap.build(m, (8, 8))
        covered = bake.texel_face >= 0
        mixed = bake.apply(a * c1 + b * c2)
        combo = a * bake.apply(c1) + b * bake.apply(c2)
        np.testing.assert_allclose(mixed[covered], combo[covered], atol=1e-6)

    def test_baked_values_stay_in_unit_interval(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            colors = np.random.default_rng(seed).uniform(0, 1, (4, 3))
            tex = bake_vertex_colors(uv_quad(), colors, (8, 8))
            assert tex.min() >= 0.0 and tex.max() <= 1.0

    def test_zero_area_uv_face_covering_texels_rejected(self):
        # collinear UVs along the diagonal of a 2x2 texture hit texel centers
        m = single_triangle([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
        with pytest.raises(MeshError, match="face 0 has zero UV area"):
            BakeMap.build(m, (2, 2))


class TestBakeBackward:
    def test_zero_gradient(self):
        g = bake_backward(uv_quad(), np.zeros((8, 8, 3)))
        np.testing.assert_array_equal(g, 0.0)

    def test_single_texel_known_barycentrics(self):
        # vertices placed so the sole texel center of a 1x1 texture gets
        # barycentric weights (0.5, 0.3, 0.2)
        m = single_triangle([[0.44, 0.1], [0.6, 0.9], [0.5, 0.9]])
        bake = BakeMap.build(m, (1, 1))
        assert bake.texel_face[0, 0] == 0
        np.testing.assert_allclose(bake.texel_bary[0, 0], [0.5, 0.3, 0.2], atol=1e-12)
        g = bake.backward(np.ones((1, 1, 3)))
        np.testing.assert_allclose(g, [[0.5] * 3, [0.3] * 3, [0.2] * 3], atol=1e-12)

    def test_matches_finite_differences(self):
        m = uv_quad()
        rng = np.random.default_rng(3)
        colors = rng.uniform(0.2, 0.8, (4, 3))
        d_tex = rng.normal(size=(8, 8, 3))
        analytic = bake_backward(m, d_tex)
        eps = 1e-5
        numeric = np.zeros_like(colors)
        for i in range(4):
            for ch in range(3):
                cp, cm = colors.copy(), colors.copy()
                cp[i, ch] += eps
                cm[i, ch] -= eps
                fp = np.sum(bake_vertex_colors(m, cp, (8, 8)) * d_tex)
                fm = np.sum(bake_vertex_colors(m, cm, (8, 8)) * d_tex)
                numeric[i, ch] = (fp - fm) / (2 * eps)
        rel = np.abs(analytic - numeric).max() / np.abs(numeric).max()
        assert rel < 1e-4

    def test_adjoint_identity(self):
        m = uv_quad()
        rng = np.random.default_rng(4)
        colors = rng.uniform(0, 1, (4, 3))
        g = rng.normal(size=(8, 8, 3))
        bake = BakeMap.build(m, (8, 8))
        covered = bake.texel_face >= 0
        lhs = float(np.sum((bake.apply(colors) * g)[covered]))
        rhs = float(np.sum(colors * bake.backward(g)))
        assert abs(lhs - rhs) / abs(rhs) < 1e-6

    def test_fill_texels_leak_no_gradient(self):
        m = single_triangle([[0.0, 0.0], [0.4, 0.0], [0.0, 0.4]])
        bake = BakeMap.build(m, (8, 8))
        g = np.zeros((8, 8, 3))
        g[bake.texel_face < 0] = 100.0  # gradient only on fill texels
        np.testing.assert_array_equal(bake.backward(g), 0.0)


OBJ_QUAD = """\
# unit quad
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
vn 0 0 1
f 1/1/1 2/2/1 3/3/1
f 1/1/1 3/3/1 4/4/1
"""


class TestMeshIO:
    def test_load_quad_fixture(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text(OBJ_QUAD)
        m = load_mesh(path)
        assert m.num_vertices == 4
        assert m.num_faces == 2

    def test_face_index_out_of_range_names_line(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 1/1/1\n")
        with pytest.raises(MeshError, match=r"bad\.obj:4.*index 2 out of range"):
            load_mesh(path)

    def test_unsupported_directive_is_hard_error(self, tmp_path):
        path = tmp_path / "mtl.obj"
        path.write_text("mtllib foo.mtl\nv 0 0 0\n")
        with pytest.raises(MeshError, match=r"mtl\.obj:1.*unsupported"):
            load_mesh(path)

    def test_non_triplet_corner_rejected(self, tmp_path):
        path = tmp_path / "pair.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1 2/1 3/1\n")
        with pytest.raises(MeshError, match="not v/vt/vn"):
            load_mesh(path)

    def test_save_load_round_trip(self, tmp_path):
        from advtex.mesh import save_mesh_obj
        path = tmp_path / "quad.obj"
        path.write_text(OBJ_QUAD)
        m = load_mesh(path)
        save_mesh_obj(m, tmp_path / "again.obj")
        m2 = load_mesh(tmp_path / "again.obj")
        np.testing.assert_allclose(m2.vertices, m.vertices)
        np.testing.assert_array_equal(m2.faces, m.faces)

    def test_texture_round_trip_is_bit_identical(self, tmp_path):
        rng = np.random.default_rng(5)
        tex = rng.uniform(0, 1, (6, 5, 3)).astype(np.float32).astype(float)
        save_texture(tex, tmp_path / "t.ppm")
        back = load_texture(tmp_path / "t.ppm")
        np.testing.assert_array_equal(back, tex)

    def test_ppm_header(self, tmp_path):
        save_texture(np.zeros((4, 7, 3)), tmp_path / "t.ppm")
        data = (tmp_path / "t.ppm").read_bytes()
        assert data.startswith(b"P6\n7 4\n255\n")
        assert len(data) == len(b"P6\n7 4\n255\n") + 4 * 7 * 3

    def test_vertex_colors_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        colors = rng.uniform(0, 1, (9, 3)).astype(np.float32).astype(float)
        save_vertex_colors(colors, tmp_path / "c.vcol")
        np.testing.assert_array_equal(load_vertex_colors(tmp_path / "c.vcol"), colors)
