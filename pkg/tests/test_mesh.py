import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochch.mesh import (FeFunction, MeshError, adapt, adapt_marks, assemble_lumped_mass,
                          assemble_stiffness, build_uniform_mesh, evaluate, interpolate,
                          is_conforming, locate_points, point_locate, refine, transfer,
                          transfer_map)
from stochch.ch import Circle, tanh_profile


def _total_area(mesh):
    return mesh.areas.sum()


def test_uniform_counts():
    m1 = build_uniform_mesh(1)
    assert (m1.num_nodes, m1.num_triangles) == (4, 2)
    assert _total_area(m1) == pytest.approx(1.0, abs=1e-15)
    m2 = build_uniform_mesh(2)
    assert (m2.num_nodes, m2.num_triangles) == (9, 8)


def test_coarse_mesh_size_matches_h_max():
    m = build_uniform_mesh(64)
    np.testing.assert_allclose(m.sizes, 2.0**-6, rtol=1e-12)


def test_invalid_n():
    with pytest.raises(MeshError):
        build_uniform_mesh(0)


def test_stiffness_n1_oracle():
    # right isosceles triangle with unit legs: element stiffness
    # [[1, -1/2, -1/2], [-1/2, 1/2, 0], [-1/2, 0, 1/2]] at (right angle, ., .)
    m = build_uniform_mesh(1)
    A = assemble_stiffness(m).toarray()
    # nodes (0,0), (1,0), (0,1), (1,1); diagonal (0,0)-(1,1)
    # (1,0) and (0,1) are right-angle corners of a single triangle
    assert A[1, 1] == pytest.approx(1.0, abs=1e-14)
    assert A[2, 2] == pytest.approx(1.0, abs=1e-14)
    assert A[0, 0] == pytest.approx(1.0, abs=1e-14)  # two 45-degree corners, 1/2 each
    np.testing.assert_allclose(A, A.T, atol=0)
    np.testing.assert_allclose(A.sum(axis=1), 0.0, atol=1e-14)


def test_stiffness_psd():
    m = build_uniform_mesh(6)
    A = assemble_stiffness(m)
    X = np.random.default_rng(1).standard_normal((m.num_nodes, 1000))
    q = np.einsum("ij,ij->j", X, A @ X)
    assert q.min() >= -1e-12


def test_lumped_mass_n1():
    m = assemble_lumped_mass(build_uniform_mesh(1))
    np.testing.assert_allclose(m, [1 / 3, 1 / 6, 1 / 6, 1 / 3], atol=1e-15)
    assert m.sum() == pytest.approx(1.0)


def test_interpolate_constant_and_linear():
    mesh = build_uniform_mesh(5)
    c = interpolate(lambda x: 3.25, mesh)
    assert np.all(c.values == 3.25)
    lin = interpolate(lambda x: x[:, 0], mesh)
    pts = np.random.default_rng(2).random((200, 2))
    np.testing.assert_allclose(evaluate(lin, pts), pts[:, 0], atol=1e-13)


def test_interpolate_tanh_range():
    mesh = build_uniform_mesh(16)
    u = interpolate(tanh_profile(Circle(), 1 / (64 * np.pi)), mesh)
    # tanh rounds to exactly +-1 in double precision far from the interface
    assert np.all(np.abs(u.values) <= 1.0)
    assert u.values.min() < 0 < u.values.max()


def test_fefunction_rejects_bad_values():
    mesh = build_uniform_mesh(1)
    with pytest.raises(ValueError):
        FeFunction(mesh, np.zeros(3))
    with pytest.raises(ValueError):
        FeFunction(mesh, [0, 0, np.nan, 0])


def test_refine_empty_is_identity():
    mesh = build_uniform_mesh(3)
    new, tmap = refine(mesh, [])
    assert new is mesh
    np.testing.assert_array_equal(tmap.source, np.arange(mesh.num_nodes))


def test_refine_all_grows():
    mesh = build_uniform_mesh(3)
    new, _ = refine(mesh, range(mesh.num_triangles))
    assert new.num_nodes > mesh.num_nodes
    assert _total_area(new) == pytest.approx(1.0, abs=1e-12)
    assert is_conforming(new)


def test_repeated_refinement_keeps_min_angle():
    mesh = build_uniform_mesh(4)
    a0 = mesh.min_angle()
    rng = np.random.default_rng(3)
    for _ in range(6):
        marked = rng.choice(mesh.num_triangles, size=max(1, mesh.num_triangles // 5),
                            replace=False)
        mesh, _ = refine(mesh, marked)
        assert mesh.min_angle() >= a0 - 1e-12
        assert is_conforming(mesh)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=30),
       st.lists(st.integers(0, 10_000), max_size=30))
def test_refine_coarsen_invariants(ref_seed, coa_seed):
    mesh = build_uniform_mesh(3)
    mesh, _ = refine(mesh, [r % mesh.num_triangles for r in ref_seed])
    mesh, _ = refine(mesh, [r % mesh.num_triangles for r in ref_seed[::2]])
    new, tmap = adapt(mesh, [], [c % mesh.num_triangles for c in coa_seed])
    for m in (mesh, new):
        assert abs(_total_area(m) - 1.0) <= 1e-12
        assert is_conforming(m)
        A = assemble_stiffness(m)
        assert np.abs(A @ np.ones(m.num_nodes)).max() <= 1e-13
    lin = interpolate(lambda x: 2 * x[:, 0] - x[:, 1], mesh)
    out = transfer(lin, mesh, new, tmap)
    np.testing.assert_allclose(out.values, 2 * new.nodes[:, 0] - new.nodes[:, 1], atol=1e-14)


def test_adapt_marks_constant_and_equal_sizes():
    mesh = build_uniform_mesh(8)
    X = FeFunction(mesh, np.full(mesh.num_nodes, 0.3))
    ref, coa = adapt_marks(X, X, 0.05, 1 / 64, 1 / 8)
    assert ref.size == 0
    u = interpolate(tanh_profile(Circle(), 0.02), mesh)
    ref, coa = adapt_marks(u, u, 0.02, 1 / 8, 1 / 8)
    assert ref.size == 0 and coa.size == 0


def test_adapt_marks_refines_band():
    eps = 1 / (16 * np.pi)
    mesh = build_uniform_mesh(16)
    u = interpolate(tanh_profile(Circle(), eps), mesh)
    ref, _ = adapt_marks(u, u, eps, np.pi / 4 * eps, 1 / 16)
    cent = mesh.nodes[mesh.triangles[ref]].mean(axis=1)
    d = np.abs(np.hypot(cent[:, 0] - 0.5, cent[:, 1] - 0.5) - 0.2)
    assert ref.size > 0
    assert d.max() < 6 * eps + 1 / 16


def test_transfer_preserves_range_and_constant_mass():
    mesh = build_uniform_mesh(4)
    fine, tmap = refine(mesh, range(0, mesh.num_triangles, 3))
    u = FeFunction(mesh, np.random.default_rng(4).random(mesh.num_nodes))
    v = transfer(u, mesh, fine, tmap)
    assert v.values.min() >= u.values.min() and v.values.max() <= u.values.max()
    c = transfer(FeFunction(mesh, np.full(mesh.num_nodes, 2.0)), mesh, fine)
    assert assemble_lumped_mass(fine) @ c.values == pytest.approx(2.0, abs=1e-14)
    same = transfer(u, mesh, mesh)
    np.testing.assert_array_equal(same.values, u.values)


def test_transfer_map_rejects_unrelated():
    with pytest.raises(MeshError):
        transfer_map(build_uniform_mesh(2), build_uniform_mesh(3))


def test_point_locate_node_and_centroid():
    mesh, _ = refine(build_uniform_mesh(3), [0, 5, 7])
    t, b = point_locate(mesh, mesh.nodes[5])
    assert 5 in mesh.triangles[t]
    assert b.max() == pytest.approx(1.0, abs=1e-12)
    for t in (0, 4, mesh.num_triangles - 1):
        c = mesh.nodes[mesh.triangles[t]].mean(axis=0)
        tt, b = point_locate(mesh, c)
        assert tt == t
        np.testing.assert_allclose(b, 1 / 3, atol=1e-12)


def test_locate_many_points_reproduces_x():
    mesh, _ = refine(build_uniform_mesh(8), range(0, 128, 2))
    pts = np.random.default_rng(5).random((10_000, 2))
    tri, bary = locate_points(mesh, pts)
    x = (bary * mesh.nodes[mesh.triangles[tri], 0]).sum(axis=1)
    np.testing.assert_allclose(x, pts[:, 0], atol=1e-12)


def test_locate_outside_raises():
    with pytest.raises(ValueError):
        point_locate(build_uniform_mesh(2), [1.5, 0.2])
