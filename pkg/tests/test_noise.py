import numpy as np
import pytest

from stochch.mesh import assemble_lumped_mass, build_uniform_mesh, refine, transfer_map
from stochch.noise import (SMOOTH, WHITE, NoiseSpec, generate_path, interpolate_path,
                           read_archive, refine_time_grid, restrict_to_mesh,
                           sample_smooth_increment, sample_white_increment, standard_normals,
                           write_archive)


def test_smooth_zero_coefficients_give_zero():
    mesh = build_uniform_mesh(4)
    spec = NoiseSpec(SMOOTH, modes=1)
    dW = sample_smooth_increment(spec, mesh, 1e-3, 0, dbeta=np.zeros((1, 1)))
    assert np.all(dW.values == 0.0)


def test_smooth_same_seed_bitwise():
    mesh = build_uniform_mesh(8)
    spec = NoiseSpec(SMOOTH, modes=64, seed=11)
    a = sample_smooth_increment(spec, mesh, 1e-4, 7)
    b = sample_smooth_increment(spec, mesh, 1e-4, 7)
    assert a.values.tobytes() == b.values.tobytes()
    c = sample_smooth_increment(spec, mesh, 1e-4, 8)
    assert not np.array_equal(a.values, c.values)


def test_smooth_nodal_variance_matches_series():
    # cos^2(2 pi k / 4) is 1 for even k and 0 for odd k, so with K modes
    # Var = (1/4) * (K/2)^2 * k at the node (0.25, 0.25)
    K, k, n_samples = 16, 1e-3, 10_000
    mesh = build_uniform_mesh(16)
    node = int(np.flatnonzero(np.all(np.isclose(mesh.nodes, 0.25), axis=1))[0])
    spec = NoiseSpec(SMOOTH, modes=K, seed=3, normalize_mean=False)
    vals = np.array([sample_smooth_increment(spec, mesh, k, j).values[node]
                     for j in range(n_samples)])
    expected = 0.25 * (K // 2) ** 2 * k
    assert vals.var(ddof=1) == pytest.approx(expected, rel=0.05)


def test_white_mean_zero_and_constant_forcing():
    mesh = build_uniform_mesh(8)
    m = assemble_lumped_mass(mesh)
    spec = NoiseSpec(WHITE, seed=5)
    for j in range(20):
        assert abs(m @ sample_white_increment(spec, mesh, 1e-3, j).values) <= 1e-13
    # boundary patches are smaller, so force dbeta_l = c sqrt(m_l) to make every
    # scaled coefficient equal
    dW = sample_white_increment(spec, mesh, 1e-3, 0, dbeta=0.7 * np.sqrt(m))
    np.testing.assert_allclose(dW.values, 0.0, atol=1e-14)


def test_white_norm_linear_in_node_count():
    k, n_samples = 1e-3, 2000
    counts, means = [], []
    for n in (4, 8, 16):
        mesh = build_uniform_mesh(n)
        m = assemble_lumped_mass(mesh)
        spec = NoiseSpec(WHITE, seed=n, normalize_mean=False)
        sq = [m @ sample_white_increment(spec, mesh, k, j).values ** 2 for j in range(n_samples)]
        counts.append(mesh.num_nodes)
        means.append(np.mean(sq))
    slope = np.polyfit(counts, means, 1)[0]
    assert slope == pytest.approx(k, rel=0.05)


def test_white_lag_one_autocorrelation():
    mesh = build_uniform_mesh(2)
    spec = NoiseSpec(WHITE, seed=9, normalize_mean=False)
    x = np.array([sample_white_increment(spec, mesh, 1.0, j).values[4] for j in range(10_000)])
    x = (x - x.mean()) / x.std()
    r1 = np.mean(x[1:] * x[:-1])
    assert abs(r1) <= 3 / np.sqrt(len(x))


def test_counter_based_normals_independent_of_order():
    a = standard_normals(1, 5, 10)
    standard_normals(1, 4, 10)
    assert a.tobytes() == standard_normals(1, 5, 10).tobytes()


@pytest.mark.parametrize("variant", [SMOOTH, WHITE])
def test_interpolate_path_halves_and_telescopes(variant):
    mesh = build_uniform_mesh(4)
    path = generate_path(NoiseSpec(variant, modes=4, seed=2), mesh, 1e-3, 6)
    fine = interpolate_path(path, 2)
    assert fine.n_steps == 12 and fine.k == pytest.approx(5e-4)
    for j in range(6):
        c = path.increment(j, mesh).values
        np.testing.assert_allclose(fine.increment(2 * j, mesh).values, c / 2, atol=1e-15)
        np.testing.assert_allclose(fine.increment(2 * j + 1, mesh).values, c / 2, atol=1e-15)
    ten = interpolate_path(path, 10)
    total = sum(ten.increment(j, mesh).values for j in range(60))
    whole = sum(path.increment(j, mesh).values for j in range(6))
    np.testing.assert_allclose(total, whole, atol=1e-13)
    assert interpolate_path(path, 1) is path


def test_lazy_path_matches_materialized():
    mesh = build_uniform_mesh(4)
    spec = NoiseSpec(SMOOTH, modes=8, seed=4)
    lazy = refine_time_grid(generate_path(spec, None, 1e-3, 5, lazy=True), 2.5e-4)
    eager = interpolate_path(generate_path(spec, None, 1e-3, 5), 4)
    for j in range(20):
        assert lazy.increment(j, mesh).values.tobytes() == eager.increment(j, mesh).values.tobytes()
    with pytest.raises(ValueError):
        refine_time_grid(lazy, 1e-4 * 0.3)


def test_restrict_smooth_roundtrip_and_refined_evaluation():
    coarse = build_uniform_mesh(4)
    fine, _ = refine(coarse, range(0, 32, 2))
    spec = NoiseSpec(SMOOTH, modes=8, seed=1)
    path = generate_path(spec, coarse, 1e-3, 3)
    back = restrict_to_mesh(restrict_to_mesh(path, fine), coarse)
    for j in range(3):
        assert back.increment(j).values.tobytes() == path.increment(j).values.tobytes()
        direct = sample_smooth_increment(spec, fine, 1e-3, j, dbeta=path.blocks[j])
        np.testing.assert_allclose(restrict_to_mesh(path, fine).increment(j).values,
                                   direct.values, atol=1e-13)


def test_restrict_white_zero_and_mean():
    coarse = build_uniform_mesh(4)
    fine, tmap = refine(coarse, [1, 2, 3])
    zero = generate_path(NoiseSpec(WHITE), coarse, 1e-3, 2)
    zero = type(zero)(zero.spec, zero.k, 2, coarse, (np.zeros(25), np.zeros(25)))
    out = restrict_to_mesh(zero, fine, transfer_map(coarse, fine))
    assert all(np.all(out.increment(j).values == 0) for j in range(2))
    path = generate_path(NoiseSpec(WHITE, seed=3), coarse, 1e-3, 2)
    m = assemble_lumped_mass(fine)
    res = restrict_to_mesh(path, fine, tmap)
    assert abs(m @ res.increment(1).values) < 1e-14


@pytest.mark.parametrize("variant", [SMOOTH, WHITE])
def test_archive_roundtrip(tmp_path, variant):
    mesh = build_uniform_mesh(4)
    path = generate_path(NoiseSpec(variant, modes=6, seed=8), mesh, 2e-4, 4)
    write_archive(path, tmp_path / "p.bin")
    back = read_archive(tmp_path / "p.bin", mesh)
    assert back.spec == path.spec and back.k == path.k and back.n_steps == 4
    for j in range(4):
        assert back.increment(j, mesh).values.tobytes() == path.increment(j, mesh).values.tobytes()
    if variant == WHITE:
        with pytest.raises(ValueError):
            read_archive(tmp_path / "p.bin", build_uniform_mesh(5))


def test_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("pink")
    with pytest.raises(ValueError):
        NoiseSpec(SMOOTH, modes=0)
    with pytest.raises(ValueError):
        generate_path(NoiseSpec(WHITE), None, 1e-3, 2)
