import numpy as np
import pytest

import flowtopo as ft
from flowtopo.mesh import p1_at_quadrature, triangle_rule
from flowtopo.optimizer import (LineSearchResult, RunConfig, StagnationError,
                                line_search)


@pytest.fixture(scope="module")
def mesh8():
    return ft.build_unit_square_mesh(8)


def test_l2_inner_examples(mesh8):
    ones = np.ones(mesh8.n_vertices)
    assert abs(ft.l2_inner(mesh8, ones, ones) - 1.0) < 1e-14
    fx = mesh8.vertices[:, 0]
    assert abs(ft.l2_inner(mesh8, fx, ones) - 0.5) < 1e-14


def test_l2_inner_matches_dense_quadrature(mesh8):
    rng = np.random.default_rng(0)
    rule = triangle_rule(6)
    for _ in range(5):
        f = rng.standard_normal(mesh8.n_vertices)
        h = rng.standard_normal(mesh8.n_vertices)
        fq = p1_at_quadrature(mesh8, f, rule)
        hq = p1_at_quadrature(mesh8, h, rule)
        oracle = float(np.einsum("q,eq,e->", rule.weights, fq * hq,
                                 mesh8.det))
        assert abs(ft.l2_inner(mesh8, f, h) - oracle) < 1e-12


def test_theta_identities(mesh8):
    rng = np.random.default_rng(1)
    psi = rng.standard_normal(mesh8.n_vertices)
    psi /= ft.l2_norm(mesh8, psi)
    assert abs(ft.compute_theta(mesh8, 2.0 * psi, psi)) < 1e-7
    assert abs(ft.compute_theta(mesh8, -psi, psi) - np.pi) < 1e-7
    h = rng.standard_normal(mesh8.n_vertices)
    h = h - ft.l2_inner(mesh8, h, psi) * psi  # orthogonalize
    assert abs(ft.compute_theta(mesh8, h, psi) - np.pi / 2) < 1e-10


def test_theta_rejects_zero_norm(mesh8):
    psi = np.ones(mesh8.n_vertices)
    with pytest.raises(ValueError):
        ft.compute_theta(mesh8, np.zeros(mesh8.n_vertices), psi)


def test_slerp_endpoints_and_norm(mesh8):
    rng = np.random.default_rng(2)
    psi = rng.standard_normal(mesh8.n_vertices)
    psi /= ft.l2_norm(mesh8, psi)
    g = rng.standard_normal(mesh8.n_vertices)
    theta = ft.compute_theta(mesh8, g, psi)
    assert np.allclose(ft.slerp_update(mesh8, psi, g, theta, 0.0), psi,
                       atol=1e-12)
    g_unit = g / ft.l2_norm(mesh8, g)
    assert np.allclose(ft.slerp_update(mesh8, psi, g, theta, 1.0), g_unit,
                       atol=1e-12)
    for kappa in (0.25, 0.5, 0.75):
        out = ft.slerp_update(mesh8, psi, g, theta, kappa)
        assert abs(ft.l2_norm(mesh8, out) - 1.0) < 1e-10


def test_slerp_norm_preservation_random_pairs(mesh8):
    rng = np.random.default_rng(3)
    for _ in range(100):
        psi = rng.standard_normal(mesh8.n_vertices)
        psi /= ft.l2_norm(mesh8, psi)
        g = rng.standard_normal(mesh8.n_vertices)
        theta = ft.compute_theta(mesh8, g, psi)
        kappa = rng.random()
        out = ft.slerp_update(mesh8, psi, g, theta, kappa)
        assert abs(ft.l2_norm(mesh8, out) - 1.0) < 1e-10


def test_slerp_rejects_degenerate_angles(mesh8):
    psi = np.ones(mesh8.n_vertices)
    with pytest.raises(ValueError):
        ft.slerp_update(mesh8, psi, psi, 0.0, 0.5)
    with pytest.raises(ValueError):
        ft.slerp_update(mesh8, psi, -psi, np.pi, 0.5)


def test_fluid_volume_trivial(mesh8):
    assert abs(ft.fluid_volume(-np.ones(mesh8.n_vertices), mesh8) - 1.0) < 1e-14
    assert abs(ft.fluid_volume(np.ones(mesh8.n_vertices), mesh8)) < 1e-14
    psi = mesh8.vertices[:, 0] - 0.5
    assert abs(ft.fluid_volume(psi, mesh8) - 0.5) < 1e-14


def test_fluid_volume_halfplane_family(mesh16):
    x = mesh16.vertices[:, 0]
    for c in (0.15, 0.3, 0.77):
        assert abs(ft.fluid_volume(x - c, mesh16) - c) < 1e-12


def test_fluid_volume_matches_monte_carlo(mesh16):
    rng = np.random.default_rng(4)
    psi = rng.standard_normal(mesh16.n_vertices)
    exact = ft.fluid_volume(psi, mesh16)
    pts = rng.random((10_000_000, 2))
    n = mesh16.n_div
    x, y = pts[:, 0], pts[:, 1]
    i = np.minimum((x * n).astype(int), n - 1)
    j = np.minimum((y * n).astype(int), n - 1)
    xi, eta = x * n - i, y * n - j
    lower = eta <= xi
    tri = np.where(lower, 2 * (j * n + i), 2 * (j * n + i) + 1)
    bary = np.where(lower[:, None],
                    np.column_stack([1 - xi, xi - eta, eta]),
                    np.column_stack([1 - eta, xi, eta - xi]))
    vals = np.einsum("pk,pk->p", bary, psi[mesh16.triangles[tri]])
    mc = float((vals < 0.0).mean())
    assert abs(exact - mc) < 1e-3


def test_project_volume_shifts(mesh16):
    x = mesh16.vertices[:, 0]
    out = ft.project_volume(x - 0.3, mesh16, 0.5, 0.7)
    assert abs(ft.fluid_volume(out, mesh16) - 0.5) <= 1e-4
    assert abs(ft.l2_norm(mesh16, out) - 1.0) < 1e-10
    out = ft.project_volume(x - 0.8, mesh16, 0.5, 0.7)
    assert abs(ft.fluid_volume(out, mesh16) - 0.7) <= 1e-4
    assert abs(ft.l2_norm(mesh16, out) - 1.0) < 1e-10


def test_project_volume_admissible_unchanged(mesh16):
    psi = mesh16.vertices[:, 0] - 0.6
    out = ft.project_volume(psi, mesh16, 0.5, 0.7)
    assert np.array_equal(out, psi)


def test_project_volume_scaling_preserves_shape(mesh16):
    rng = np.random.default_rng(5)
    psi = rng.standard_normal(mesh16.n_vertices)
    out = ft.project_volume(psi, mesh16, 0.5, 0.7)
    vol = ft.fluid_volume(out, mesh16)
    assert abs(ft.fluid_volume(3.0 * out, mesh16) - vol) < 1e-14


def test_line_search_accepts_descent_at_full_step():
    mesh = ft.build_unit_square_mesh(4)
    x = mesh.vertices[:, 0]
    psi = x - 0.45
    psi /= ft.l2_norm(mesh, psi)
    rng = np.random.default_rng(6)
    g = -psi + 0.01 * rng.standard_normal(mesh.n_vertices)
    theta = ft.compute_theta(mesh, g, psi)

    def toy(trial):
        return ft.l2_inner(mesh, trial, psi), None

    result = line_search(mesh, psi, g, theta, toy,
                         J_current=toy(psi)[0], kappa_prev=1.0)
    assert isinstance(result, LineSearchResult)
    assert result.kappa == 1.0
    assert result.trials == 1
    assert result.J < toy(psi)[0]


def test_line_search_stagnates_after_expected_trials():
    mesh = ft.build_unit_square_mesh(4)
    rng = np.random.default_rng(7)
    psi = rng.standard_normal(mesh.n_vertices)
    psi /= ft.l2_norm(mesh, psi)
    psi = ft.project_volume(psi, mesh, 0.5, 0.7)
    g = rng.standard_normal(mesh.n_vertices)
    theta = ft.compute_theta(mesh, g, psi)
    j_current = 1.0

    with pytest.raises(StagnationError) as info:
        line_search(mesh, psi, g, theta,
                    lambda trial: (j_current + 1.0, None),
                    J_current=j_current, kappa_prev=1.0)
    assert info.value.trials == 11  # ceil(log2(1/kappa_min)) + 1


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(V_L=0.8, V_U=0.7).validate()
    with pytest.raises(ValueError):
        RunConfig(dt=0.0).validate()
    with pytest.raises(ValueError):
        RunConfig(n_div=1).validate()
    RunConfig().validate()


def test_optimize_degenerate_when_alphas_equal():
    config = RunConfig(n_div=8, alpha_L=1.0, alpha_U=1.0, max_iter=10)
    mesh = ft.tag_boundary(ft.build_unit_square_mesh(8))
    psi0 = -(mesh.vertices[:, 0] + 0.5)  # all fluid, projectable
    result = ft.optimize(config, psi0=psi0, mesh=mesh)
    assert result.reason == "degenerate"
    assert result.iterations == 1


def test_optimize_desk_scale_contract():
    config = RunConfig(n_div=16, max_iter=60)
    result = ft.optimize(config)
    assert result.reason in ("converged", "degenerate", "stagnation")
    j_col = result.record.column("J")
    assert np.all(np.diff(j_col) < 0.0)
    vol = result.record.column("volume")
    assert np.all(vol >= config.V_L - config.eps_c)
    assert np.all(vol <= config.V_U + config.eps_c)
    mesh = ft.tag_boundary(ft.build_unit_square_mesh(16))
    assert abs(ft.l2_norm(mesh, result.psi) - 1.0) < 1e-10
