import numpy as np
import pytest

import flowtopo as ft
from flowtopo.analysis import (CONFIG_KEYS, coverage_fluid, coverage_report,
                               coverage_smoothed, export_fields, import_fields,
                               parse_config, serialize_config)
from flowtopo.optimizer import RunConfig
from flowtopo.smoothing import SmoothedVelocity
from flowtopo.stokes import FlowState

U_T = 0.1


@pytest.fixture(scope="module")
def mesh8():
    return ft.build_unit_square_mesh(8)


def test_coverage_smoothed_trivial(mesh8):
    fast = np.tile([2 * U_T, 0.0], (mesh8.n_p2, 1))
    assert coverage_smoothed(mesh8, fast, U_T) == pytest.approx(1.0, abs=1e-12)
    slow = np.tile([0.5 * U_T, 0.0], (mesh8.n_p2, 1))
    assert coverage_smoothed(mesh8, slow, U_T) == pytest.approx(0.0, abs=1e-12)
    # inclusive threshold: speed exactly u_t counts as covered
    exact = np.tile([U_T, 0.0], (mesh8.n_p2, 1))
    assert coverage_smoothed(mesh8, exact, U_T) == pytest.approx(1.0, abs=1e-12)


def test_coverage_smoothed_half_domain(mesh8):
    # fast on x < 0.5, slow on x >= 0.5, constant per element
    u_s = np.where(mesh8.p2_coords[:, [0]] < 0.5, 2 * U_T, 0.0)
    u_s = np.column_stack([u_s[:, 0], np.zeros(mesh8.n_p2)])
    cov = coverage_smoothed(mesh8, u_s, U_T)
    # the P2 interpolant transitions inside the elements straddling x=0.5,
    # so allow one element column of slack
    assert abs(cov - 0.5) < 1.0 / mesh8.n_div


def test_coverage_fluid_trivial(mesh8):
    psi = -np.ones(mesh8.n_vertices)
    fast = np.tile([0.0, 3 * U_T], (mesh8.n_p2, 1))
    assert coverage_fluid(mesh8, fast, U_T, psi) == pytest.approx(1.0, abs=1e-12)
    slow = np.zeros((mesh8.n_p2, 2))
    assert coverage_fluid(mesh8, slow, U_T, psi) == pytest.approx(0.0, abs=1e-12)


def test_coverage_fluid_nan_when_no_fluid(mesh8):
    psi = np.ones(mesh8.n_vertices)
    u = np.tile([1.0, 0.0], (mesh8.n_p2, 1))
    assert np.isnan(coverage_fluid(mesh8, u, U_T, psi))


def test_coverage_fluid_psi_scaling_invariance(mesh8):
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(mesh8.n_vertices)
    u = 0.2 * rng.standard_normal((mesh8.n_p2, 2))
    c1 = coverage_fluid(mesh8, u, U_T, psi)
    c2 = coverage_fluid(mesh8, u, U_T, 5.0 * psi)
    assert c1 == c2


def test_coverage_fluid_half_domain(mesh8):
    psi = mesh8.vertices[:, 0] - 0.5  # fluid on x < 0.5
    fast = np.tile([2 * U_T, 0.0], (mesh8.n_p2, 1))
    assert coverage_fluid(mesh8, fast, U_T, psi) == pytest.approx(1.0, abs=1e-12)
    # fast only where x < 0.25: half the fluid region is covered
    u = np.where(mesh8.p2_coords[:, [0]] < 0.25, 2 * U_T, 0.0)
    u = np.column_stack([u[:, 0], np.zeros(mesh8.n_p2)])
    cov = coverage_fluid(mesh8, u, U_T, psi)
    assert abs(cov - 0.5) < 2.0 / mesh8.n_div


def test_coverage_report_bundles_both(mesh8):
    u = np.tile([2 * U_T, 0.0], (mesh8.n_p2, 1))
    psi = -np.ones(mesh8.n_vertices)
    rep = coverage_report(mesh8, u, u, psi, U_T)
    assert rep.coverage_D == coverage_smoothed(mesh8, u, U_T)
    assert rep.coverage_Omega == coverage_fluid(mesh8, u, U_T, psi)


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------

def _random_state(mesh, seed=1):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(mesh.n_vertices)
    u = rng.standard_normal((mesh.n_p2, 2))
    p = rng.standard_normal(mesh.n_vertices)
    u_s = rng.standard_normal((mesh.n_p2, 2))
    return psi, FlowState(u=u, p=p, residual=0.0), SmoothedVelocity(u_s=u_s,
                                                                    dt=1e-3)


def test_export_import_round_trip(mesh8, tmp_path):
    psi, flow, u_s = _random_state(mesh8)
    paths = export_fields(mesh8, psi, flow, u_s, tmp_path)
    data = import_fields(paths["csv"])
    assert data["n_div"] == mesh8.n_div
    assert np.array_equal(data["u"], flow.u)
    assert np.array_equal(data["u_s"], u_s.u_s)
    assert np.array_equal(data["psi"], psi)
    assert np.array_equal(data["p"], flow.p)


def test_vtk_structure(mesh8, tmp_path):
    psi, flow, u_s = _random_state(mesh8, seed=2)
    paths = export_fields(mesh8, psi, flow, u_s, tmp_path)
    text = open(paths["vtk"]).read().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert f"POINTS {mesh8.n_vertices} double" in text
    assert f"CELLS {mesh8.n_triangles} {4 * mesh8.n_triangles}" in text
    assert f"POINT_DATA {mesh8.n_vertices}" in text
    # speeds in the VTK view are nonnegative
    i = text.index("SCALARS speed double 1") + 2
    speeds = [float(v) for v in text[i:i + mesh8.n_vertices]]
    assert all(s >= 0.0 for s in speeds)


def test_import_rejects_missing_header(tmp_path):
    bad = tmp_path / "fields.csv"
    bad.write_text("node,x,y\n0,0,0\n")
    with pytest.raises(ValueError):
        import_fields(bad)


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

def test_parse_config_empty_gives_defaults(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("# nothing but comments\n\n")
    assert parse_config(cfg) == RunConfig()


def test_parse_config_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dt=5e-4\nn_div=24\noutput_dir=results\n")
    config = parse_config(cfg)
    assert config.dt == 5e-4
    assert config.n_div == 24
    assert config.output_dir == "results"
    assert config.u_t == RunConfig().u_t


def test_parse_config_rejects_bad_input(tmp_path):
    bad_key = tmp_path / "a.cfg"
    bad_key.write_text("viscosity=1.0\n")
    with pytest.raises(ValueError, match="unknown key"):
        parse_config(bad_key)
    bad_line = tmp_path / "b.cfg"
    bad_line.write_text("just words\n")
    with pytest.raises(ValueError, match="key=value"):
        parse_config(bad_line)
    bad_bounds = tmp_path / "c.cfg"
    bad_bounds.write_text("V_L=0.8\nV_U=0.7\n")
    with pytest.raises(ValueError, match="V_L"):
        parse_config(bad_bounds)


def test_serialize_parse_round_trip(tmp_path):
    config = RunConfig(dt=3.7e-4, n_div=12, V_U=0.65, output_dir="xyz")
    path = tmp_path / "out.cfg"
    serialize_config(config, path)
    assert parse_config(path) == config
    # every accepted key is written
    text = path.read_text()
    for key in CONFIG_KEYS:
        assert f"{key}=" in text
