import numpy as np
import pytest
import yaml

from anisodamage import io as aio
from anisodamage.fem.mesh import box, write_mesh
from anisodamage.scenarios import (ConfigError, CurveRecord, StudyConfig, build_system,
                                   preset_notched, preset_single_element, run_study)


def small(mode, k_ani=1.0, steps=20, **kw):
    return preset_single_element(mode, k_ani=k_ani, steps=steps, **kw)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        StudyConfig(scenario="bogus")
    with pytest.raises(ConfigError):
        StudyConfig(scenario="notched", model="Z")
    with pytest.raises(ConfigError):
        StudyConfig(scenario="notched", model="C", active=[True])
    with pytest.raises(ConfigError):
        StudyConfig(scenario="notched", material={"preset": "set1", "overrides": {"k_ani": 2}})
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({"scenario": "notched", "colour": "blue"})


def test_local_mode_zeroes_gradient_parameters():
    cfg = preset_notched("coarse", "C", local=True)
    p = cfg.material_params()
    assert np.all(p.penalties("C") == 0) and np.all(p.gradient_moduli("C") == 0)
    assert preset_notched("coarse", "B").material_params().gradient_moduli("B")[0] == 300.0


def test_config_yaml_roundtrip(tmp_path):
    cfg = preset_notched("medium", "A", overrides={"Y0": 3.0}, steps=10)
    aio.write_config(tmp_path / "c.yaml", cfg)
    back = aio.load_config(tmp_path / "c.yaml")
    assert back.to_dict() == cfg.to_dict()
    assert back.material_params() == cfg.material_params()


def test_config_loader_errors(tmp_path):
    with pytest.raises(ConfigError):
        aio.load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("scenario: [unclosed\n")
    with pytest.raises(ConfigError):
        aio.load_config(tmp_path / "bad.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        aio.load_config(tmp_path / "list.yaml")


def test_with_material_copies():
    cfg = small("tension")
    other = cfg.with_material(k_ani=0.5)
    assert other.material_params().k_ani == 0.5
    assert cfg.material_params().k_ani == 1.0


# ---------------------------------------------------------------------------
# single-element studies
# ---------------------------------------------------------------------------

def test_uniaxial_strain_has_lateral_stress_but_no_lateral_strain():
    res = run_study(small("uniaxial-strain", u_max=0.02, steps=4))
    s = res.solver
    np.testing.assert_allclose(s.displacements()[:, :2], 0.0, atol=1e-14)
    R = s.nodal_reactions()
    assert np.abs(R[:, 0]).max() > 1.0  # the lateral constraint carries load


def test_kani_zero_uses_isotropic_branch_only():
    cfg = small("tension", k_ani=0.0)
    assert cfg.material_params().k_ani == 0.0
    res = run_study(cfg.with_material(Y0=1e6), mesh=None)
    assert res.peak() > 0


def test_tension_curve_has_a_peak_and_softens():
    res = run_study(small("tension", steps=40))
    f = res.force
    k = int(np.argmax(f))
    assert 0 < k < len(f) - 1
    assert f[-1] < 0.9 * f[k]
    assert all(d.min_dgamma >= 0 for d in res.diagnostics)


def test_torsion_reports_moment():
    res = run_study(small("torsion", steps=5, twist=0.05))
    assert res.config.loading["twist"] == 0.05
    assert abs(res.peak()) > 0
    assert res.displacement[-1] == pytest.approx(0.05)


def test_dissipated_energy_trapezoid():
    res = run_study(small("tension", steps=5).with_material(Y0=1e6))
    u = np.concatenate([[0], res.displacement])
    f = np.concatenate([[0], res.force])
    assert res.dissipated_energy() == pytest.approx(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(u)))


def test_custom_scenario_on_imported_mesh(tmp_path):
    write_mesh(tmp_path / "bar.mesh", box(4.0, 1.0, 1.0, 4, 1, 1))
    cfg = StudyConfig(scenario="custom", mesh={"file": str(tmp_path / "bar.mesh")},
                      local=True, loading={"u_max": 0.004, "steps": 2, "axis": 0})
    system, measure = build_system(cfg)
    assert system.mesh.n_elements == 4
    res = run_study(cfg)
    assert res.force[-1] > 0


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def test_run_outputs(tmp_path):
    cfg = small("tension", steps=4)
    cfg.output = {"fields_every": 2}
    res = run_study(cfg, tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["config-echo.yaml", "fields_0002.vtk", "fields_0004.vtk", "run.csv",
                     "solve-report.yaml"]
    curve = aio.read_curve(tmp_path / "run.csv")
    assert len(curve) == 4
    np.testing.assert_allclose([c.force for c in curve], res.force, rtol=1e-9)
    assert max(abs(c.normalized) for c in curve) == pytest.approx(1.0)
    report = yaml.safe_load((tmp_path / "solve-report.yaml").read_text())
    assert len(report["steps"]) == 4 and report["peak"] == pytest.approx(res.peak())
    vtk = (tmp_path / "fields_0004.vtk").read_text()
    assert "CELL_TYPES 1" in vtk and "SCALARS D_xx double 1" in vtk


def test_vtk_readable_by_meshio(tmp_path):
    meshio = pytest.importorskip("meshio")
    m = box(1, 1, 1, 2, 2, 1)
    aio.write_fields(tmp_path / "f.vtk", m, {"u": np.zeros((m.n_nodes, 3))},
                     {"D_xx": np.arange(m.n_elements, dtype=float)})
    back = meshio.read(tmp_path / "f.vtk")
    assert len(back.points) == m.n_nodes
    np.testing.assert_allclose(np.ravel(back.cell_data["D_xx"][0]), np.arange(4.0))


def test_write_fields_rejects_bad_shapes(tmp_path):
    m = box(1, 1, 1, 1, 1, 1)
    with pytest.raises(aio.IoError):
        aio.write_fields(tmp_path / "f.vtk", m, {"u": np.zeros((3, 3))})
    with pytest.raises(aio.IoError):
        aio.write_fields(tmp_path / "f.vtk", m, None, {"T": np.zeros((1, 2))})


def test_meshio_import(tmp_path):
    meshio = pytest.importorskip("meshio")
    m = box(2, 1, 1, 2, 1, 1)
    meshio.write_points_cells(tmp_path / "m.vtu", m.nodes, [("hexahedron", m.elements)])
    back = aio.import_mesh(tmp_path / "m.vtu")
    assert back.n_elements == 2
    assert set(back.node_sets) >= {"xmin", "xmax", "zmin", "zmax", "all"}
    with pytest.raises(aio.IoError):
        aio.import_mesh(tmp_path / "none.vtu")


def test_curve_record_columns():
    r = CurveRecord(1, 0.5, 0.5, 0.1, 2.0, 3, 0, 1.0)
    assert r.row() == [1, 0.5, 0.5, 0.1, 2.0, 1.0, 3, 0]


def test_empty_curve_is_header_only(tmp_path):
    aio.write_curve(tmp_path / "e.csv", [])
    assert (tmp_path / "e.csv").read_text().strip() == ",".join(CurveRecord.COLUMNS)
    assert aio.read_curve(tmp_path / "e.csv") == []


def test_rerun_from_echo_is_bitwise_identical(tmp_path):
    run_study(small("simple-shear", steps=6), tmp_path / "a")
    echo = aio.load_config(tmp_path / "a" / "config-echo.yaml")
    run_study(echo, tmp_path / "b")
    assert (tmp_path / "a" / "run.csv").read_bytes() == (tmp_path / "b" / "run.csv").read_bytes()


def test_averaged_damage_field_bounds():
    res = run_study(small("tension", steps=30))
    point, cell = aio.solver_fields(res.solver)
    assert cell["D_xx"].min() >= 0.0 and cell["D_zz"].max() < 1.0
    assert cell["D_zz"].max() > 0.1
