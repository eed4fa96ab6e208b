import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdgch import __version__
from hdgch.config import ConfigError, RunConfig, config_dict, parse_config
from hdgch.io import (CONVERGENCE_HEADER, DIAGNOSTICS_HEADER, DiagnosticsWriter,
                      emit_convergence_csv, emit_fields_vtk, read_convergence_csv,
                      read_diagnostics_csv, read_vtk, sha256, write_manifest)
from hdgch.diagnostics import EnergyReport
from hdgch.mesh import build_uniform_mesh
from hdgch.solver import CahnHilliardHDG, Scheme, SchemeConfig, initial_state
from hdgch.space import HDGSpace
from hdgch.verification import FIELDS, ConvergenceRow, eoc


def test_parse_example():
    cfg = parse_config("mode=convergence k=1 scheme=cs levels=4,8,16")
    assert cfg.k == 1 and cfg.scheme is Scheme.CONVEX_SPLITTING
    assert cfg.levels == (4, 8, 16)
    assert cfg.dt is None and cfg.dt_rule == "h^{k+1}"


@pytest.mark.parametrize("text, match", [
    ("k=-1", "k must be"),
    ("k=3", "k must be"),
    ("dt=0.01 dt_rule=h^{k+1}", "mutually exclusive"),
    ("bogus=1", "unknown key"),
    ("eps=-0.1", "eps must be positive"),
    ("eps=abc", "invalid value for eps"),
    ("levels=8,4", "strictly increasing"),
    ("mode=sweep", "mode"),
    ("scheme=rk4", "scheme"),
    ("dt=0.3 T=1", "integer multiple"),
    ("sources=exact", "sources"),
    ("k", "key=value"),
])
def test_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_comments_newlines_and_overrides():
    text = "# study\nk=1   # degree\nscheme=fi\nT=0.5\n"
    cfg = parse_config(text, {"scheme": "cs", "levels": "2,4"})
    assert cfg.k == 1 and cfg.scheme is Scheme.CONVEX_SPLITTING and cfg.T == 0.5
    assert cfg.levels == (2, 4)


def test_mode_defaults_and_explicit_dt():
    sp = parse_config("mode=spinodal")
    assert (sp.eps, sp.n, sp.k, sp.dt, sp.T, sp.scheme) == (0.05, 64, 1, 1e-4, 0.05, Scheme.CONVEX_SPLITTING)
    assert sp.dt_rule is None
    cfg = parse_config("dt=0.125")
    assert cfg.dt == 0.125 and cfg.dt_rule is None
    cfg = parse_config("mode=spinodal dt_rule=h^{k+1}")
    assert cfg.dt is None


def test_config_text_round_trip():
    cfg = parse_config("mode=single k=2 scheme=cs eps=0.5 levels=8 seed=3 plots=no")
    again = parse_config(cfg.as_text())
    assert again == cfg
    assert config_dict(cfg)["scheme"] == "cs"


def row(level, h, errs, prev=None):
    r = ConvergenceRow(level=level, h=h, errors=dict(zip(FIELDS, errs)))
    if prev is not None:
        for f in FIELDS:
            r.orders[f] = eoc([prev.errors[f], r.errors[f]], [prev.h, h])[0]
    return r


def test_convergence_csv_single_level(tmp_path):
    path = emit_convergence_csv([row(4, 0.35, [1e-2, 2e-2, 3e-3, 4e-3])], tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "level,h,err_q,ord_q,err_p,ord_p,err_u,ord_u,err_phi,ord_phi"
    assert ",".join(CONVERGENCE_HEADER) == lines[0]
    cells = lines[1].split(",")
    assert [cells[i] for i in (3, 5, 7, 9)] == ["-"] * 4


def test_convergence_csv_two_levels(tmp_path):
    a = row(4, 0.5, [1e-2, 2e-2, 4.1975e-06, 4e-3])
    b = row(8, 0.25, [5e-3, 1e-2, 1.0501e-06, 1e-3], a)
    path = emit_convergence_csv([a, b], tmp_path / "t.csv")
    cells = path.read_text().splitlines()[2].split(",")
    assert all(c != "-" for c in cells)
    assert cells[6] == "1.0501E-06"
    assert cells[7] == "1.9990"


@given(st.lists(st.floats(1e-12, 1e3), min_size=8, max_size=8))
def test_convergence_csv_round_trip(tmp_path_factory, vals):
    a = row(2, 0.7, vals[:4])
    b = row(4, 0.35, vals[4:], a)
    path = emit_convergence_csv([a, b], tmp_path_factory.mktemp("csv") / "t.csv")
    back = read_convergence_csv(path)
    for rec, r in zip(back, [a, b]):
        assert rec["level"] == r.level
        for f in FIELDS:
            assert np.isclose(rec[f"err_{f}"], r.errors[f], rtol=5e-5)
            if f in r.orders:
                assert np.isclose(rec[f"ord_{f}"], r.orders[f], rtol=5e-5, atol=5e-5)
            else:
                assert rec[f"ord_{f}"] is None


def test_diagnostics_writer(tmp_path):
    path = tmp_path / "d.csv"
    with DiagnosticsWriter(path) as w:
        w.write(0, 0.0, 0.125, EnergyReport(1.0, 0.5, 0.25), 0)
        w.write(1, 0.1, 0.125, EnergyReport(0.9, 0.4, 0.2), 2)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,t,mass,E_total,E_chem,E_grad,E_stab,newton_iters"
    assert ",".join(DIAGNOSTICS_HEADER) == lines[0]
    d = read_diagnostics_csv(path)
    assert np.array_equal(d["E_total"], [1.75, 1.5])
    assert np.array_equal(d["newton_iters"], [0, 2])


def _state(n=3, k=1, u0=lambda x, y: 1.0 + 0 * x):
    sp = HDGSpace(build_uniform_mesh(n), k)
    prob = CahnHilliardHDG(sp, SchemeConfig(scheme="cs", eps=1.0, dt=0.1, T=0.1))
    s = initial_state(prob, u0)
    s.phi[:] = s.u
    return sp, s


def test_vtk_constant_field(tmp_path):
    sp, s = _state()
    data = read_vtk(emit_fields_vtk(sp, s, tmp_path / "f.vtk"))
    assert data["points"].shape == (sp.mesh.n_vertices, 3)
    assert np.array_equal(data["cells"], sp.mesh.elements)
    assert np.all(data["cell_types"] == 5)
    for arr in (data["cell_data"]["u_mean"], data["cell_data"]["phi_mean"], data["point_data"]["u"]):
        assert np.allclose(arr, 1.0, atol=1e-13)


def test_vtk_vertex_values_of_linear_field(tmp_path):
    sp, s = _state(u0=lambda x, y: 2 * x - y)
    data = read_vtk(emit_fields_vtk(sp, s, tmp_path / "f.vtk"))
    v = sp.mesh.vertices
    assert np.allclose(data["point_data"]["u"], 2 * v[:, 0] - v[:, 1], atol=1e-12)


def test_vtk_deterministic(tmp_path):
    sp, s = _state(u0=lambda x, y: np.sin(5 * x) * y)
    a = emit_fields_vtk(sp, s, tmp_path / "a.vtk")
    b = emit_fields_vtk(sp, _state(u0=lambda x, y: np.sin(5 * x) * y)[1], tmp_path / "b.vtk")
    assert sha256(a) == sha256(b)


def test_read_vtk_rejects_other_formats(tmp_path):
    p = tmp_path / "x.vtk"
    p.write_text("hello\n")
    with pytest.raises(ValueError):
        read_vtk(p)


def test_manifest(tmp_path):
    cfg = parse_config("mode=spinodal seed=11")
    text = write_manifest(cfg, tmp_path / "manifest.txt", {"dt": 1e-4}).read_text()
    assert f"version={__version__}" in text
    assert "seed=11" in text and "scheme=cs" in text and "dt=0.0001" in text
    assert isinstance(RunConfig().levels, tuple)
