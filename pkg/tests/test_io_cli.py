import csv

import numpy as np
import pytest

from tideflow import io as tio
from tideflow.bench import BubbleSeries, ErrorReport, attach_eoc
from tideflow.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, ConfigError, main, parse_config
from tideflow.problems import rising_bubble
from tideflow.schemes import SchemeConfig, initial_state, run, step


@pytest.fixture(scope="module")
def stepped_state():
    pb = rising_bubble(1, 16)
    state, _ = step(initial_state(pb), pb, SchemeConfig(tau=1e-3))
    return state


def _vtk_sections(path):
    lines = open(path).read().splitlines()
    return {ln.split()[0]: ln for ln in lines if ln and ln.split()[0].isupper()}, lines


def test_vtk_counts(stepped_state, tmp_path):
    path = tio.write_vtk(stepped_state, tmp_path / "s.vtk")
    head, lines = _vtk_sections(path)
    tri = stepped_state.U_mesh.tri
    n_pts = tri.n_vertices + tri.n_edges
    assert head["POINTS"] == f"POINTS {n_pts} double"
    assert head["CELLS"] == f"CELLS {4 * tri.n_triangles} {16 * tri.n_triangles}"
    assert head["POINT_DATA"] == f"POINT_DATA {n_pts}"
    assert head["CELL_DATA"] == f"CELL_DATA {4 * tri.n_triangles}"
    assert "SCALARS pressure_p1 double 1" in lines
    assert "SCALARS pressure_p0 double 1" in lines
    assert "VECTORS velocity double" in lines


def test_subdivided_cells_cover_parent(unit_grid):
    cells = tio.subdivided_cells(unit_grid)
    pts = np.r_[unit_grid.vertices, unit_grid.edge_midpoints()]
    p = pts[cells]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    assert np.all(area > 0)
    assert area.sum() == pytest.approx(1.0, abs=1e-14)


def test_series_csv_two_steps(tmp_path):
    from tideflow.bench import BubbleRecorder

    pb = rising_bubble(1, 16)
    rec = BubbleRecorder()
    run(pb, SchemeConfig(tau=1e-3, T=2e-3), [rec])
    path = tio.write_series_csv(rec.series, tmp_path / "series.csv")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == list(BubbleSeries.COLUMNS)
    assert len(rows) - 1 == 3
    assert open(path, "rb").read().count(b"\r\n") == 4
    back = tio.read_series_csv(path)
    assert np.allclose(back["t"], [0.0, 1e-3, 2e-3])
    assert back["z_c"][0] == pytest.approx(0.5, abs=1e-9)


def test_error_table_eoc_formatting(tmp_path):
    reps = attach_eoc([ErrorReport(32, 3.96456e-4, 1e-12, 1e-11, 3.05157e-1, cpu=1.0),
                       ErrorReport(64, 1.03429e-4, 1e-12, 1e-11, 1.57053e-1, cpu=4.0)])
    text = tio.format_error_table(reps)
    rows = text.splitlines()
    assert rows[0].split() == list(tio.TABLE_COLUMNS)
    assert rows[1].split()[6] == "-"
    assert rows[2].split()[6] == "0.96"
    path = tio.write_error_table(reps, tmp_path / "t.csv")
    with open(path, newline="") as f:
        data = list(csv.reader(f))
    assert data[2][6] == "0.96"
    assert data[2][1] == "0.000103429"


def test_read_key_values(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\ntau = 4e-3\n\nscheme=ale  # trailing\neps-f = 1e-9\n")
    assert tio.read_key_values(p) == {"tau": "4e-3", "scheme": "ale", "eps_f": "1e-9"}
    p.write_text("tau\n")
    with pytest.raises(ValueError):
        tio.read_key_values(p)


def test_writer_unwritable(stepped_state, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(tio.OutputError):
        tio.write_vtk(stepped_state, blocker / "x.vtk")


def test_defaults_applied(tmp_path):
    empty = tmp_path / "empty.cfg"
    empty.write_text("")
    cfg, verbose = parse_config(["converge", "--config", str(empty), "--case", "sol1",
                                 "--scheme", "aex", "--level", "0"])
    assert (cfg.eps_f, cfg.c_a, cfg.restart, cfg.rtol) == (1e-8, 20.0, 50, 1e-9)
    assert cfg.levels == (0,) and cfg.scheme == "aex" and cfg.case == "sol1"
    assert verbose == 0
    sc = cfg.scheme_config(6.4e-2, 1.0)
    assert sc.gmres.restart == 50 and sc.eps_f == 1e-8


def test_flag_overrides_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("tau = 4e-3\nscheme = b\n")
    cfg, _ = parse_config(["converge", "--config", str(f), "--tau", "1e-3"])
    assert cfg.tau == 1e-3
    assert cfg.scheme == "b"


@pytest.mark.parametrize("argv", [
    ["converge", "--tau", "-1"],
    ["converge", "--level", "9"],
    ["bubble", "--benchmark", "3"],
    ["custom", "--walls", "dirichlet,slip"],
    ["converge", "--c-a", "70"],
])
def test_invalid_values(argv):
    with pytest.raises(ConfigError):
        parse_config(argv)


def test_exit_codes(tmp_path, capsys):
    assert main(["converge", "--tau", "-1"]) == EXIT_CONFIG
    f = tmp_path / "bad.cfg"
    f.write_text("colour = red\n")
    assert main(["converge", "--config", str(f)]) == EXIT_CONFIG
    assert main(["converge", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["converge", "--scheme", "euler"]) == EXIT_CONFIG
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["bubble", "--J", "16", "--T", "1e-3", "--out", str(blocker / "o"),
                 "--no-plots"]) == EXIT_IO
    assert "I/O error" in capsys.readouterr().err


def test_bubble_outputs_deterministic(tmp_path):
    args = ["bubble", "--J", "16", "--tau", "1e-3", "--T", "2e-3", "--no-plots", "--out"]
    assert main(args + [str(tmp_path / "a")]) == EXIT_OK
    assert main(args + [str(tmp_path / "b")]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "benchmark1_aex_J16_series.csv" in names
    assert "benchmark1_aex_J16_final.vtk" in names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_converge_level_zero_end_to_end(tmp_path, capsys):
    out = tmp_path / "conv"
    assert main(["converge", "--case", "sol1", "--scheme", "aex", "--level", "0",
                 "--out", str(out)]) == EXIT_OK
    table = capsys.readouterr().out
    assert table.splitlines()[1].split()[0] == "32"
    for name in ("errors_sol1_aex.csv", "errors_sol1_aex.txt", "sol1_J32_final.vtk",
                 "convergence_sol1_aex.png"):
        assert (out / name).stat().st_size > 0
    assert (out / "convergence_sol1_aex.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    with open(out / "errors_sol1_aex.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert float(rows[1][2]) <= 1e-9  # velocity captured exactly


def test_custom_run_with_plots(tmp_path):
    out = tmp_path / "custom"
    assert main(["custom", "--J", "16", "--radius", "0.25", "--tau", "1e-3", "--T", "2e-3",
                 "--gamma", "1", "--rho-plus", "10", "--rho-minus", "1", "--out",
                 str(out)]) == EXIT_OK
    for name in ("custom_aex_series.png", "custom_aex_interfaces.png", "custom_aex_mesh.png",
                 "custom_aex_series.csv", "custom_aex_summary.txt"):
        assert (out / name).stat().st_size > 0
