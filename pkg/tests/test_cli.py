import csv
import io
import json

import pytest

from fractal_forms.cli import ConfigError, read_config, run


def _run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _csv_rows(text):
    return list(csv.DictReader(line for line in text.splitlines() if not line.startswith("#")))


def test_geometry_level2():
    code, out, _ = _run("geometry", "--level", "2")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == 1 and doc["n_edges"] == 48
    assert doc["config"]["run"]["level"] == 2


def test_form_constant_is_zero():
    code, out, _ = _run("form", "--fn", "const", "--level", "1")
    assert code == 0
    assert json.loads(out)["value"] == 0


def test_study_energy_rows(tmp_path):
    code, out, err = _run("study", "energy", "--levels", "1..2", "--fn", "coord-x",
                          "--out", str(tmp_path))
    assert code == 0 and out == ""
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["study_energy.csv", "study_energy.json", "study_energy.svg"]
    text = (tmp_path / "study_energy.csv").read_text()
    assert text.startswith("# schema: 1\n# command: ")
    assert len(_csv_rows(text)) == 2
    doc = json.loads((tmp_path / "study_energy.json").read_text())
    assert doc["schema"] == 1 and doc["config"]["kind"] == "energy"
    assert doc["study_config"]["n_hi"] == 2
    assert str(tmp_path / "study_energy.csv") in err


@pytest.mark.slow
def test_study_energy_five_levels():
    code, out, _ = _run("study", "energy", "--levels", "1..5", "--fn", "coord-x")
    assert code == 0
    rows = _csv_rows(out)
    assert len(rows) == 5
    gaps = [float(r["gap"]) for r in rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    for d in (a, b):
        assert _run("geometry", "--level", "3", "--out", str(d))[0] == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_unknown_command_exit_2():
    code, _, err = _run("frobnicate")
    assert code == 2 and "error" in err


def test_missing_command_exit_2():
    assert _run()[0] == 2


def test_bad_flag_value_exit_2():
    assert _run("geometry", "--level", "two")[0] == 2
    assert _run("geometry", "--p", "0.6")[0] == 2


def test_bad_config_line_reported(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[curve]\np = 1/3\n\nnonsense line\n")
    code, _, err = _run("geometry", "--config", str(cfg))
    assert code == 2
    assert "bad.cfg:4:" in err


def test_read_config_sections():
    d = read_config("# comment\n[curve]\np = 1/3\n[form]\nalpha = 0.9 ; trailing\n"
                    "[run]\nlevel = 3\n[study]\nlevels = 1..4\nfunctions = coord-x, const\n")
    assert d["curve"]["p"] == pytest.approx(1 / 3)
    assert d["form"]["alpha"] == 0.9 and d["run"]["level"] == 3
    assert d["study"]["levels"] == (1, 4) and tuple(d["study"]["functions"]) == ("coord-x", "const")


@pytest.mark.parametrize("text", ["p = 1\n", "[nope]\n", "[curve]\nzzz = 1\n", "[run]\nlevel = x\n",
                                  "[curve\n", "[curve]\np 1\n"])
def test_read_config_errors(text):
    with pytest.raises(ConfigError, match=r"<config>:\d+:"):
        read_config(text)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[run]\nlevel = 1\n")
    code, out, _ = _run("geometry", "--config", str(cfg))
    assert code == 0 and json.loads(out)["n_edges"] == 12
    code, out, _ = _run("geometry", "--config", str(cfg), "--level", "2")
    assert code == 0 and json.loads(out)["n_edges"] == 48


def test_data_file_function(tmp_path):
    flat = tmp_path / "flat.csv"
    flat.write_text("x,y,value\n0,0,2\n1,0,2\n0.5,0.8660254037844386,2\n")
    code, out, _ = _run("form", "--fn", str(flat), "--level", "1")
    assert code == 0 and json.loads(out)["value"] == 0
    data = tmp_path / "phi.csv"
    data.write_text("x,y,value\n0,0,0\n1,0,1\n0.5,0.8660254037844386,0.5\n")
    code, out, _ = _run("form", "--fn", str(data), "--level", "1")
    doc = json.loads(out)
    assert code == 0 and doc["value"] > 0 and doc["function"] == "phi.csv"


def test_bad_data_file_line(tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("x,y,value\n0,0,0\n1,zero,1\n")
    code, _, err = _run("form", "--fn", str(data), "--level", "1")
    assert code == 2 and "bad.csv:3:" in err


def test_missing_data_file_exit_2(tmp_path):
    assert _run("form", "--fn", str(tmp_path / "none.csv"))[0] == 2


def test_solve_elliptic_stdout_csv():
    code, out, _ = _run("solve", "elliptic", "--level", "1", "--h-factor", "1")
    assert code == 0
    rows = _csv_rows(out)
    assert rows and all(float(r["value"]) > 0 for r in rows)


def test_solve_parabolic_norms(tmp_path):
    code, _, _ = _run("solve", "parabolic", "--level", "1", "--dt", "0.01", "--T", "0.05",
                      "--checkpoints", "0.05", "--out", str(tmp_path))
    assert code == 0
    norms = [float(r["norm"]) for r in _csv_rows((tmp_path / "norms.csv").read_text())]
    assert all(b <= a for a, b in zip(norms, norms[1:]))
