import csv
import json
from pathlib import Path

import pytest

from curvlab import __version__
from curvlab.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, main, parse_range, parse_spec, InputError

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("CURVLAB_SEED", raising=False)


def test_parse_range():
    assert parse_range("5") == [5]
    assert parse_range("5..8") == [5, 6, 7, 8]
    assert parse_range("2,4..5") == [2, 4, 5]
    for bad in ("x", "5..3", "1.5"):
        with pytest.raises(InputError):
            parse_range(bad)


def test_parse_spec():
    assert parse_spec("model:n=5,q=1") == ("model", {"n": 5.0, "q": 1.0})
    assert parse_spec("flat") == ("flat", {})
    with pytest.raises(InputError):
        parse_spec("torpedo:mu")


def test_version_and_help(capsys):
    assert main(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out
    assert main(["check", "--help"]) == EXIT_OK


def test_bad_flag_is_input_error():
    assert main(["check", "--nope"]) == EXIT_INPUT
    assert main([]) == EXIT_INPUT


# ---------------------------------------------------------------- check


def test_check_golden(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert main(["check", "--condition", "psc", "--n", "4", "--operator", "identity", "--json", str(out)]) == EXIT_OK
    assert "margin 12" in capsys.readouterr().out
    assert out.read_bytes() == (GOLDEN / "check_psc_identity_n4.json").read_bytes()


def test_check_outside_exits_one(capsys):
    assert main(["check", "--condition", "sec_pos", "--operator", "model:n=5,q=1"]) == EXIT_FAIL
    assert "out" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["check", "--condition", "psc", "--operator", "missing.json"],
    ["check", "--condition", "psc", "--operator", "identity"],
    ["check", "--condition", "psc", "--n", "5", "--operator", "model:n=4,q=2"],
    ["check", "--condition", "p_curv", "--n", "4", "--operator", "identity"],
])
def test_check_input_errors(argv, capsys):
    assert main(argv) == EXIT_INPUT
    assert capsys.readouterr().err.startswith("error:")


def test_check_malformed_operator_file(tmp_path):
    bad = tmp_path / "op.json"
    bad.write_text("{not json")
    assert main(["check", "--condition", "psc", "--operator", str(bad)]) == EXIT_INPUT


def test_seed_env_overrides_flag(tmp_path, monkeypatch):
    out = tmp_path / "c.json"
    monkeypatch.setenv("CURVLAB_SEED", "7")
    main(["check", "--condition", "psc", "--n", "4", "--operator", "identity", "--seed", "3", "--json", str(out)])
    assert json.loads(out.read_text())["config"]["seed"] == 7


def test_bad_seed_env(monkeypatch):
    monkeypatch.setenv("CURVLAB_SEED", "seven")
    assert main(["check", "--condition", "psc", "--n", "4", "--operator", "identity"]) == EXIT_INPUT


# ---------------------------------------------------------------- stability


def test_stability_golden(tmp_path):
    out = tmp_path / "s.json"
    argv = ["stability", "--condition", "psc", "--n", "5..6", "--expected", "claimed", "--json", str(out)]
    assert main(argv) == EXIT_OK
    assert out.read_bytes() == (GOLDEN / "stability_psc_n5_6.json").read_bytes()


def test_stability_wrong_expectation_fails():
    assert main(["stability", "--condition", "psc", "--n", "6", "--expected", "4"]) == EXIT_FAIL


@pytest.mark.parametrize("argv", [
    ["stability", "--condition", "p_curv", "--n", "6"],
    ["stability", "--condition", "k_pos_ric", "--n", "6"],
    ["stability", "--condition", "psc", "--n", "5..6", "--expected", "3"],
    ["stability", "--condition", "psc", "--n", "6..5"],
])
def test_stability_input_errors(argv):
    assert main(argv) == EXIT_INPUT


# ---------------------------------------------------------------- bend and export


@pytest.fixture(scope="module")
def bend_outputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("bend")
    code = main(["bend", "--condition", "psc", "--n", "7", "--q", "4",
                 "--out", str(d / "b.csv"), "--trace", str(d / "b.json")])
    return code, d


def test_bend_passes(bend_outputs):
    code, d = bend_outputs
    assert code == EXIT_OK
    rep = json.loads((d / "b.json").read_text())
    assert rep["summary"]["failed"] == 0
    assert {c["name"] for c in rep["checks"]} == {"curve class", "bending inequality", "tube margins", "step halving"}


def test_bend_csv_columns(bend_outputs):
    _, d = bend_outputs
    with open(d / "b.csv", newline="") as fh:
        head = next(csv.reader(fh))
    assert head == ["s", "theta", "kappa", "r", "t"]


def test_bend_flat_needs_rho():
    assert main(["bend", "--condition", "psc", "--ambient", "flat"]) == EXIT_INPUT


def test_bend_bad_q():
    assert main(["bend", "--condition", "psc", "--n", "7", "--q", "9"]) == EXIT_INPUT


def test_export_svg(bend_outputs, tmp_path):
    _, d = bend_outputs
    svg = tmp_path / "b.svg"
    assert main(["export", "--csv", str(d / "b.csv"), "--svg", str(svg), "--equal-aspect"]) == EXIT_OK
    text = svg.read_text()
    assert text.startswith("<svg") and "<polyline" in text


def test_export_unknown_column(bend_outputs, tmp_path):
    _, d = bend_outputs
    assert main(["export", "--csv", str(d / "b.csv"), "--svg", str(tmp_path / "x.svg"), "--y", "nope"]) == EXIT_INPUT


def test_export_non_numeric(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,x\n")
    assert main(["export", "--csv", str(bad), "--svg", str(tmp_path / "x.svg")]) == EXIT_INPUT


# ---------------------------------------------------------------- deform


def test_deform_default_fixture(tmp_path, capsys):
    out, tr, cs = tmp_path / "d.json", tmp_path / "d.jsonl", tmp_path / "d.csv"
    assert main(["deform", "--out", str(out), "--trace", str(tr), "--csv", str(cs)]) == EXIT_OK
    assert capsys.readouterr().out.strip().endswith("ok")
    summ = json.loads(out.read_text())["summary"]
    assert summ["boundary_fixed"] and summ["final_torpedo_error"] <= 1e-6
    assert all(json.loads(line)["min_margin"] > 0 for line in tr.read_text().splitlines())


def test_deform_rejected_input_fails(tmp_path, capsys):
    from curvlab import conditions as cd
    from curvlab import disc_deformations as dd

    path = dd.fixture_path(cd.builtin("k_pos_ric", 7, {"k": 3}), 4)
    assert main(["deform", "--fixture", str(path), "--out", str(tmp_path / "d.json")]) == EXIT_FAIL
    assert "witness" in capsys.readouterr().err
    assert "error" in json.loads((tmp_path / "d.json").read_text())


@pytest.mark.parametrize("argv", [
    ["deform", "--index", "9"],
    ["deform", "--fixture", "missing.json"],
    ["deform", "--metric", "missing.json", "--condition", "psc"],
])
def test_deform_input_errors(argv):
    assert main(argv) == EXIT_INPUT


def test_deform_metric_needs_condition(tmp_path):
    from curvlab import conditions as cd
    from curvlab import disc_deformations as dd

    _, metrics = dd.load_fixture(dd.fixture_path(cd.builtin("psc", 7), 4))
    m = tmp_path / "g.json"
    m.write_text(metrics[0].to_json())
    assert main(["deform", "--metric", str(m)]) == EXIT_INPUT


# ---------------------------------------------------------------- verify


def test_verify_subset(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["verify", "--only", "1,3", "--out", str(out)]) == EXIT_OK
    assert "scoreboard: 2/2 passed" in capsys.readouterr().out
    rep = json.loads(out.read_text())
    assert [c["status"] for c in rep["checks"]] == ["pass", "pass"]
    assert "time" not in out.read_text()


def test_verify_bad_subset():
    assert main(["verify", "--only", "12"]) == EXIT_INPUT
