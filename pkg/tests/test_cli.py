import csv
import io
import json

import pytest

from heisenberg_iso.cli import (
    ConfigInvalid,
    ReportRow,
    bound_row,
    check_row,
    load_config,
    main,
    parse_number_list,
)


def _rows(text):
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def test_number_list_progression():
    r = parse_number_list("2,4,...,1024", "x")
    assert r[0] == 2 and r[-1] == 1024 and len(r) == 10
    assert parse_number_list("1, 2.5,3", "x") == [1.0, 2.5, 3.0]
    for bad in ("", "2,4,...,1000", "a,b", "2,...,8", "4,2,...,1"):
        with pytest.raises(ConfigInvalid):
            parse_number_list(bad, "x")


def test_load_config_layers(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('seed = 7\n[quad]\nrel_tol = 1e-5\n[counterexample]\nradii = "2,4,...,64"\n[a1]\nsamples = 99\n')
    cfg = load_config("counterexample", str(p), {"tol": "0.02"})
    assert cfg.seed == 7
    assert cfg.quad.rel_tol == 1e-5
    assert cfg.params.radii[-1] == 64 and cfg.params.tol == 0.02
    a = load_config("counterexample", str(p))
    b = load_config("counterexample", str(p))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != cfg.config_hash()


@pytest.mark.parametrize(
    "args",
    [
        ["counterexample", "--radii", "0.5,2"],
        ["counterexample", "--radii", "4,2"],
        ["a1", "--radii-count", "4"],
        ["webster", "--tol", "-1"],
        ["webster", "--points", "many"],
        ["decay", "--epsilon", "0"],
        ["webster", "--seed", "-3"],
    ],
)
def test_invalid_config_exits_2(args, capsys):
    assert main(args) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_toml(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[webster\n")
    assert main(["webster", "--config", str(p)]) == 2
    q = tmp_path / "unknown.toml"
    q.write_text("[webster]\nbogus = 1\n")
    assert main(["webster", "--config", str(q)]) == 2
    assert main(["webster", "--config", str(tmp_path / "missing.toml")]) == 2


def test_deterministic_csv(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.csv"
        assert main(["webster", "--points", "4", "--no-timestamp", "--out", str(out)]) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    rows = _rows(outs[0])
    assert rows and all(r["passed"] == "true" for r in rows)
    assert all(r["runtime_s"] == "0" for r in rows)
    assert "# config_hash:" in outs[0] and "timestamp" not in outs[0]


def test_seed_changes_inputs(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["webster", "--points", "4", "--no-timestamp", "--seed", "1", "--out", str(a)])
    main(["webster", "--points", "4", "--no-timestamp", "--seed", "2", "--out", str(b)])
    assert a.read_text() != b.read_text()


def test_json_report(tmp_path):
    out = tmp_path / "r.json"
    assert main(["webster", "--points", "4", "--format", "json", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["meta"]["subcommand"] == "webster"
    assert "timestamp" in data["meta"]
    row = data["rows"][0]
    assert set(row) >= {"test_id", "computed", "reference", "provenance", "error", "tolerance", "passed", "runtime_s"}


def test_failing_row_exit_1(tmp_path, capsys):
    # an impossible tolerance turns every comparison into a failed row
    assert main(["webster", "--points", "4", "--tol", "1e-300", "--no-timestamp"]) == 1
    assert "FAILED webster." in capsys.readouterr().err


def test_report_row_contract():
    r = check_row("x", {}, 1.0 + 1e-9, 1.0, "paper", 1e-6)
    assert r.passed and r.error == pytest.approx(1e-9)
    assert not bound_row("b", {}, 3.0, 2.0).passed
    assert bound_row("b", {}, 3.0, 2.0, lower=True).passed
    with pytest.raises(ValueError):
        ReportRow("x", {}, 1.0, 1.0, "guess", 0.0, 1.0, True)
