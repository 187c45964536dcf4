import csv
import io
import json

import jsonschema
import pytest

from ttdist import cli

DICE4 = "iid D[4] = dice(6);\nlet Z = sum(D);\nprint mean(Z), var(Z), report(Z);\n"


@pytest.fixture
def script(tmp_path):
    def write(text, name="s.tt"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_with_oracle(capsys, script):
    code, out, _ = run(capsys, "run", script(DICE4), "--oracle")
    assert code == 0
    recs = json.loads(out)
    jsonschema.validate(recs, cli.load_schema())
    assert recs[0]["value"] == pytest.approx(14.0, rel=1e-12)
    assert recs[0]["oracle"]["abs_diff"] <= 1e-12 * 14
    assert recs[1]["oracle"]["rel_diff"] <= 1e-12


def test_run_csv(capsys, script):
    code, out, _ = run(capsys, "--format", "csv", "run", script(DICE4))
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == cli.QUERY_COLUMNS
    assert [r[0] for r in rows[1:]] == ["mean(Z)", "var(Z)", "report(Z)"]
    assert float(rows[1][1]) == pytest.approx(14.0)


def test_global_flags_after_subcommand(capsys, script, tmp_path):
    out_path = tmp_path / "o.csv"
    code, out, _ = run(capsys, "run", script(DICE4), "--format", "csv", "--out", str(out_path))
    assert code == 0 and out == ""
    assert out_path.read_text().startswith("query,value")


def test_missing_file(capsys):
    code, _, err = run(capsys, "run", "/no/such/script.tt")
    assert code == 1
    assert "/no/such/script.tt" in err


def test_parse_error_names_position(capsys, script):
    path = script("let = 3;\n")
    code, _, err = run(capsys, "run", path)
    assert code == 1
    assert f"{path}:1:5" in err


def test_usage_error_exits_one(capsys):
    code, _, _ = run(capsys, "run")
    assert code == 1
    code, _, _ = run(capsys, "experiment", "nope")
    assert code == 1


def test_oracle_limit_exceeded(capsys, script):
    code, _, err = run(capsys, "run", script(DICE4), "--oracle", "--oracle-limit", "100")
    assert code == 2
    assert "limit" in err


def test_entry_cap(capsys, script):
    text = "iid X[6] = dice(6);\nlet S = sum(X);\nlet P = S * S;\nprint mean(P);\n"
    code, _, _ = run(capsys, "run", script(text), "--entry-cap", "20")
    assert code == 2
    code, _, _ = run(capsys, "run", script(text))
    assert code == 0


def test_experiment_dice(capsys):
    code, out, _ = run(capsys, "experiment", "dice", "--count", "4", "--oracle")
    assert code == 0
    recs = json.loads(out)
    jsonschema.validate(recs, cli.load_schema())
    by = {r["method"]: r for r in recs}
    assert by["tt"]["values"]["mean"] == pytest.approx(by["dense"]["values"]["mean"], rel=1e-12)
    assert by["tt"]["config"] == {"count": 4, "faces": 6}


def test_experiment_csv_columns(capsys):
    code, out, _ = run(capsys, "--format", "csv", "experiment", "integrate-product", "--d", "3", "--mc-samples", "100")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == cli.RUN_COLUMNS
    assert {r["method"] for r in rows} == {"tt", "analytic", "mc"}


def test_seed_reproducible(capsys):
    args = ["experiment", "hutchinson", "--d", "5", "--mc-samples", "200", "--seed", "11"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    strip = lambda s: [{k: v for k, v in r.items() if k != "wall_time_s"} for r in json.loads(s)]
    assert strip(a) == strip(b)
    _, c, _ = run(capsys, *args[:-1], "12")
    assert strip(a) != strip(c)


def test_hutchinson_matrix_file(capsys, tmp_path):
    m = tmp_path / "a.csv"
    m.write_text("1,0.3\n0.3,1\n")
    code, out, _ = run(capsys, "experiment", "hutchinson", "--matrix", str(m), "--mc-samples", "10")
    assert code == 0
    tt = next(r for r in json.loads(out) if r["method"] == "tt")
    assert tt["values"]["trace"] == 2.0


def test_histogram_two_dice(capsys, script):
    path = script("iid D[2] = dice(6);\nlet Z = D[0] + D[1];\n")
    code, out, _ = run(capsys, "--format", "csv", "histogram", path, "Z", "--bins", "11")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == cli.HISTOGRAM_COLUMNS
    masses = [float(r[2]) for r in rows[1:]]
    want = [k / 36 for k in (1, 2, 3, 4, 5, 6, 5, 4, 3, 2, 1)]
    assert masses == pytest.approx(want, rel=1e-14)
    centers = [(float(r[0]) + float(r[1])) / 2 for r in rows[1:]]
    assert centers == pytest.approx(list(range(2, 13)))


def test_histogram_json_and_limit(capsys, script):
    path = script("iid D[2] = dice(6);\nlet Z = D[0] + D[1];\n")
    code, out, _ = run(capsys, "histogram", path, "Z", "--bins", "3")
    assert code == 0
    jsonschema.validate(json.loads(out), cli.load_schema())
    code, _, _ = run(capsys, "histogram", path, "Z", "--limit", "10")
    assert code == 2
    code, _, _ = run(capsys, "histogram", path, "W")
    assert code == 1


def test_bench_basic_small(capsys):
    code, out, _ = run(capsys, "bench-basic", "--max-d", "2", "--n", "4")
    assert code == 0
    recs = json.loads(out)
    jsonschema.validate(recs, cli.load_schema())
    assert {(r["method"], r["config"]["op"], r["config"]["d"]) for r in recs} == {
        (m, op, d) for m in ("tt", "dense") for op in ("sum", "prod") for d in (1, 2)
    }


def test_schema_file_is_valid():
    jsonschema.Draft202012Validator.check_schema(cli.load_schema())
    assert cli.schema_path().name == "results-v1.schema.json"
