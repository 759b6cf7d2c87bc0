import csv
import io
import json
import math
import subprocess
import sys

import pytest

from relspec import cli


def _rows_from_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_minimal_document_gets_defaults():
    cfg = cli.parse_config("command: eig\nquotient: qpl\np: 2\n")
    assert (cfg.n, cfg.domain_length, cfg.seed, cfg.output_format) == (199, 1.0, 0, "csv")
    echo = cfg.echo()
    assert echo["n"] == 199 and echo["minimize"] == {} and "output_path" not in echo


def test_json_and_yaml_parse_alike():
    a = cli.parse_config('{"command": "baseline", "n": 9}')
    b = cli.parse_config("command: baseline\nn: 9\n")
    assert a.echo() == b.echo()


@pytest.mark.parametrize(
    "doc, needle",
    [
        ("command: eig\nquotient: q33a\np0: 2\np1: 2\np: 3\n", "p0+p1=p"),
        ("command: eig\nquotient: qpl\np: 2\nfoo: 1\n", "'foo'"),
        ("command: eig\nquotient: qpl\np: two\n", "type mismatch for key 'p'"),
        ("command: baseline\nn: 9.5\n", "'n'"),
        ("command: baseline\nn: true\n", "'n'"),
        ("command: nope\n", "'command'"),
        ("n: 9\n", "'command'"),
        ("command: eig\np: 2\n", "'quotient'"),
        ("command: eig\nquotient: qzz\n", "'quotient'"),
        ("command: eig\nquotient: qpl\np: 1.5\n", "'quotient'"),
        ("command: baseline\nminimize: {seed: 3}\n", "'minimize.seed'"),
        ("command: baseline\nminimize: {stepz: 3}\n", "'minimize.stepz'"),
        ("command: baseline\nminimize: {starts: 0}\n", "'minimize'"),
        ("command: baseline\nnewton: {tol: 1.0e-9}\n", "'newton'"),
        ("command: baseline\noutput_format: xml\n", "'output_format'"),
        ("command: baseline\nseed: -1\n", "'seed'"),
        ("command: sweep\nquotient: qpl\np: 2\nn: 9\nns: [9, 19, 39]\n", "'n'"),
        ("command: sweep\nquotient: qpl\np: 2\nns: [9, 19]\n", "'ns'"),
        ("command: verify\ntarget: bogus\n", "'target'"),
        ("command: verify\ntarget: prop31\n", "'p'"),
        ("command: verify\ntarget: ineq33\np0: 2\np1: 1\np: 4\n", "p0+p1=p"),
        ("command: verify\ntarget: scaling\nF: {kind: plap, p: 2}\nG: {kind: power, p0: 2}\nradii: [1, 2]\n", "'radii'"),
        ("command: solve\nF: {kind: plap, p: 2}\nG: {kind: pgw, p0: 2, p1: 0}\n", "'lambdas'"),
        ("command: solve\nF: {kind: plap, p: 2, mu: 1}\nG: {kind: power, p0: 2}\nlambdas: [1]\n", "'F'"),
        ("command: probe\nF: {kind: plap, p: 2}\nG: {kind: power, p0: 2}\nlambda: 1\nsamples: 10\n", "'samples'"),
        ("- just\n- a list\n", "mapping"),
        ("command: [unclosed\n", "YAML"),
    ],
)
def test_config_errors_name_the_key(doc, needle):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(doc)
    assert needle in str(info.value)
    assert "\n" not in str(info.value)


def test_constraint_diagnostic_differs_from_unknown_key():
    with pytest.raises(cli.ConfigError) as a:
        cli.parse_config("command: eig\nquotient: q33a\np0: 2\np1: 2\np: 3\n")
    with pytest.raises(cli.ConfigError) as b:
        cli.parse_config("command: eig\nquotient: q33a\np0: 2\np1: 2\nfoo: 3\n")
    assert "constraint violation" in str(a.value) and "unknown key" in str(b.value)


def test_baseline_row():
    code, rows = cli.run(cli.parse_config("command: baseline\nn: 199\n"))
    assert code == 0 and len(rows) == 1
    row = rows[0].as_dict()
    assert row["status"] == "ok"
    assert row["lambda_est"] == pytest.approx(9.8696, rel=1e-4)


def test_eig_row():
    code, rows = cli.run(cli.parse_config("command: eig\nquotient: q33a\np0: 2\np1: 0\nn: 199\n"))
    row = rows[0].as_dict()
    assert code == 0 and row["status"] == "ok"
    assert row["lambda_est"] == pytest.approx(math.pi**2, rel=2e-2)
    assert row["reference"] == pytest.approx(math.pi**2, rel=1e-15)


def test_failed_inequality_exits_two():
    code, rows = cli.run(cli.parse_config("command: verify\ntarget: ineq33\np0: 2\np1: 1\nn: 49\n"))
    assert code == 2
    assert [r.status for r in rows] == ["violated", "ok"]


def test_sweep_rows():
    code, rows = cli.run(cli.parse_config("command: sweep\nquotient: qpl\np: 2\nns: [19, 39, 79]\n"))
    assert code == 0 and [r.metrics["n"] for r in rows] == [19, 39, 79]
    errs = [r.metrics["rel_err"] for r in rows]
    assert errs[0] > errs[1] > errs[2]


def test_solve_rows_mark_unsolved_subthreshold_only():
    doc = ("command: solve\nn: 49\nF: {kind: plap, p: 2}\nG: {kind: pgw, p0: 2, p1: 0}\n"
           "lambda_fractions: [0, 0.5, 0.9, 1.5]\n")
    code, rows = cli.run(cli.parse_config(doc))
    assert code == 0 and all(r.status == "ok" for r in rows)
    assert rows[1].metrics["lambda"] == pytest.approx(0.5 * rows[1].metrics["reference"], rel=1e-15)


def test_probe_rows():
    doc = "command: probe\nn: 49\nF: {kind: plap, p: 2}\nG: {kind: pgw, p0: 2, p1: 0}\nlambda: 4.9\nsamples: 200\n"
    code, rows = cli.run(cli.parse_config(doc))
    assert code == 0 and len(rows) == 2 and all(r.metrics["violations"] == 0 for r in rows)


@pytest.mark.parametrize("target, extra", [
    ("prop31", "p: 2"), ("ineq46", "p: 3\nsamples: 100"), ("fully_nonlinear", "p: 2"), ("composed", "p: 2"),
    ("scaling", "F: {kind: plap, p: 3}\nG: {kind: pgw, p0: 2, p1: 1}"),
])
def test_verify_targets_pass(target, extra):
    code, rows = cli.run(cli.parse_config(f"command: verify\nn: 99\ntarget: {target}\n{extra}\n"))
    assert code == 0 and all(r.status == "ok" for r in rows)


def test_csv_layout_and_precision(tmp_path):
    cfg = tmp_path / "c.yaml"
    out = tmp_path / "r.csv"
    cfg.write_text("command: baseline\nn: 99\n")
    assert cli.main(["--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    text = out.read_text(encoding="utf-8")
    header = text.splitlines()[0].split(",")
    assert tuple(header) == cli.COLUMNS
    row = _rows_from_csv(text)[0]
    lam = float(row["lambda_est"])
    assert row["lambda_est"] == "%.17g" % lam
    assert row["lambda"] == "" and row["violations"] == ""


def test_json_output_matches_csv_fields(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("command: baseline\nn: 49\n")
    assert cli.main(["--config", str(cfg), "--format", "json", "--quiet"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert list(data) == ["rows"] and list(data["rows"][0]) == list(cli.COLUMNS)
    assert cli.main(["--config", str(cfg), "--quiet"]) == 0
    row = _rows_from_csv(capsys.readouterr().out)[0]
    assert float(row["lambda_est"]) == data["rows"][0]["lambda_est"]


def test_round_trip_from_echoed_parameters():
    doc = "command: eig\nquotient: q44\np: 3\nn: 59\nseed: 4\nminimize: {starts: 3}\n"
    _, rows = cli.run(cli.parse_config(doc))
    params = json.loads(rows[0].params)
    _, again = cli.run(cli.parse_config(params))
    assert again[0].as_dict() == rows[0].as_dict()


def test_seed_flag_overrides_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("command: verify\ntarget: ineq46\np: 3\nn: 29\nsamples: 100\nseed: 1\n")
    assert cli.main(["--config", str(cfg), "--seed", "77", "--quiet"]) == 0
    row = _rows_from_csv(capsys.readouterr().out)[0]
    assert json.loads(row["params"])["seed"] == 77


def test_config_error_exit_one(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("command: baseline\nfoo: 1\n")
    assert cli.main(["--config", str(cfg)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "'foo'" in err[0]
    assert cli.main(["--config", str(tmp_path / "missing.yaml")]) == 1


def test_stdin_config(monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO("command: baseline\nn: 9\n"))
    assert cli.main(["--config", "-", "--quiet"]) == 0
    assert len(_rows_from_csv(capsys.readouterr().out)) == 1


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("command: verify\ntarget: ineq33\np0: 2\np1: 1\nn: 29\n")
    proc = subprocess.run([sys.executable, "-m", "relspec", "--config", str(cfg)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 2
    assert "violated" in proc.stdout and "exit 2" in proc.stderr
