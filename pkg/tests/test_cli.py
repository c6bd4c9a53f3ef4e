import csv
import io
import json
import math

import numpy as np
import pytest

from pspinlab import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def body(text):
    return [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]


def test_theta_example(capsys):
    code, out, _ = run(capsys, "theta", "--p", "3", "--u-grid", "-2:1:0.01")
    assert code == cli.EXIT_OK
    lines = out.splitlines()
    assert lines[0].startswith("# manifest_sha256=")
    rows = body(out)
    assert rows[0] == ["u", "theta", "branch"]
    us = np.array([float(r[0]) for r in rows[1:]])
    assert us.size == 301
    k = int(np.argmin(np.abs(us - 0.5)))
    assert float(rows[1 + k][1]) == pytest.approx(0.5 * math.log(2), abs=1e-6)


def test_theta_rows_full_precision(capsys):
    _, out, _ = run(capsys, "theta", "--u-grid", "-0.3,0.1")
    vals = [r[1] for r in body(out)[1:]]
    assert all(float(v) == float(format(float(v), ".17g")) for v in vals)
    assert any(len(v.replace("-", "").replace(".", "").lstrip("0")) >= 15 for v in vals)


def test_oracle_check_example(capsys):
    code, out, _ = run(capsys, "oracle-check", "--p", "5", "--r", "0.3")
    assert code == cli.EXIT_OK
    summary = json.loads(out.splitlines()[1][len("# summary "):])
    assert summary["max_abs_diff"] < 1e-6


def test_oracle_check_mismatch_is_numerical_failure(capsys):
    code, _, err = run(capsys, "oracle-check", "--orientation", "facing", "--r", "0.5")
    assert code == cli.EXIT_NUMERICAL
    payload = json.loads(err)
    assert payload["error"] == "NumericalFailure" and payload["max_abs_diff"] >= 1e-6


@pytest.mark.parametrize("argv", [
    ("theta", "--p", "1"),
    ("theta", "--u-grid", "1:0:0.1"),
    ("theta", "--u-grid", "0:1:0.3"),
    ("cov", "--r-grid", "0.5,1.0"),
    ("oracle-check", "--n", "2"),
    ("rmt", "--mode", "bogus"),
    ("rmt", "--samples", "1"),
    ("second-moment", "--r-lo", "0.5", "--r-hi", "0.1"),
    ("ratio", "--p", "2"),
    ("landscape", "--method", "angle", "--N", "3"),
    ("first-moment", "--samples", "abc"),
    ("no-such-command",),
])
def test_config_errors_exit_2(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == cli.EXIT_CONFIG


def test_seed_must_fit_64_bits(capsys):
    assert run(capsys, "theta", "--seed", str(2 ** 64))[0] == cli.EXIT_CONFIG


def test_config_file_and_override(tmp_path, capsys):
    cfg = cli.build_config("first-moment", {}, {"p": "4", "u_grid": "-1,0,inf", "master_seed": "9"})
    text = cfg.to_text()
    again = cli.ExperimentConfig.from_text(text)
    assert again == cfg
    path = tmp_path / "run.ini"
    path.write_text(text)
    code, out, _ = run(capsys, "first-moment", "--config", str(path), "--N", "2")
    assert code == cli.EXIT_OK
    rows = body(out)
    assert [float(r[0]) for r in rows[1:]] == [-1.0, 0.0, math.inf]
    code, _, _ = run(capsys, "theta", "--config", str(path))
    assert code == cli.EXIT_CONFIG


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[params]\nwibble = 3\n")
    assert run(capsys, "theta", "--config", str(path))[0] == cli.EXIT_CONFIG


def test_grid_parsing():
    assert np.allclose(cli.parse_grid("0:1:0.25"), [0, 0.25, 0.5, 0.75, 1])
    assert cli.parse_grid("-inf,0").tolist() == [-math.inf, 0.0]
    with pytest.raises(cli.ConfigError):
        cli.parse_grid("")


def test_rerun_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert cli.main(["first-moment", "--N", "4", "--u-grid", "-1:0:0.5", "--samples", "300",
                         "--seed", "5", "--output", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert a.read_text().startswith(f"# manifest_sha256={man['manifest_sha256']}")
    assert man["output_checksums"]["output"]
    assert man["stage_seeds"] == {"goe": [5, 0]}


def test_output_independent_of_threads(capsys):
    outs = []
    for threads in ("1", "3"):
        code, out, _ = run(capsys, "landscape", "--N", "3", "--trials", "6", "--seed", "2",
                           "--threads", threads, "--detail", "points")
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]


def test_seed_changes_output(capsys):
    a = run(capsys, "rmt", "--samples", "500", "--seed", "1")[1]
    b = run(capsys, "rmt", "--samples", "500", "--seed", "2")[1]
    assert body(a) != body(b)
    assert a.splitlines()[0] != b.splitlines()[0]


def test_json_format(capsys):
    code, out, _ = run(capsys, "cov", "--p", "4", "--r-grid", "0.1,0.2", "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert len(d["manifest_sha256"]) == 64 and len(d["rows"]) == 2
    assert d["rows"][0]["g_concave"] is True


@pytest.mark.parametrize("argv", [
    ("rmt", "--mode", "ratio", "--n-grid", "4,8", "--samples", "400"),
    ("rmt", "--mode", "overcrowding", "--n", "6", "--samples", "400"),
    ("rmt", "--mode", "perturbation", "--samples", "30"),
    ("rmt", "--mode", "bnorm", "--p", "5", "--N", "6", "--r", "0.2", "--samples", "200"),
    ("rmt", "--mode", "delta", "--p", "5", "--N", "6", "--r", "0.0", "--samples", "400"),
    ("second-moment", "--N", "4", "--samples", "50", "--r-lo", "-0.3", "--r-hi", "0.3"),
    ("ratio", "--N", "3", "--samples", "50", "--first-samples", "200", "--u", "0"),
    ("decompose", "--N", "5", "--samples", "40", "--first-samples", "200"),
    ("concentrate", "--N-grid", "2,3", "--trials", "5", "--bootstrap", "50"),
])
def test_every_command_runs(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    assert out.startswith("# manifest_sha256=")
    assert len(body(out)) >= 2
