import json
import textwrap

import pytest

from sphereflow.cli import EXIT_CONFIG, EXIT_OK, bundled_configs, load_config, main, parse_config
from sphereflow.errors import ConfigError

MINIMAL = textwrap.dedent("""\
    schema = 1
    name = "tiny"
    seed = 1

    [kernel]
    kind = "simple"
    beta = 1.0

    [init]
    kind = "uniform"
    d = 3
    n = 16

    [integrator]
    dt = 0.05
    t_end = 1.0
    """)


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("name", bundled_configs())
def test_bundled_configs_run(name, tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", name, "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"]
    assert len(summary["config_sha256"]) == 64
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("#") or "t" in header
    assert (out / "verdicts.jsonl").exists()


def test_minimal_config_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", write(tmp_path, MINIMAL), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["name"] == "tiny" and summary["seed"] == 1


def test_missing_seed_is_config_error(tmp_path, capsys):
    text = MINIMAL.replace("seed = 1\n", "")
    assert main(["simulate", write(tmp_path, text)]) == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_unknown_key_reports_line(tmp_path, capsys):
    text = MINIMAL.replace("t_end = 1.0", "t_end = 1.0\nstepsize = 3")
    assert main(["simulate", write(tmp_path, text)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "stepsize" in err and "line 17" in err


def test_syntax_error_reports_line(tmp_path, capsys):
    text = MINIMAL.replace('kind = "uniform"', 'kind = "uniform')
    assert main(["simulate", write(tmp_path, text)]) == EXIT_CONFIG
    assert "line 10" in capsys.readouterr().err


def test_missing_init_field(tmp_path):
    with pytest.raises(ConfigError, match="init.n"):
        parse_config(MINIMAL.replace("n = 16\n", ""))


def test_wrong_schema():
    with pytest.raises(ConfigError, match="schema"):
        parse_config(MINIMAL.replace("schema = 1", "schema = 2"))


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/none.toml")


def test_bad_init_value_is_config_error(tmp_path):
    text = MINIMAL.replace("n = 16", "n = 0")
    assert main(["simulate", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_check_writes_report(tmp_path):
    out = tmp_path / "geo.json"
    assert main(["check", "geometry", "--seed", "3", "--out", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["passed"] and report["seed"] == 3


def test_reproduce_example(tmp_path):
    assert main(["reproduce", "example-2-1", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "report.json").read_text())["passed"]


def test_list_configs(capsys):
    assert main(["list-configs"]) == EXIT_OK
    assert "kuramoto-cap.toml" in capsys.readouterr().out
