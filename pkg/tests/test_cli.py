import json

import pytest

from slowvoter.cli import _split_overrides, apply_overrides, main
from slowvoter.errors import ConfigurationError
from slowvoter.harness import runs_root

SMALL = ["--replicas", "2000"]


def _run_id(out: str) -> str:
    return next(line.split("=", 1)[1] for line in out.splitlines() if line.startswith("run_id="))


def test_overrides_are_parsed_as_json_and_nested():
    pairs = _split_overrides(["--rates.alpha", "2", "--profile.kind=ramp", "--options.times", "[0.1, 0.2]"])
    cfg = apply_overrides({"rates": {"N": 5}}, pairs)
    assert cfg == {"rates": {"N": 5, "alpha": 2}, "profile": {"kind": "ramp"}, "options": {"times": [0.1, 0.2]}}
    with pytest.raises(ConfigurationError):
        _split_overrides(["--seed"])
    with pytest.raises(ConfigurationError):
        _split_overrides(["seed", "3"])
    with pytest.raises(ConfigurationError):
        apply_overrides({"t": 1.0}, [("t.x", "2")])


def test_run_prints_checks_and_exit_code(capsys):
    assert main(["run", "--preset", "martingale-exact", *SMALL]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS ") == 4
    assert (runs_root() / _run_id(out) / "report.json").is_file()


def test_failed_tolerance_gives_exit_one(capsys):
    code = main(["run", "--preset", "hydro-robin", "--replicas", "50", "--options.points", "3",
                 "--tolerances.sup", "0"])
    assert code == 1
    assert "FAIL sup_abs_diff" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["run", "--preset", "martingale-exact", "--replicas", "0"],
    ["run", "--preset", "martingale-exact", "--rates.alpha", "-1"],
    ["run", "--preset", "martingale-exact", "--colour", "red"],
    ["run"],
    ["show", "no-such-run"],
    ["list", "--bogus", "1"],
])
def test_configuration_errors_give_exit_two(argv, capsys):
    assert main(argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_config_file_and_root_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "martingale-exact", "replicas": 1000, "seed": 4}))
    root = tmp_path / "elsewhere"
    assert main(["run", "--config", str(cfg), "--root", str(root)]) == 0
    rid = _run_id(capsys.readouterr().out)
    assert (root / rid / "config.json").is_file()
    assert json.loads((root / rid / "config.json").read_text())["seed"] == 4


def test_compare_list_and_show(capsys):
    main(["run", "--preset", "martingale-exact", *SMALL])
    a = _run_id(capsys.readouterr().out)
    main(["run", "--preset", "martingale-exact", *SMALL, "--seed", "1"])
    b = _run_id(capsys.readouterr().out)
    main(["run", "--preset", "hydro-robin", "--replicas", "100", "--options.points", "3"])
    h = _run_id(capsys.readouterr().out)
    assert main(["compare", a, a]) == 0
    assert main(["compare", a, b]) == 1
    assert main(["compare", a, b, "--stderr-k", "4"]) == 0
    assert main(["compare", a, h]) == 2
    capsys.readouterr()
    assert main(["list"]) == 0
    listed = capsys.readouterr().out
    assert a in listed and b in listed and h in listed
    assert main(["list", "--presets"]) == 0
    assert "gamma-estimate" in capsys.readouterr().out
    assert main(["show", a]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["run_id"] == a and shown["report"]["op"] == "martingale-exact"


def test_console_entry_point_parses_help(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    assert "SLOWVOTER_RUNS" in capsys.readouterr().out
