import json

import pytest

from slowvoter.errors import ConfigurationError
from slowvoter.harness import PRESETS, ExperimentConfig, compare, list_runs, load_record, run, runs_root

SMALL = {"preset": "martingale-exact", "replicas": 2000}


def test_presets_build_from_their_defaults():
    for name in PRESETS:
        cfg = ExperimentConfig.from_dict({"preset": name})
        assert cfg.preset == name
        assert ExperimentConfig.from_dict(cfg.to_dict()).run_id == cfg.run_id


def test_run_id_tracks_semantic_fields_only():
    a = ExperimentConfig.from_dict(SMALL)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(a.to_dict())))
    assert again.run_id == a.run_id
    assert ExperimentConfig.from_dict({**SMALL, "workers": 3}).run_id == a.run_id
    assert ExperimentConfig.from_dict({**SMALL, "output_dir": "/elsewhere"}).run_id == a.run_id
    assert ExperimentConfig.from_dict({**SMALL, "seed": 1}).run_id != a.run_id
    assert ExperimentConfig.from_dict({**SMALL, "rates": {"alpha": 2.0}}).run_id != a.run_id
    assert a.run_id.startswith("martingale-exact-")


@pytest.mark.parametrize("bad,field", [
    ({"replicas": 0}, "replicas"),
    ({"rates": {"alpha": -1.0}}, "rates.alpha"),
    ({"t": 0}, "t"),
    ({"options": {"times": None, "H": None}, "tolerances": {"k_sigma": -1}}, "tolerances.k_sigma"),
    ({"profile": {"kind": "wedge", "params": []}}, "profile"),
])
def test_invalid_configurations_name_the_field(bad, field):
    with pytest.raises(ConfigurationError) as info:
        ExperimentConfig.from_dict({**SMALL, **bad})
    assert field in info.value.fields


def test_unknown_preset_and_keys_are_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"preset": "nope"})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({**SMALL, "colour": "red"})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"replicas": 3})


def test_run_writes_artifacts_and_reruns_are_byte_identical(tmp_path):
    rec = run(SMALL)
    out = runs_root() / rec.run_id
    assert {p.name for p in out.iterdir()} == {"martingale.csv", "report.json", "config.json", "record.json"}
    first = {p.name: p.read_bytes() for p in out.iterdir() if p.name != "record.json"}
    run(SMALL)
    assert {p.name: p.read_bytes() for p in out.iterdir() if p.name != "record.json"} == first
    other = run({**SMALL, "output_dir": str(tmp_path / "copy")})
    assert (tmp_path / "copy" / "martingale.csv").read_bytes() == first["martingale.csv"]
    report = json.loads(first["report.json"])
    assert report["op"] == "martingale-exact" and report["passed"] == rec.passed
    assert set(report["params"]) >= {"geometry", "rates", "seed"}
    assert other.run_id == rec.run_id


def test_compare_runs():
    a = run(SMALL)
    b = run({**SMALL, "seed": 1})
    assert compare(a.run_id, a.run_id)["passed"]
    assert not compare(a.run_id, b.run_id)["passed"]
    rep = compare(a.run_id, b.run_id, {"stderr_k": 4.0})
    assert rep["passed"]
    assert rep["tables"]["martingale.csv"]["mean_M_stderr"]["judged"] is False
    h = run({"preset": "hydro-robin", "replicas": 200, "options": {"points": 3}})
    with pytest.raises(ConfigurationError):
        compare(a.run_id, h.run_id)
    with pytest.raises(ConfigurationError):
        compare(a.run_id, "missing-run")


def test_listing_and_loading():
    assert list_runs() == []
    rec = run(SMALL)
    runs = list_runs()
    assert [r["run_id"] for r in runs] == [rec.run_id]
    loaded = load_record(rec.run_id)
    assert loaded["report"]["op"] == "martingale-exact"
    assert loaded["summary"]["passed"] == rec.passed


def test_hydro_preset_requires_the_one_dimensional_reduction():
    with pytest.raises(ConfigurationError):
        run({"preset": "hydro-sub", "geometry": {"d": 2}, "replicas": 10})
