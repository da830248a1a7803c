"""CLI behavior and JSON/CSV round trips."""

import json

import pytest

from transogf import fileio
from transogf.cli import main
from transogf.fileio import InputError

TOY_NET = {
    "gas": {
        "junctions": [
            {"id": "J0", "pr_min": 3.0e6, "pr_max": 6.0e6},
            {"id": "J1", "pr_min": 3.0e6, "pr_max": 6.0e6},
        ],
        "pipes": [
            {"id": "P0", "from": "J0", "to": "J1", "length": 15000.0,
             "diameter": 0.5},
        ],
        "suppliers": [
            {"id": "S", "junction": "J0", "v_min": 0.0, "v_max": 5000.0,
             "cost": 1.0},
        ],
        "loads": [
            {"id": "L", "junction": "J1",
             "profile": [[0, 400], [1440, 400]]},
        ],
    },
}

TOY_SCEN = {
    "horizon_hours": 1,
    "dt_s": 900.0,
    "dx_m": 5000.0,
    "init_pressure_frac": 0.85,
}


@pytest.fixture
def toy_files(tmp_path):
    net = tmp_path / "net.json"
    scen = tmp_path / "scen.json"
    net.write_text(json.dumps(TOY_NET))
    scen.write_text(json.dumps(TOY_SCEN))
    return str(net), str(scen)


def test_missing_file_exits_2(tmp_path, capsys):
    rc = main(["gas", "--network", "nope.json", "--scenario", "nope.json",
               "--model", "weymouth", "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_invalid_json_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = main(["gas", "--network", str(bad), "--scenario", str(bad),
               "--model", "weymouth", "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_opf_empty_horizon(toy_files, tmp_path, capsys):
    net, scen = toy_files
    out = tmp_path / "o"
    rc = main(["opf", "--network", "net6.json", "--scenario",
               "net6_scenario.json", "--hours", "0", "--out", str(out)])
    assert rc == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "empty-horizon"
    assert (out / "dispatch.csv").read_text().startswith("hour,unit_id")


def test_opf_fixture_bundle(tmp_path):
    out = tmp_path / "o"
    rc = main(["opf", "--network", "net6.json", "--scenario",
               "net6_scenario.json", "--out", str(out)])
    assert rc == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "optimal"
    assert man["max_residual"] <= 1e-6
    # gas unit hits its 90 MW cap in the last two hours
    rows = [l.split(",") for l in
            (out / "dispatch.csv").read_text().strip().split("\n")[1:]]
    by_hour = {int(r[0]): float(r[2]) for r in rows if r[1] == "u1"}
    assert by_hour[7] == pytest.approx(90.0, abs=1e-3)
    assert by_hour[8] == pytest.approx(90.0, abs=1e-3)
    assert by_hour[1] == pytest.approx(0.0, abs=1e-3)


def test_gas_weymouth_toy(toy_files, tmp_path, capsys):
    net, scen = toy_files
    out = tmp_path / "o"
    rc = main(["gas", "--network", net, "--scenario", scen,
               "--model", "weymouth", "--out", str(out)])
    assert rc == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["model"] == "weymouth"
    assert s["served_fuel_fraction"] == 1.0
    assert s["hourly_supply"]["S"][0] == pytest.approx(400.0, rel=1e-6)
    assert (out / "pipes.csv").exists()


def test_gas_proposed_toy(toy_files, tmp_path, capsys):
    net, scen = toy_files
    out = tmp_path / "o"
    rc = main(["gas", "--network", net, "--scenario", scen,
               "--model", "proposed", "--out", str(out)])
    assert rc == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "optimal"
    assert s["recovery_max_error"] <= 1e-5
    rec = json.loads((out / "recovery.json").read_text())
    assert rec["tight"] is True
    assert (out / "tightness.csv").read_text().startswith(
        "pipe,segment,minute,ratio")


def test_gas_scp_iteration_cap(toy_files, tmp_path, capsys):
    net, scen = toy_files
    out = tmp_path / "o"
    rc = main(["gas", "--network", net, "--scenario", scen, "--model", "scp",
               "--max-iter", "1", "--out", str(out)])
    assert rc == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "non-converged"
    assert "did not converge" in capsys.readouterr().err


def test_fixture_name_resolution(tmp_path, monkeypatch):
    # bare names resolve against TRANSOGF_FIXTURES when set
    net = tmp_path / "mynet.json"
    scen = tmp_path / "myscen.json"
    net.write_text(json.dumps(TOY_NET))
    scen.write_text(json.dumps(TOY_SCEN))
    monkeypatch.setenv("TRANSOGF_FIXTURES", str(tmp_path))
    out = tmp_path / "o"
    rc = main(["gas", "--network", "mynet.json", "--scenario", "myscen.json",
               "--model", "weymouth", "--out", str(out)])
    assert rc == 0


def test_load_network_rejects_dangling_refs(tmp_path):
    bad = dict(TOY_NET)
    bad = json.loads(json.dumps(TOY_NET))
    bad["gas"]["pipes"][0]["to"] = "nowhere"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(InputError):
        fileio.load_network(p)


def test_load_scenario_rejects_unknown_fields(tmp_path):
    p = tmp_path / "scen.json"
    p.write_text(json.dumps({**TOY_SCEN, "bogus": 1}))
    with pytest.raises(InputError):
        fileio.load_scenario(p)
    p.write_text(json.dumps({"dt_s": 300.0}))
    with pytest.raises(InputError):
        fileio.load_scenario(p)


def test_scenario_overrides(tmp_path):
    p = tmp_path / "scen.json"
    p.write_text(json.dumps(TOY_SCEN))
    scen = fileio.load_scenario(p, dt_s=300.0, horizon_hours=2)
    assert scen.dt_s == 300.0
    assert scen.horizon_hours == 2
    # None overrides are ignored
    scen = fileio.load_scenario(p, dt_s=None)
    assert scen.dt_s == 900.0
