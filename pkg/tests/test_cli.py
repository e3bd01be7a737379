import json

import numpy as np
import pytest

from shapedispatch.cli import main
from shapedispatch.dispatch_defense import chebyshev_center, polygon_to_csv, preventive_region, region_polygon_2d
from shapedispatch.grid_model import load_case, shift_factors
from shapedispatch.pipeline import (
    ConfigError,
    config_from_dict,
    hstar_checksum,
    load_config,
    read_hstar,
    run_pipeline,
)

from conftest import FIXTURES


def write_config(tmp_path, **overrides):
    doc = {
        "case": str(FIXTURES / "three_bus.json"),
        "tau": 0.5,
        "shaping": {"omega_air": 0.05, "budget": 6, "big_m": "auto"},
        "pareto_shape": {"omega_air": [0.0, 1.0]},
        "dispatch": {"omega_g": [0.0, 0.05, 0.2]},
    }
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_base_config_defaults(base_config):
    sh = base_config.shaping
    assert base_config.tau == 0.5
    assert (sh.omega_air, sh.budget, sh.big_m.as_tuple()) == (0.15, 15, (1.0, 2.0, 1.0))
    assert base_config.dispatch_omegas == (0.01, 0.015, 0.03, 0.06, 0.10)


def test_missing_case_file(tmp_path, capsys):
    cfg = write_config(tmp_path, case="nowhere/missing.m")
    assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "missing.m" in capsys.readouterr().err


def test_bad_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        config_from_dict({"tau": 0.5})
    with pytest.raises(ConfigError):
        config_from_dict({"case": str(FIXTURES / "three_bus.json"), "shaping": {"budget": -2}})


def test_analyze_attack_prints_volume(capsys, tmp_path):
    assert main(["analyze-attack", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "2.389366"
    assert (tmp_path / "overloads.csv").read_text().startswith("line_id,F_bar,H,V\n1,1.500000,")


def test_shape_and_dispatch_roundtrip(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert main(["shape", "--config", str(cfg), "--out", str(out), "--omega-air", "0.0"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["volume"] == 0.0
    H = read_hstar(out / "shaping.json")
    assert H.shape == (3,)
    assert np.allclose(read_hstar(out / "overloads.csv"), H, atol=1e-6)
    assert main(["dispatch", "--config", str(cfg), "--hstar", str(out / "shaping.json"), "--out", str(out)]) == 0
    assert (out / "dispatch.csv").read_text().startswith("omega_g,r,r_pct")


def test_dispatch_zero_hstar_is_security_center(tmp_path, capsys):
    cfg = write_config(tmp_path)
    hfile = tmp_path / "h.json"
    hfile.write_text("[0, 0, 0]")
    assert main(["dispatch", "--config", str(cfg), "--hstar", str(hfile), "--omega-g", "0"]) == 0
    row = capsys.readouterr().out.splitlines()[1].split(",")
    case = load_case(FIXTURES / "three_bus.json")
    S = shift_factors(case)
    _, r = chebyshev_center(preventive_region(case, S, np.zeros(3)))
    assert float(row[1]) == pytest.approx(r, abs=1e-6)


def test_dispatch_rejects_wrong_length(tmp_path, capsys):
    cfg = write_config(tmp_path)
    hfile = tmp_path / "h.json"
    hfile.write_text("[0, 0]")
    assert main(["dispatch", "--config", str(cfg), "--hstar", str(hfile)]) == 1
    assert "H*" in capsys.readouterr().err


def test_pareto_shape_cli(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["pareto-shape", "--config", str(cfg), "--budget", "0,3,6", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "pareto_shape.csv").read_text().splitlines()
    assert lines[0] == "omega_air,budget,C_AIR,volume,reduction_pct,delta,epsilon,status"
    assert [l.split(",")[1] for l in lines[1:]] == ["0", "3", "6"]
    assert lines[1].split(",")[4] == "0.000000"


def test_pareto_dispatch_solves_p2_when_no_hstar(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["pareto-dispatch", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "pareto_dispatch.csv").read_text().splitlines()) == 4


def test_region2d_cli(tmp_path, capsys):
    assert main(["region2d", "--case", str(FIXTURES / "three_gen.json"), "--out", str(tmp_path)]) == 0
    case = load_case(FIXTURES / "three_gen.json")
    expected = polygon_to_csv(region_polygon_2d(preventive_region(case, shift_factors(case), np.zeros(3))))
    assert (tmp_path / "region2d.csv").read_text() == expected
    assert main(["region2d", "--config", str(write_config(tmp_path))]) == 1  # 2 generators


def test_pipeline_zero_tau(tmp_path):
    cfg = load_config(write_config(tmp_path, tau=0.0))
    report = run_pipeline(cfg, tmp_path / "o")
    assert report.exit_code == 0
    s = report.summary
    assert s["shaping"]["C_AIR"] == 0 and s["undefended_volume"] == 0.0
    assert s["H_star_sha256"] == hstar_checksum(np.zeros(3))
    case = load_case(FIXTURES / "three_bus.json")
    _, r = chebyshev_center(preventive_region(case, shift_factors(case), np.zeros(3)))
    assert s["dispatch"][0]["r"] == pytest.approx(r, abs=1e-6)


def test_pipeline_stage_failure_keeps_partial_outputs(tmp_path):
    # tau = 1 with no budget erodes every tightened limit below the base flows
    cfg = load_config(
        write_config(
            tmp_path,
            tau=1.0,
            shaping={"omega_air": 0.1, "budget": 0, "big_m": "auto"},
            pareto_shape={},
            modifications=[{"type": "set_line_limit", "line": "all", "limit": 0.45}],
        )
    )
    report = run_pipeline(cfg, tmp_path / "o")
    assert report.exit_code == 2
    assert report.summary["error"].startswith("[dispatch]")
    assert (tmp_path / "o" / "overloads.csv").exists()
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["error"].startswith("[dispatch]")


def test_pipeline_cli_three_gen(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        case=str(FIXTURES / "three_gen.json"),
        shaping={"omega_air": 0.05, "budget": 5, "big_m": "auto"},
        pareto_shape={},
    )
    out = tmp_path / "o"
    assert main(["pipeline", "--config", str(cfg), "--out", str(out), "--verify", "--seed", "3"]) == 0
    assert {p.name for p in out.iterdir()} == {"summary.json", "overloads.csv", "pareto_dispatch.csv", "region2d.csv"}
    assert json.loads((out / "summary.json").read_text())["config"]["seed"] == 3
