from __future__ import annotations

import os

from graspsim.cli import main

SCENARIO = os.path.join(os.path.dirname(__file__), "..", "scenarios", "approach.scn")


def test_run_replay_metrics_round_trip(tmp_path, capsys):
    trace = str(tmp_path / "session.trace")
    assert main(["run", "--scenario", SCENARIO, "--seed", "1", "--trace", trace]) == 0
    assert os.path.exists(trace)
    assert os.path.exists(trace + ".timing")
    out = capsys.readouterr().out
    assert "completed" in out

    assert main(["replay", "--trace", trace]) == 0
    out = capsys.readouterr().out
    assert "zero divergences" in out

    assert main(["metrics", "--trace", trace]) == 0
    out = capsys.readouterr().out
    assert "achieved_fps=" in out
    assert "false_grasp_count=0" in out
    assert "tick_latency_p99_ms=" in out  # sidecar picked up


def test_metrics_report_directory(tmp_path, capsys):
    trace = str(tmp_path / "session.trace")
    main(["run", "--scenario", SCENARIO, "--trace", trace])
    capsys.readouterr()
    report = str(tmp_path / "report")
    assert main(["metrics", "--trace", trace, "--report", report]) == 0
    for name in ("metrics.csv", "episodes.csv", "timeline.png", "episodes.png"):
        assert os.path.exists(os.path.join(report, name))


def test_replay_nonzero_on_divergence(tmp_path, capsys):
    trace = str(tmp_path / "session.trace")
    main(["run", "--scenario", SCENARIO, "--trace", trace])
    lines = open(trace).read().splitlines()
    mutated = [
        ln.replace("action=close", "action=open") if " cmd " in ln and "close" in ln else ln
        for ln in lines
    ]
    bad = tmp_path / "mutated.trace"
    bad.write_text("\n".join(mutated) + "\n")
    assert main(["replay", "--trace", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "divergence at seq" in err


def test_errors_are_one_line_nonzero(tmp_path, capsys):
    missing = str(tmp_path / "nope.scn")
    assert main(["run", "--scenario", missing, "--trace", str(tmp_path / "t")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert len(err.strip().splitlines()) == 1

    bad_scn = tmp_path / "bad.scn"
    bad_scn.write_text("seed = 1\nwarp = 5\n")
    assert main(["run", "--scenario", str(bad_scn), "--trace", str(tmp_path / "t2")]) == 1
    err = capsys.readouterr().err
    assert "warp" in err


def test_seed_override_changes_trace(tmp_path):
    t1, t2, t3 = (str(tmp_path / f"s{i}.trace") for i in range(3))
    main(["run", "--scenario", SCENARIO, "--seed", "1", "--trace", t1])
    main(["run", "--scenario", SCENARIO, "--seed", "2", "--trace", t2])
    main(["run", "--scenario", SCENARIO, "--seed", "1", "--trace", t3])
    b1, b2, b3 = (open(p, "rb").read() for p in (t1, t2, t3))
    assert b1 != b2
    assert b1 == b3


def test_config_file_applies(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"perception": {"d_grasp_mm": 60}}')
    trace = str(tmp_path / "cfg.trace")
    assert (
        main(["run", "--scenario", SCENARIO, "--trace", trace, "--config", str(cfg)]) == 0
    )
    head = open(trace).readline()
    assert '"d_grasp_mm":60' in head.replace(" ", "")
