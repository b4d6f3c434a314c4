from importlib import resources

import numpy as np
import pytest
import yaml

import batches as B
from trigcons import cli
from trigcons import config as cfg
from trigcons.engine import Scenario, prepare, run
from trigcons.triggers import AbsoluteExp

DATA = resources.files("trigcons") / "data"
SEVEN_ROWS = [" ".join(str(int(v)) for v in row) for row in B.SEVEN_SYSTEM]


def _scenario(tmp_path, graph, **over):
    body = {"graph": graph, "rule": {"type": "absolute_exp", "beta": 0.5}, "horizon": 20,
            "output": {"directory": str(tmp_path / "out")}}
    body.update(over)
    p = tmp_path / "scenario.yaml"
    p.write_text(yaml.safe_dump(body))
    return p


def _seven(tmp_path, **over):
    over.setdefault("initial_state", [float(v) for v in B.SEVEN_X0])
    return _scenario(tmp_path, {"system_matrix": "\n".join(SEVEN_ROWS)}, **over)


def _summary(tmp_path):
    return cfg.read_summary(tmp_path / "out" / "summary.txt")


def test_bundled_scenario_runs(tmp_path, capsys):
    code = cli.main(["run", "--config", str(DATA / "seven_agents_scenario.yaml"), "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_OK
    for name in ("events.csv", "trace.csv", "summary.txt"):
        assert (tmp_path / "out" / name).exists()
    summ = _summary(tmp_path)
    assert summ["mode"] == "self_triggered" and summ["agents"] == "7"
    assert float(summ["final_spread"]) < 1e-3
    assert "total_events" in capsys.readouterr().out


def test_trace_csv_layout(tmp_path):
    cli.main(["run", "--config", str(_seven(tmp_path)), "--sample-period", "0.5"])
    rows = (tmp_path / "out" / "trace.csv").read_text().splitlines()
    assert rows[0] == "time,x1,x2,x3,x4,x5,x6,x7,V"
    assert len(rows) == 1 + 41
    first = [float(v) for v in rows[1].split(",")]
    np.testing.assert_array_equal(first[1:8], B.SEVEN_X0)


def test_event_log_round_trip_reproduces_final_state(tmp_path):
    cli.main(["run", "--config", str(_seven(tmp_path))])
    events = cfg.read_events(tmp_path / "out" / "events.csv")
    s = Scenario(B.seven_laplacian(), B.SEVEN_X0, AbsoluteExp(0.5), horizon=20.0)
    tr = run(s, prepare(s))
    assert events == tr.events
    summ = _summary(tmp_path)
    x = cfg.final_state_from_events(events, 7, float(summ["final_time"]))
    np.testing.assert_array_equal(x, tr.final_state)


def test_consensus_start_has_one_event_per_agent(tmp_path):
    cli.main(["run", "--config", str(_seven(tmp_path, initial_state=[0.5] * 7))])
    summ = _summary(tmp_path)
    assert summ["total_events"] == "7" and summ["termination"] == "consensus"


def test_bad_row_sum_is_config_error(tmp_path, capsys):
    rows = list(SEVEN_ROWS)
    rows[2] = rows[2].replace("-12", "-13", 1)
    p = _scenario(tmp_path, {"system_matrix": "\n".join(rows)}, initial_state=[0.0] * 7)
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_CONFIG
    assert "row 3" in capsys.readouterr().err


def test_malformed_inputs_are_config_errors(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    p = _seven(tmp_path, initial_state=[1.0, 2.0])
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_CONFIG
    p = _seven(tmp_path, rule={"type": "bogus"})
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_CONFIG


def test_missing_initial_state_is_seeded(tmp_path):
    p = _seven(tmp_path, initial_state=None)
    a = cfg.load_config(p, seed=3).scenario.x0
    b = cfg.load_config(p, seed=3).scenario.x0
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, cfg.load_config(p, seed=4).scenario.x0)


def test_constants_seven_agents(capsys):
    assert cli.main(["constants", "--config", str(DATA / "seven_agents.yaml")]) == cli.EXIT_OK
    out = dict(line.split(" = ", 1) for line in capsys.readouterr().out.splitlines())
    assert out["K"] == "2" and out["block_sizes"] == "4 3"
    assert out["permutation"] == "1 2 3 4 5 6 7"
    np.testing.assert_allclose([float(v) for v in out["root_xi"].split()], [5 / 16, 7 / 16, 1 / 4], atol=1e-14)
    np.testing.assert_allclose([float(v) for v in out["scc1_xi"].split()], np.array([12, 28, 42, 25]) / 107,
                               atol=1e-14)
    assert float(out["scc1_ordering_margin"]) >= 0


def test_constants_two_cycle_and_csv(tmp_path, capsys):
    csv_path = tmp_path / "c.csv"
    assert cli.main(["constants", "--config", str(DATA / "two_cycle.yaml"), "--csv", str(csv_path)]) == 0
    out = dict(line.split(" = ", 1) for line in capsys.readouterr().out.splitlines())
    assert [float(v) for v in out["xi"].split()] == pytest.approx([0.5, 0.5], abs=1e-15)
    assert float(out["lambda2"]) == pytest.approx(1.0, abs=1e-12)
    assert csv_path.read_text().splitlines()[0] == "key,value"


def test_disconnected_graph_is_hypothesis_error(tmp_path, capsys):
    p = tmp_path / "g.yaml"
    p.write_text(yaml.safe_dump({"agents": 3, "edges": [[1, 2, 1.0]]}))
    assert cli.main(["constants", "--config", str(p)]) == cli.EXIT_HYPOTHESIS
    assert "spanning tree" in capsys.readouterr().err


def test_relative_constant_out_of_range(tmp_path, capsys):
    p = _scenario(tmp_path, str(DATA / "two_cycle.yaml"), initial_state=[1.0, -1.0],
                  rule={"type": "relative_constant", "c": 1.5})
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_HYPOTHESIS
    assert "hypothesis" in capsys.readouterr().err


def test_zeno_exit_code_and_artifacts(tmp_path):
    p = _seven(tmp_path, event_cap=40)
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_ZENO
    assert _summary(tmp_path)["termination"] == "event_cap"


def test_compare_single_config(tmp_path, capsys):
    p = _scenario(tmp_path, str(DATA / "two_cycle.yaml"), initial_state=[1.0, -1.0])
    assert cli.main(["compare", "--config", str(p)]) == cli.EXIT_OK
    assert capsys.readouterr().out.startswith("PASS")


def test_compare_single_agent(tmp_path, capsys):
    p = _scenario(tmp_path, {"agents": 1, "edges": []}, initial_state=[2.0])
    assert cli.main(["compare", "--config", str(p)]) == cli.EXIT_OK
    assert "count_diff=0" in capsys.readouterr().out


def test_compare_batch(capsys):
    assert cli.main(["compare", "--batch", "20", "--seed", "5"]) == cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 20 and all(line.startswith("PASS") for line in lines)


def test_compare_requires_input():
    assert cli.main(["compare"]) == cli.EXIT_CONFIG


def test_analyze_after_run(tmp_path, capsys):
    p = _scenario(tmp_path, str(DATA / "two_cycle.yaml"), initial_state=[3.0, -1.0], consensus_tol=0.0,
                  horizon=10, rule={"type": "absolute_exp", "beta": 0.4})
    assert cli.main(["run", "--config", str(p)]) == 0
    capsys.readouterr()
    assert cli.main(["analyze", "--config", str(p)]) == 0
    out = capsys.readouterr().out
    assert "envelope_checked = True" in out and "zeno_bound_respected = True" in out
    rows = (tmp_path / "out" / "bound_report.csv").read_text().splitlines()
    assert rows[0] == "time,dev1,dev2,env1,env2"
    assert (tmp_path / "out" / "analysis.txt").exists()


def test_analyze_reducible_graph(tmp_path, capsys):
    p = _seven(tmp_path)
    cli.main(["run", "--config", str(p)])
    capsys.readouterr()
    assert cli.main(["analyze", "--config", str(p)]) == 0
    assert "reducible" in capsys.readouterr().out


def test_argparse_rejects_unknown_command():
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 2
