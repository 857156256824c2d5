import json
from fractions import Fraction as F

import pytest

from artifact.cli import main
from artifact.envs import UsageError, make_environment, true_model_set
from artifact.grades import success
from artifact.harness import EpisodeTrace, RunConfig, run_episode
from artifact.turing import FINISH

RECORD_FIELDS = ["t", "action", "observation", "reward", "k", "models", "grade", "alpha", "selected", "ms"]


def play(name, actions, seed=None):
    env = make_environment(name, seed)
    return [env.step(a) for a in actions]


def test_toggle_semantics():
    assert play("toggle", [1, 2, 2]) == [1, 1, 1]
    assert play("toggle", [2, 1, 1]) == [2, 1, 2]


def test_trap_finish_closes_episode():
    env = make_environment("trap")
    assert env.step(1) == 1
    assert env.step(2) == FINISH
    assert env.finished
    with pytest.raises(RuntimeError):
        env.step(1)


def test_coin_is_seeded():
    assert play("coin", [1] * 20, seed=5) == play("coin", [2] * 20, seed=5)
    assert play("coin", [1] * 20, seed=5) != play("coin", [1] * 20, seed=6)
    assert set(play("coin", [1] * 50, seed=0)) == {1, 2}


def test_constant_and_counter():
    assert play("constant", [1] * 4) == [1] * 4
    assert play("counter", [1, 2, 1, 2, 1, 2]) == [3, 3, 1, 3, 3, 1]


def test_environment_errors():
    with pytest.raises(UsageError):
        make_environment("nosuch")
    with pytest.raises(ValueError):
        make_environment("toggle").step(3)
    with pytest.raises(UsageError):
        true_model_set("coin", 2)


def test_reset_restores_start_state():
    env = make_environment("coin", 9)
    first = [env.step(1) for _ in range(5)]
    env.reset()
    assert [env.step(1) for _ in range(5)] == first


def test_config_validation():
    with pytest.raises(UsageError):
        RunConfig(world="toggle", agent="nope")
    with pytest.raises(UsageError):
        RunConfig(world="toggle", h=0)
    with pytest.raises(UsageError):
        RunConfig(world="toggle", eps=F(0))
    with pytest.raises(UsageError):
        RunConfig(world="toggle", steps=-1)


def test_zero_steps_leaves_success_undefined():
    trace = run_episode(RunConfig(world="toggle", steps=0))
    assert trace.records == []
    summary = trace.summary()
    assert summary["success"] is None and summary["success_undefined"]
    assert [json.loads(line) for line in trace.lines()] == [{"trace_version": 1}, summary]


def test_no_model_falls_back_to_action_1():
    # complexity 1 cannot express two observations
    trace = run_episode(RunConfig(world="toggle", k_max=1, steps=3, timing=False))
    assert trace.no_model_steps == [0, 1, 2]
    assert [r["action"] for r in trace.records] == [1, 1, 1]
    assert all(r["k"] is None and r["grade"] is None and r["models"] == 0 for r in trace.records)


@pytest.mark.parametrize("agent,h", [("det", 1), ("det", 2), ("oracle", 1), ("oracle", 2)])
def test_trap_agents_avoid_the_trap(agent, h):
    trace = run_episode(RunConfig(world="trap", agent=agent, h=h, steps=4, truth_depth=4, timing=False))
    assert [r["action"] for r in trace.records] == [1, 1, 1, 1]
    assert not trace.finished and trace.success == 1


def test_oracle_agent_on_toggle_reaches_good_state():
    trace = run_episode(RunConfig(world="toggle", agent="oracle", h=2, steps=6, timing=False))
    assert [r["action"] for r in trace.records] == [1, 2, 2, 2, 2, 2]
    assert trace.observations == [1] * 6


@pytest.fixture(scope="module")
def toggle_det_trace(tmp_path_factory):
    path = tmp_path_factory.mktemp("trace") / "toggle.jsonl"
    cfg = RunConfig(world="toggle", agent="det", k_max=2, h=2, steps=6, trace_path=str(path))
    return run_episode(cfg), path


def test_trace_format(toggle_det_trace):
    trace, path = toggle_det_trace
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0] == {"trace_version": 1}
    records, summary = rows[1:-1], rows[-1]
    assert len(records) == 6
    for t, record in enumerate(records):
        assert list(record) == RECORD_FIELDS
        assert record["t"] == t
        assert record["k"] == 2 and record["models"] > 0 and record["selected"] >= 1
        assert all("/" in x for x in record["grade"] + record["alpha"])
        assert len(record["grade"]) == 3
        assert isinstance(record["ms"], int)
    assert summary["summary"] is True and summary["steps"] == 6
    assert "trace_path" not in summary["config"]


def test_trace_success_replays(toggle_det_trace):
    trace, path = toggle_det_trace
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    observations = [r["observation"] for r in rows[1:-1]]
    assert F(rows[-1]["success"]) == success(observations)
    assert [r["reward"] for r in rows[1:-1]] == [1 if o == 1 else -1 for o in observations]


def test_det_toggle_first_move_is_the_toggle(toggle_det_trace):
    trace, _ = toggle_det_trace
    assert trace.records[0]["action"] == 1 and trace.observations[0] == 1


def test_cached_run_matches_uncached(tmp_path):
    cfg = dict(world="constant", agent="det", k_max=1, h=2, steps=3, timing=False)
    plain = run_episode(RunConfig(**cfg))
    cached = [run_episode(RunConfig(**cfg, cache_dir=str(tmp_path))) for _ in range(2)]
    assert any(tmp_path.iterdir())
    assert plain.lines() == cached[0].lines() == cached[1].lines()


def test_stochastic_agent_runs_on_constant():
    trace = run_episode(RunConfig(world="constant", agent="stoch", k_max=1, h=1, steps=3, timing=False))
    assert trace.observations == [1, 1, 1] and trace.no_model_steps == []
    assert all(r["k"] == 1 for r in trace.records)


def test_summary_success_matches_observations():
    trace = EpisodeTrace(RunConfig(world="toggle"), observations=[1, 2, 2])
    assert trace.success == F(-1, 3)


def test_cli_predict(capsys):
    assert main(["predict", "--word", "0000", "--k-max", "2"]) == 0
    assert capsys.readouterr().out.splitlines() == ["0", "k=2 machine=108230 word=2"]


def test_cli_run_writes_trace(tmp_path, capsys):
    out = tmp_path / "out.jsonl"
    code = main(["run", "--world", "toggle", "--agent", "det", "--k-max", "2", "--h", "2",
                 "--steps", "6", "--trace", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 8
    assert json.loads(capsys.readouterr().out)["steps"] == 6


def test_cli_exit_codes(capsys):
    assert main(["run", "--world", "nosuch"]) == 1
    assert main(["run", "--world", "toggle", "--h", "0"]) == 1
    assert main(["bogus"]) == 1
    assert main(["enumerate", "--n", "1", "--m", "1", "--k", "4"]) == 2
    err = capsys.readouterr().err
    assert "unknown world" in err and "capacity error" in err


def test_cli_enumerate_and_oracle(capsys):
    assert main(["enumerate", "--n", "1", "--m", "1", "--k", "1", "--history", "1:1 1:1", "--limit", "2"]) == 0
    assert capsys.readouterr().out.splitlines() == ["members 8 rows 8", "14 0", "14 1"]
    assert main(["oracle", "--world", "toggle", "--h", "3"]) == 0
    assert capsys.readouterr().out.splitlines() == ["1", "1/1 1/1 1/1 1/1"]


def test_cli_stmt3(capsys):
    assert main(["experiment", "stmt3", "--p", "1", "--length", "6", "--trials", "2"]) == 0
    assert capsys.readouterr().out.strip() == "mean 1.0000 ones 2 no_model 0 trials 2"
