"""The agent-environment loop and its JSON Lines trace."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from artifact.envs import Environment, UsageError, make_environment, true_model_set
from artifact.grades import RewardMap, grade_to_strs, rational_str, success
from artifact.planner import (
    Belief,
    Decision,
    PlannerConfig,
    PlanStats,
    oracle_expectimax,
    plan,
)
from artifact.search import (
    MATERIALIZE_LIMIT,
    History,
    ModelSet,
    cache_path,
    find_models,
    load_cache,
    refine_models,
    save_cache,
)
from artifact.stochastic import (
    DEFAULT_ROW_CAP,
    extend_stoch_models,
    find_stoch_models,
    stoch_plan,
)
from artifact.turing import FINISH

__all__ = ["AGENTS", "TRACE_VERSION", "RunConfig", "EpisodeTrace", "run_episode", "write_trace"]

log = logging.getLogger(__name__)

TRACE_VERSION = 1
AGENTS = ("det", "stoch", "oracle")


@dataclass(frozen=True)
class RunConfig:
    world: str
    agent: str = "det"
    k_max: int = 2
    k: int | None = None  # fixed complexity of the stochastic agent, default k_max
    h: int = 2
    eps: Fraction | None = None
    gamma: Fraction = Fraction(1, 2)
    cap: int = 64
    budget_factor: int = 1000
    steps: int = 6
    seed: int = 0
    row_cap: int = DEFAULT_ROW_CAP
    truth_depth: int | None = None  # oracle only, default steps + h capped at 8
    timing: bool = True
    verify: bool = False  # recount finish mass at every observation vertex
    cache_dir: str | None = None
    trace_path: str | None = None

    def __post_init__(self) -> None:
        if self.agent not in AGENTS:
            raise UsageError(f"unknown agent {self.agent!r}; choose from {', '.join(AGENTS)}")
        bounds = {"k_max": self.k_max, "h": self.h, "cap": self.cap, "budget_factor": self.budget_factor,
                  "row_cap": self.row_cap}
        for name, value in bounds.items():
            if value < 1:
                raise UsageError(f"{name} must be positive")
        if self.steps < 0:
            raise UsageError("steps must be nonnegative")
        if self.k is not None and self.k < 1:
            raise UsageError("k must be positive")
        if self.eps is not None and Fraction(self.eps) <= 0:
            raise UsageError("eps must be positive")

    def echo(self) -> dict[str, Any]:
        """Settings that affect behaviour; output locations are left out."""
        out = asdict(self)
        for key in ("cache_dir", "trace_path", "timing", "verify"):
            out.pop(key)
        out["eps"] = rational_str(self.planner().eps)
        out["gamma"] = rational_str(self.gamma)
        return out

    def planner(self, rewards: RewardMap = RewardMap()) -> PlannerConfig:
        return PlannerConfig(
            h=self.h, eps=self.eps, gamma=self.gamma, cap=self.cap, rewards=rewards, verify=self.verify
        )


@dataclass
class EpisodeTrace:
    config: RunConfig
    records: list[dict[str, Any]] = field(default_factory=list)
    observations: list[int] = field(default_factory=list)
    no_model_steps: list[int] = field(default_factory=list)
    finished: bool = False
    plan_stats: PlanStats = field(default_factory=PlanStats)

    @property
    def success(self) -> Fraction | None:
        if not self.observations:
            return None
        return success(self.observations, rewards=make_environment(self.config.world).rewards)

    def summary(self) -> dict[str, Any]:
        value = self.success
        return {
            "summary": True,
            "success": None if value is None else rational_str(value),
            "success_undefined": value is None,
            "steps": len(self.records),
            "finished": self.finished,
            "no_model_steps": self.no_model_steps,
            "config": self.config.echo(),
        }

    def lines(self) -> list[str]:
        rows = [{"trace_version": TRACE_VERSION}, *self.records, self.summary()]
        return [json.dumps(r, sort_keys=False, separators=(", ", ": ")) for r in rows]


def write_trace(trace: EpisodeTrace, path: str | Path) -> None:
    Path(path).write_text("\n".join(trace.lines()) + "\n", encoding="utf-8")


class _DetAgent:
    """find_min_k once, then refine_models; moves up in k when the set empties."""

    def __init__(self, config: RunConfig, env: Environment) -> None:
        self.config = config
        self.env = env
        self.k: int | None = None
        self.mset: ModelSet | None = None
        self.floor = max(env.n, env.m)

    def _find(self, history: History) -> None:
        bf = self.config.budget_factor
        for k in range(self.floor, self.config.k_max + 1):
            mset = None
            use_cache = self.config.cache_dir or os.environ.get("OCCAM_CACHE_DIR")
            path = cache_path(self.config.cache_dir, history, k, bf) if use_cache else None
            if path is not None:
                mset = load_cache(history, k, bf, path)
            if mset is None:
                mset = find_models(history, k, bf)
                if path is not None and len(mset) <= MATERIALIZE_LIMIT:
                    save_cache(history, mset, path)
            if mset:
                self.k, self.mset = k, mset
                return
            self.floor = k + 1
        self.k, self.mset = None, None

    def decide(self, history: History):
        if self.mset is None:
            self._find(history)
        if self.mset is None:
            return None
        decision = plan(history, Belief.from_model_set(self.mset), self.config.planner(self.env.rewards))
        return decision, self.k, len(self.mset), decision.grade, decision.alpha, len(decision.selected)

    def observe(self, history: History, action: int, observation: int) -> None:
        if self.mset is None:
            return
        self.mset = refine_models(self.mset, history, (action, observation))
        if not self.mset:
            self.floor = (self.k or self.floor) + 1
            self.mset = None


class _StochAgent:
    def __init__(self, config: RunConfig, env: Environment) -> None:
        self.config = config
        self.env = env
        self.k = config.k or config.k_max
        self.wset = None

    def decide(self, history: History):
        if self.wset is None:
            self.wset = find_stoch_models(history, self.k, self.config.budget_factor, self.config.row_cap)
        if not self.wset:
            return None
        decision = stoch_plan(history, self.wset, self.config.planner(self.env.rewards))
        return decision, self.k, len(self.wset), decision.grade, decision.alpha, len(decision.selected)

    def observe(self, history: History, action: int, observation: int) -> None:
        if self.wset and observation != FINISH:
            self.wset = extend_stoch_models(self.wset, action, observation, self.config.row_cap)


class _OracleAgent:
    """Brute-force expectimax over the world's true model set."""

    def __init__(self, config: RunConfig, env: Environment) -> None:
        self.config = config
        self.env = env
        depth = config.truth_depth or min(config.steps + config.h, 8)
        self.k = None
        self.mset = None
        for k in range(max(env.n, env.m), config.k_max + 1):
            mset = true_model_set(env.name, k, depth, config.budget_factor)
            if mset:
                self.k, self.mset = k, mset
                break

    def decide(self, history: History):
        if not self.mset:
            return None
        result = oracle_expectimax(self.mset, history, self.config.h, rewards=self.env.rewards)
        return result, self.k, len(self.mset), result.grade, result.grade, 1

    def observe(self, history: History, action: int, observation: int) -> None:
        if self.mset and observation != FINISH:
            self.mset = refine_models(self.mset, history, (action, observation))


_AGENT_TYPES = {"det": _DetAgent, "stoch": _StochAgent, "oracle": _OracleAgent}


def run_episode(config: RunConfig) -> EpisodeTrace:
    """Play up to ``config.steps`` steps; write the trace if a path is set.

    When the agent has no model it falls back to action 1 and the step is
    listed under ``no_model_steps`` (its ``k`` and grade fields are null).
    """
    env = make_environment(config.world, config.seed)
    agent = _AGENT_TYPES[config.agent](config, env)
    history = History(env.n, env.m)
    trace = EpisodeTrace(config)
    for t in range(config.steps):
        start = time.perf_counter()
        outcome = agent.decide(history)
        if outcome is None:
            action, k, models, grade, alpha, selected = 1, None, 0, None, None, 0
            trace.no_model_steps.append(t)
            log.info("t=%d: no model, falling back to action 1", t)
        else:
            decision, k, models, grade, alpha, selected = outcome
            action = decision.action
            if isinstance(decision, Decision):
                trace.plan_stats.merge(decision.stats)
        observation = env.step(action)
        agent.observe(history, action, observation)
        elapsed = round((time.perf_counter() - start) * 1000) if config.timing else None
        trace.records.append({
            "t": t,
            "action": action,
            "observation": observation,
            "reward": env.rewards(observation),
            "k": k,
            "models": models,
            "grade": None if grade is None else grade_to_strs(grade),
            "alpha": None if alpha is None else grade_to_strs(alpha),
            "selected": selected,
            "ms": elapsed,
        })
        trace.observations.append(observation)
        history = history.extend(action, observation)
        if env.finished:
            trace.finished = True
            break
    if config.trace_path:
        write_trace(trace, config.trace_path)
    return trace
