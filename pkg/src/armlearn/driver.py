"""Active learning loop: learn a reward machine, plan on it, and look for counterexamples.

The agent alternates between filling the observation table with planned
membership queries and acting on the current hypothesis H. When the
optimal mean payoff of H is below the expert value the agent explores
uniformly at random, otherwise it follows the optimal strategy of H. In
both cases every reward is checked against the prediction of H and the
first disagreement becomes a counterexample.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .config import DriverConfig
from .lstar import Complete, ObservationTable
from .machine import MealyRewardMachine, rewards_equal
from .planner import MAX, BudgetExhausted, build_query_mdp, execute_membership_query, plan
from .product import ProductMdp, build_product_with_reset
from .solver import Strategy, optimal_mean_payoff

log = logging.getLogger(__name__)

LEARN, EXPLORE, EXPLOIT = "learn", "explore", "exploit"
CSV_FIELDS = ("episode", "phase", "hypothesis", "steps", "return", "mq_count", "ce_count")


@dataclass(frozen=True)
class Counterexample:
    word: tuple
    rewards: tuple
    steps: int      # environment actions spent finding it


@dataclass
class ExploitResult:
    counterexample: Optional[Counterexample]
    steps: int
    rewards: list   # rewards of strategy actions (opening resets excluded)


class NullRewardMismatch(RuntimeError):
    """A step without observation paid something other than the default reward."""


def empirical_mean_payoff(rewards: Sequence[float]) -> float:
    if len(rewards) == 0:
        raise ValueError("mean payoff of an empty trace")
    return sum(rewards) / len(rewards)


def _check_null(r: float, c: float) -> None:
    if not rewards_equal(r, c):
        raise NullRewardMismatch(f"null step paid {r}, expected the default reward {c}")


def explore_uniform_until_ce(env, h: MealyRewardMachine, budget: Optional[int] = None,
                             rng: Optional[random.Random] = None) -> Counterexample:
    """Play uniformly over the actions and reset until a reward contradicts ``h``.

    Starts with a reset. Raises BudgetExhausted after ``budget`` actions
    (the opening reset included); ``None`` means no limit.
    """
    rng = rng or random.Random()
    lab = env.labels.table.tolist()
    trans, out, c = h.transition, h.output, h.default_reward
    n_a = env.n_actions
    env.reset()
    taken = 1
    u, zs, rs = h.start, [], []
    while budget is None or taken < budget:
        a = rng.randrange(n_a + 1)
        taken += 1
        if a == n_a:
            env.reset()
            u, zs, rs = h.start, [], []
            continue
        s, r = env.step(a)
        z = lab[a][s]
        if z < 0:
            _check_null(r, c)
            continue
        zs.append(z)
        rs.append(r)
        if not rewards_equal(r, out[u][z]):
            return Counterexample(tuple(zs), tuple(rs), taken)
        u = trans[u][z]
    raise BudgetExhausted(taken, "exploration")


def exploit_until_ce(env, product: ProductMdp, strategy: Strategy, episode_length: int,
                     budget: Optional[int] = None) -> ExploitResult:
    """Follow ``strategy`` on the product of the hypothesis, one reset per episode.

    Each episode is a reset followed by ``episode_length`` strategy
    actions. Stops at the first reward the hypothesis mispredicts, or when
    ``budget`` actions (opening resets included) have been taken.
    """
    h = product.machine
    lab = env.labels.table.tolist()
    trans, out, c = h.transition, h.output, h.default_reward
    choice = strategy.choice.tolist()
    n_u = h.n_nodes
    reset_a = product.reset_action
    taken = 0
    rewards = []
    while budget is None or taken < budget:
        s, _ = env.reset()
        taken += 1
        u, zs, rs = h.start, [], []
        for _ in range(episode_length):
            if budget is not None and taken >= budget:
                break
            a = choice[s * n_u + u]
            taken += 1
            if a == reset_a:
                s, r = env.reset()
                rewards.append(r)
                u, zs, rs = h.start, [], []
                continue
            s, r = env.step(a)
            rewards.append(r)
            z = lab[a][s]
            if z < 0:
                _check_null(r, c)
                continue
            zs.append(z)
            rs.append(r)
            if not rewards_equal(r, out[u][z]):
                return ExploitResult(Counterexample(tuple(zs), tuple(rs), taken), taken, rewards)
            u = trans[u][z]
    return ExploitResult(None, taken, rewards)


# -- episode bookkeeping -------------------------------------------------

@dataclass
class EpisodeRecord:
    episode: int
    phase: str
    hypothesis: int
    steps: int
    ret: float
    mq_count: int
    ce_count: int

    def as_row(self) -> list:
        return [self.episode, self.phase, self.hypothesis, self.steps, repr(round(self.ret, 9)),
                self.mq_count, self.ce_count]


class _RunOver(Exception):
    pass


class _Recorder:
    """Wraps the environment, counts every action and cuts the run into episodes.

    An episode holds ``episode_length`` actions; a reset opening an episode
    is charged to it but not counted towards its length. Changing phase
    closes the current episode early.
    """

    def __init__(self, env, episode_length: int, budget: int):
        self.env = env
        self.labels = env.labels
        self.n_actions = env.n_actions
        self.episode_length = episode_length
        self.budget = budget
        self.total = 0
        self.records: list = []
        self.phase = LEARN
        self.hypothesis = 0
        self.mq_count = 0
        self.ce_count = 0
        self._steps = 0      # actions in the open episode
        self._length = 0     # of which count towards episode_length
        self._ret = 0.0

    @property
    def state(self):
        return self.env.state

    def _charge(self, r: float, opening: bool) -> None:
        self.total += 1
        self._steps += 1
        self._ret += r
        if not opening:
            self._length += 1
            if self._length >= self.episode_length:
                self.close()

    def _gate(self) -> None:
        if self.total >= self.budget:
            raise _RunOver()

    def step(self, a: int):
        self._gate()
        s, r = self.env.step(a)
        self._charge(r, False)
        return s, r

    def reset(self):
        self._gate()
        opening = self._steps == 0
        s, r = self.env.reset()
        self._charge(r, opening)
        return s, r

    def close(self) -> None:
        if self._steps == 0:
            return
        self.records.append(EpisodeRecord(len(self.records), self.phase, self.hypothesis, self._steps,
                                          self._ret, self.mq_count, self.ce_count))
        self._steps = self._length = 0
        self._ret = 0.0

    def set_phase(self, phase: str) -> None:
        if phase != self.phase:
            self.close()
            self.phase = phase


@dataclass
class RunLog:
    config: DriverConfig
    records: list = field(default_factory=list)
    machine: Optional[MealyRewardMachine] = None
    gains: list = field(default_factory=list)      # (hypothesis id, nodes, V(pi*_H))
    mq_count: int = 0
    ce_count: int = 0
    total_steps: int = 0

    @property
    def final_gain(self) -> Optional[float]:
        return self.gains[-1][2] if self.gains else None

    @property
    def hypotheses(self) -> int:
        return len(self.gains)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for rec in self.records:
            w.writerow(rec.as_row())
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "final_gain": self.final_gain,
            "v_expert": self.config.v_expert,
            "mq_count": self.mq_count,
            "ce_count": self.ce_count,
            "hypotheses": self.hypotheses,
            "nodes": self.machine.n_nodes if self.machine else None,
            "total_steps": self.total_steps,
            "episodes": len(self.records),
            "gains": [{"hypothesis": i, "nodes": n, "gain": g} for i, n, g in self.gains],
            "config": self.config.to_dict(),
        }

    def write(self, directory) -> list:
        """Write run.csv, learned.json, learned.dot and summary.json."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {"run.csv": self.csv_text(), "summary.json": json.dumps(self.summary(), indent=2) + "\n"}
        if self.machine is not None:
            files["learned.json"] = self.machine.to_json() + "\n"
            files["learned.dot"] = self.machine.to_dot()
        paths = []
        for name, text in files.items():
            path = directory / name
            path.write_text(text)
            paths.append(path)
        return paths


def _learning_phase(rec: _Recorder, table: ObservationTable, model, config: DriverConfig) -> MealyRewardMachine:
    """Ask membership queries until the table is complete and consistent with everything cached."""
    labels = rec.labels
    while True:
        w = table.next_query()
        if w is not None:
            q = build_query_mdp(model, labels, w)
            strat = plan(q, config.mode)
            rec.reset()
            result = execute_membership_query(rec, strat, q, config.query_step_budget, observe=table.resolve)
            table.resolve(w, result.rewards)
            rec.mq_count += 1
            continue
        cert = table.completeness()
        if not isinstance(cert, Complete):
            table.fix(cert)
            continue
        h = table.build_hypothesis()
        cached = table.cached_counterexample(h)
        if cached is None:
            return h
        log.debug("hypothesis %d refuted by a cached answer on %s", table.hypothesis_id, cached)
        table.add_counterexample(cached, table.known[cached])
        rec.ce_count += 1


def run_active_learning(env, config: DriverConfig) -> RunLog:
    """Learn the hidden reward machine of ``env`` while collecting reward.

    Runs until ``config.total_step_budget`` actions have been taken. Raises
    BudgetExhausted if that happens before the first hypothesis exists.
    """
    rec = _Recorder(env, config.episode_length, config.total_step_budget)
    table = ObservationTable(env.labels.alphabet, env.default_reward)
    rng = random.Random(f"explore:{config.seed}")
    runlog = RunLog(config)
    h = None
    try:
        while True:
            rec.set_phase(LEARN)
            h = _learning_phase(rec, table, env.model, config)
            rec.hypothesis = table.hypothesis_id
            product = build_product_with_reset(env.model, env.labels, h, env.reset_cost)
            strat = optimal_mean_payoff(product.mdp)
            gain = float(strat.value[product.mdp.initial_state])
            runlog.gains.append((table.hypothesis_id, h.n_nodes, gain))
            log.info("hypothesis %d: %d nodes, gain %.4f", table.hypothesis_id, h.n_nodes, gain)
            if gain < config.v_expert:
                rec.set_phase(EXPLORE)
                cex = explore_uniform_until_ce(rec, h, None, rng)
            else:
                rec.set_phase(EXPLOIT)
                cex = exploit_until_ce(rec, product, strat, config.episode_length).counterexample
            table.add_counterexample(cex.word, cex.rewards)
            rec.ce_count += 1
    except _RunOver:
        if h is None:
            raise BudgetExhausted(rec.total, "run (no hypothesis learned)") from None
    rec.close()
    runlog.records = rec.records
    runlog.machine = h
    runlog.mq_count = rec.mq_count
    runlog.ce_count = rec.ce_count
    runlog.total_steps = rec.total
    return runlog
