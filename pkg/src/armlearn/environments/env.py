"""Simulated environment hiding its reward machine from the agent."""
from __future__ import annotations

import bisect
import random

from ..machine import MealyRewardMachine
from ..mdp import LabelingFunction, Nrmdp


class HiddenEnvironment:
    """Agent-facing world: the agent sees states and rewards, never machine nodes.

    ``step`` samples s' ~ T(s, a, .), feeds lambda(a, s') to the hidden
    machine and returns (s', reward). ``reset`` returns to s0 and the
    machine's start node and pays ``reset_cost``.
    """

    def __init__(self, model: Nrmdp, labels: LabelingFunction, truth: MealyRewardMachine,
                 reset_cost: float = 0.0, seed=None):
        if tuple(truth.alphabet) != tuple(labels.alphabet):
            raise ValueError("truth machine and labeling use different alphabets")
        self.model = model
        self.labels = labels
        self.reset_cost = reset_cost
        self.default_reward = truth.default_reward
        self._truth = truth
        self._rng = random.Random(seed)
        self._table = model.sampling_table
        self._lab = labels.table.tolist()
        self._trans = [list(r) for r in truth.transition]
        self._out = [list(r) for r in truth.output]
        self._na = model.n_actions
        self.state = model.initial_state
        self._node = truth.start
        self.steps = 0

    @property
    def n_actions(self) -> int:
        return self._na

    def reset(self) -> tuple:
        self.state = self.model.initial_state
        self._node = self._truth.start
        self.steps += 1
        return self.state, self.reset_cost

    def step(self, a: int) -> tuple:
        if not 0 <= a < self._na:
            raise IndexError(f"invalid action {a}")
        targets, cum = self._table[self.state * self._na + a]
        i = bisect.bisect_right(cum, self._rng.random() * cum[-1])
        s = targets[i if i < len(targets) else -1]
        z = self._lab[a][s]
        if z < 0:
            r = self.default_reward
        else:
            u = self._node
            r = self._out[u][z]
            self._node = self._trans[u][z]
        self.state = s
        self.steps += 1
        return s, r


def reveal(env: HiddenEnvironment) -> MealyRewardMachine:
    """The hidden machine; for test harnesses only."""
    return env._truth
