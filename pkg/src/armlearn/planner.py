"""Planning and running membership-query experiments.

A query word w of length k is tracked by the MDP M' over pairs (s, i),
i being how much of w has been seen since the last reset. A null
observation keeps i, the expected symbol advances it, anything else sends
the play straight back to (s0, 0). Pair (s, i) has index ``s * (k+1) + i``
and the reset action is the last action.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .mdp import LabelingFunction, Nrmdp
from .product import RESET
from .solver import SolveParams, Strategy, max_reachability, min_expected_steps

log = logging.getLogger(__name__)

MAX = "max"
MIN = "min"
DEFAULT_STEP_BUDGET = 10**6


class UnrealizableQuery(RuntimeError):
    pass


class BudgetExhausted(RuntimeError):
    def __init__(self, steps: int, what: str = "query"):
        super().__init__(f"{what} not completed within {steps} steps")
        self.steps = steps


@dataclass(frozen=True, eq=False)
class QueryMdp:
    mdp: Nrmdp
    word: tuple
    model: Nrmdp
    labels: LabelingFunction

    @property
    def k(self) -> int:
        return len(self.word)

    @property
    def reset_action(self) -> int:
        return self.model.n_actions

    def index(self, s: int, i: int) -> int:
        return s * (self.k + 1) + i

    @property
    def start(self) -> int:
        return self.index(self.model.initial_state, 0)

    @property
    def goal(self) -> np.ndarray:
        mask = np.zeros(self.mdp.n_states, dtype=bool)
        mask[self.k::self.k + 1] = True
        return mask

    @cached_property
    def attempt(self) -> Nrmdp:
        """M' with resets and deviations sent to an absorbing failure state (last index)."""
        return _query_matrix(self.model, self.labels, self.word, failure=True)


def _query_matrix(m: Nrmdp, labels: LabelingFunction, word: tuple, failure: bool = False) -> Nrmdp:
    k, na = len(word), m.n_actions
    w, ka = k + 1, na + 1
    n = m.n_states * w
    start = m.initial_state * w
    restart_to = n if failure else start
    coo = m.matrix.tocoo()
    s, a = np.divmod(coo.row, na)
    s2, p = coo.col, coo.data
    z = labels.table[a, s2]
    i = np.arange(k)
    advance = z[:, None] == np.asarray(word)[None, :]
    stay = (z == -1)[:, None] & ~advance
    cols = np.where(advance, s2[:, None] * w + i + 1,
                    np.where(stay, s2[:, None] * w + i, restart_to))
    rows = (s[:, None] * w + i) * ka + a[:, None]
    states = np.arange(m.n_states) * w
    goal = states + k
    non_goal = (states[:, None] + i).ravel()
    sinks = np.append(goal, n) if failure else goal
    all_rows = [rows.ravel(), non_goal * ka + na, (sinks[:, None] * ka + np.arange(ka)).ravel()]
    all_cols = [cols.ravel(), np.full(non_goal.size, restart_to), np.repeat(sinks, ka)]
    all_probs = [np.broadcast_to(p[:, None], rows.shape).ravel(), np.ones(non_goal.size),
                 np.ones(sinks.size * ka)]
    size = n + 1 if failure else n
    mat = sp.csr_matrix((np.concatenate(all_probs), (np.concatenate(all_rows), np.concatenate(all_cols))),
                        shape=(size * ka, size))
    mat.sum_duplicates()
    mat.sort_indices()
    names = tuple((m.states[j // w], j % w) for j in range(n)) + (("FAIL",) if failure else ())
    return Nrmdp(names, tuple(m.actions) + (RESET,), mat, start)


def build_query_mdp(m: Nrmdp, labels: LabelingFunction, word: Sequence[int]) -> QueryMdp:
    word = tuple(int(z) for z in word)
    if not word:
        raise ValueError("membership query must be nonempty")
    if any(not 0 <= z < len(labels.alphabet) for z in word):
        raise KeyError(f"query {word} uses an unknown observation")
    return QueryMdp(_query_matrix(m, labels, word), word, m, labels)


def plan(q: QueryMdp, mode: str = MIN, params: Optional[SolveParams] = None) -> Strategy:
    """Strategy over (s, i) pairs.

    MAX: per-attempt probability of completing the word before a restart;
    states with no chance left choose reset. MIN: expected number of steps
    to complete the word, restarts included.
    """
    if mode == MAX:
        strat = max_reachability(q.attempt, np.append(q.goal, False), params or SolveParams())
        choice, value = strat.choice[:-1].copy(), strat.value[:-1].copy()
        hopeless = (value <= 0) & ~q.goal
        choice[hopeless] = q.reset_action
        result = Strategy(choice, value, strat.kind)
        if value[q.start] <= 0:
            raise UnrealizableQuery(f"query {q.word} cannot be observed from the initial state")
    elif mode == MIN:
        result = min_expected_steps(q.mdp, q.goal, params or SolveParams(method="policy"))
        if math.isinf(result.value[q.start]):
            raise UnrealizableQuery(f"query {q.word} cannot be observed from the initial state")
    else:
        raise ValueError(f"unknown planning mode {mode!r}")
    return result


@dataclass
class QueryResult:
    rewards: tuple
    steps: int          # transitions of M' (automatic resets not counted)
    env_actions: int    # every call into the environment, automatic resets included
    attempts: int
    traces: list = field(default_factory=list)


def execute_membership_query(env, strategy: Strategy, q: QueryMdp,
                             step_budget: int = DEFAULT_STEP_BUDGET,
                             observe: Optional[Callable[[tuple, tuple], None]] = None) -> QueryResult:
    """Play ``strategy`` in ``env`` until the query word is observed.

    ``env`` must have just been reset and expose ``state``, ``step(a)`` and
    ``reset()``. Each attempt's observation/reward trace is passed to
    ``observe`` (the final, successful one included).
    """
    labels, word, k = q.labels, q.word, q.k
    w = k + 1
    reset_a = q.reset_action
    choice = strategy.choice.tolist()
    s, i = env.state, 0
    zs, rs = [], []
    steps = actions = 0
    attempts = 1
    traces = []

    def close():
        if zs:
            trace = (tuple(zs), tuple(rs))
            traces.append(trace)
            if observe is not None:
                observe(*trace)

    while True:
        if i == k:
            close()
            return QueryResult(tuple(rs), steps, actions, attempts, traces)
        if steps >= step_budget:
            raise BudgetExhausted(steps)
        a = choice[s * w + i]
        steps += 1
        actions += 1
        if a == reset_a:
            close()
            s, _ = env.reset()
            i, zs, rs = 0, [], []
            attempts += 1
            continue
        s, r = env.step(a)
        z = labels(a, s)
        if z is None:
            continue
        zs.append(z)
        rs.append(r)
        if z == word[i]:
            i += 1
            continue
        close()
        s, _ = env.reset()
        actions += 1
        i, zs, rs = 0, [], []
        attempts += 1
