"""Finite MDPs without rewards, labeling functions and interaction traces.

States and actions are dense integer indices; names are kept in side
tables for file formats and printing. Transitions are stored as one
stacked CSR matrix whose row ``s * n_actions + a`` is the distribution
T(s, a, .), so a solver can evaluate every (state, action) pair with a
single sparse product.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

NULL = -1
ROW_TOL = 1e-9

Observation = Optional[int]


def _stack(n_states: int, n_actions: int, rows, cols, probs) -> sp.csr_matrix:
    mat = sp.csr_matrix(
        (np.asarray(probs, dtype=float), (np.asarray(rows), np.asarray(cols))),
        shape=(n_states * n_actions, n_states),
    )
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


@dataclass(frozen=True, eq=False)
class Nrmdp:
    """A non-rewarding MDP <S, A, T, s0>."""

    states: tuple
    actions: tuple
    matrix: sp.csr_matrix
    initial_state: int = 0

    @classmethod
    def from_rows(cls, states: Sequence, actions: Sequence, rows, initial_state: int = 0) -> "Nrmdp":
        """Build from ``rows[s][a] = [(target, prob), ...]`` (or a dict keyed by (s, a))."""
        states, actions = tuple(states), tuple(actions)
        n_a = len(actions)
        r, c, p = [], [], []
        items = rows.items() if isinstance(rows, dict) else (
            ((s, a), row) for s, per_s in enumerate(rows) for a, row in enumerate(per_s))
        for (s, a), row in items:
            for t, prob in row:
                r.append(s * n_a + a)
                c.append(t)
                p.append(prob)
        return cls(states, actions, _stack(len(states), n_a, r, c, p), initial_state)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def row(self, s: int, a: int) -> list:
        """Sparse distribution T(s, a, .) as [(target, prob)], targets ascending."""
        k = s * self.n_actions + a
        lo, hi = self.matrix.indptr[k], self.matrix.indptr[k + 1]
        return list(zip(self.matrix.indices[lo:hi].tolist(), self.matrix.data[lo:hi].tolist()))

    def action_matrix(self, a: int) -> sp.csr_matrix:
        return self.matrix[a::self.n_actions]

    @cached_property
    def sampling_table(self) -> list:
        """Per stacked row: (targets, cumulative probabilities) as plain lists."""
        m = self.matrix
        table = []
        for k in range(m.shape[0]):
            lo, hi = m.indptr[k], m.indptr[k + 1]
            table.append((m.indices[lo:hi].tolist(), np.cumsum(m.data[lo:hi]).tolist()))
        return table

    def state_index(self, name) -> int:
        return self.states.index(name)

    def action_index(self, name) -> int:
        return self.actions.index(name)


@dataclass(frozen=True, eq=False)
class RewardMdp(Nrmdp):
    """Immediate-reward MDP: ``rewards[s, a]`` is the expected reward of playing a in s."""

    rewards: np.ndarray = field(default=None)


def validate(m: Nrmdp) -> list:
    """Return a list of human-readable invariant violations (empty if well-formed)."""
    problems = []
    n_s, n_a = m.n_states, m.n_actions
    if not 0 <= m.initial_state < n_s:
        problems.append(f"initial state {m.initial_state} out of range [0, {n_s})")
    if m.matrix.shape != (n_s * n_a, n_s):
        problems.append(f"transition matrix has shape {m.matrix.shape}, expected {(n_s * n_a, n_s)}")
        return problems
    if m.matrix.nnz and (m.matrix.data.min() < 0 or m.matrix.data.max() > 1):
        problems.append("transition probability outside [0, 1]")
    sums = np.asarray(m.matrix.sum(axis=1)).ravel()
    for k in np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL):
        s, a = divmod(int(k), n_a)
        problems.append(f"row (s={m.states[s]}, a={m.actions[a]}) sums to {sums[k]:.12g}")
    return problems


def sample_transition(m: Nrmdp, s: int, a: int, rng: np.random.Generator) -> int:
    if not (0 <= s < m.n_states and 0 <= a < m.n_actions):
        raise IndexError(f"invalid state/action ({s}, {a})")
    targets, cum = m.sampling_table[s * m.n_actions + a]
    i = bisect.bisect_right(cum, rng.random() * cum[-1])
    return targets[min(i, len(targets) - 1)]


@dataclass(frozen=True, eq=False)
class LabelingFunction:
    """lambda(a, s'): observation seen when action a lands in state s'.

    ``table[a, s]`` holds a symbol index into ``alphabet`` or NULL (-1).
    """

    table: np.ndarray
    alphabet: tuple

    def __post_init__(self):
        table = np.asarray(self.table, dtype=int)
        if table.size and (table.max() >= len(self.alphabet) or table.min() < NULL):
            raise ValueError("label table references a symbol outside the alphabet")
        object.__setattr__(self, "table", table)
        unused = set(range(len(self.alphabet))) - set(np.unique(table).tolist())
        if unused:
            log.warning("observations never emitted: %s", sorted(self.alphabet[z] for z in unused))

    def __call__(self, a: int, s: int) -> Observation:
        z = self._rows[a][s]
        return None if z == NULL else z

    @cached_property
    def _rows(self) -> list:
        return self.table.tolist()

    def symbol(self, name: str) -> int:
        try:
            return self.alphabet.index(name)
        except ValueError:
            raise KeyError(f"unknown observation {name!r}") from None


@dataclass
class InteractionTrace:
    """s0 followed by steps (action, reward, next state)."""

    initial_state: int
    steps: list = field(default_factory=list)

    def append(self, action: int, reward: float, state: int) -> None:
        self.steps.append((action, reward, state))

    def history(self) -> "History":
        return History(self.initial_state, [(a, s) for a, _, s in self.steps])

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class History:
    """s0 a0 s1 a1 ... sk, stored as s0 plus (action, next state) pairs."""

    initial_state: int
    steps: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)


def extract_observation_trace(trace: InteractionTrace, labels: LabelingFunction) -> tuple:
    return tuple(z for z in (labels(a, s) for a, _, s in trace.steps) if z is not None)


def extract_reward_trace(trace: InteractionTrace, labels: LabelingFunction) -> tuple:
    return tuple(r for a, r, s in trace.steps if labels(a, s) is not None)


def observation_names(word: Iterable[int], labels: LabelingFunction) -> list:
    return [labels.alphabet[z] for z in word]
