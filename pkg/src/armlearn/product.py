"""Synchronized products of an MDP with reward machines.

``build_product_with_reset`` yields the immediate-reward MDP used for
planning: states (s, u) indexed ``s * |U| + u``, actions A plus a final
``reset`` action. The reward of (s, u, a) is the expected machine output
over successors, since the observation depends on the state reached.

``build_triple_product`` tracks a true and a hypothesised machine side by
side and diverts probability mass to an absorbing CE state whenever their
outputs would differ.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .machine import MealyRewardMachine, REWARD_TOL
from .mdp import NULL, LabelingFunction, Nrmdp, RewardMdp
from .solver import is_strongly_connected, state_graph  # noqa: F401  (re-export)

RESET = "reset"


def _check_alphabet(labels: LabelingFunction, *machines: MealyRewardMachine) -> None:
    for h in machines:
        if tuple(h.alphabet) != tuple(labels.alphabet):
            raise ValueError(f"alphabet mismatch: labels {labels.alphabet} vs machine {h.alphabet}")


def _extended(h: MealyRewardMachine):
    """Transition/output tables with an extra last column for null."""
    n = h.n_nodes
    trans = np.column_stack([np.asarray(h.transition, dtype=int).reshape(n, -1), np.arange(n)])
    out = np.column_stack([np.asarray(h.output, dtype=float).reshape(n, -1), np.full(n, h.default_reward)])
    return trans, out


def _entries(m: Nrmdp, labels: LabelingFunction):
    """COO entries (s, a, s', p, z) of the base MDP with z == -1 for null."""
    coo = m.matrix.tocoo()
    s, a = np.divmod(coo.row, m.n_actions)
    z = labels.table[a, coo.col]
    return s, a, coo.col, coo.data, z


@dataclass(frozen=True, eq=False)
class ProductMdp:
    mdp: RewardMdp
    model: Nrmdp
    labels: LabelingFunction
    machine: MealyRewardMachine
    reset_cost: float

    @property
    def n_nodes(self) -> int:
        return self.machine.n_nodes

    @property
    def reset_action(self) -> int:
        return self.model.n_actions

    def index(self, s: int, u: int) -> int:
        return s * self.n_nodes + u

    def unpack(self, i: int) -> tuple:
        return divmod(i, self.n_nodes)


def build_product_with_reset(m: Nrmdp, labels: LabelingFunction, h: MealyRewardMachine,
                             reset_cost: float, reachable_only: bool = False) -> ProductMdp:
    _check_alphabet(labels, h)
    nu, na = h.n_nodes, m.n_actions
    k = na + 1
    n = m.n_states * nu
    trans, out = _extended(h)
    s, a, s2, p, z = _entries(m, labels)
    u = np.arange(nu)
    # broadcast every base entry over machine nodes
    rows = ((s[:, None] * nu + u) * k + a[:, None]).ravel()
    cols = (s2[:, None] * nu + trans[u[None, :], z[:, None]]).ravel()
    probs = np.repeat(p, nu)
    rew = (p[:, None] * out[u[None, :], z[:, None]]).ravel()
    reset_rows = np.arange(n) * k + na
    start = m.initial_state * nu + h.start
    rows = np.concatenate([rows, reset_rows])
    cols = np.concatenate([cols, np.full(n, start)])
    probs = np.concatenate([probs, np.ones(n)])
    mat = sp.csr_matrix((probs, (rows, cols)), shape=(n * k, n))
    mat.sum_duplicates()
    mat.sort_indices()
    rewards = np.zeros(n * k)
    np.add.at(rewards, rows[: rew.size], rew)
    rewards[reset_rows] = reset_cost
    states = tuple((m.states[i // nu], i % nu) for i in range(n))
    mdp = RewardMdp(states, tuple(m.actions) + (RESET,), mat, start, rewards.reshape(n, k))
    if reachable_only:
        mdp = restrict_to_reachable(mdp)
    return ProductMdp(mdp, m, labels, h, reset_cost)


def restrict_to_reachable(mdp: RewardMdp) -> RewardMdp:
    """Drop states unreachable from the initial state (values are unaffected).

    Indices are renumbered; ``states`` keeps the original labels.
    """
    from scipy.sparse.csgraph import breadth_first_order

    order = np.sort(breadth_first_order(state_graph(mdp), mdp.initial_state, return_predecessors=False))
    remap = -np.ones(mdp.n_states, dtype=int)
    remap[order] = np.arange(order.size)
    k = mdp.n_actions
    rows = (order[:, None] * k + np.arange(k)).ravel()
    sub = mdp.matrix[rows][:, order]
    rewards = None if mdp.rewards is None else np.asarray(mdp.rewards)[order]
    states = tuple(mdp.states[i] for i in order)
    return RewardMdp(states, mdp.actions, sp.csr_matrix(sub), int(remap[mdp.initial_state]), rewards)


@dataclass(frozen=True, eq=False)
class TripleProduct:
    """States (s, uR, uH) indexed ``(s * |UR| + uR) * |UH| + uH`` plus CE as the last index."""

    mdp: Nrmdp
    truth: MealyRewardMachine
    hypothesis: MealyRewardMachine

    @property
    def ce(self) -> int:
        return self.mdp.n_states - 1

    def index(self, s: int, ur: int, uh: int) -> int:
        return (s * self.truth.n_nodes + ur) * self.hypothesis.n_nodes + uh


def build_triple_product(m: Nrmdp, labels: LabelingFunction, r: MealyRewardMachine,
                         h: MealyRewardMachine, reset_cost: float = 0.0) -> TripleProduct:
    _check_alphabet(labels, r, h)
    nr, nh, na = r.n_nodes, h.n_nodes, m.n_actions
    k = na + 1
    n = m.n_states * nr * nh + 1
    ce = n - 1
    tr, orr = _extended(r)
    th, oh = _extended(h)
    s, a, s2, p, z = _entries(m, labels)
    ur = np.repeat(np.arange(nr), nh)
    uh = np.tile(np.arange(nh), nr)
    agree = np.abs(orr[ur[None, :], z[:, None]] - oh[uh[None, :], z[:, None]]) <= REWARD_TOL
    src = (s[:, None] * nr + ur) * nh + uh
    rows = (src * k + a[:, None])
    dst = (s2[:, None] * nr + tr[ur[None, :], z[:, None]]) * nh + th[uh[None, :], z[:, None]]
    cols = np.where(agree, dst, ce)
    start = (m.initial_state * nr + r.start) * nh + h.start
    reset_rows = np.arange(n - 1) * k + na
    ce_rows = ce * k + np.arange(k)
    rows = np.concatenate([rows.ravel(), reset_rows, ce_rows])
    cols = np.concatenate([cols.ravel(), np.full(n - 1, start), np.full(k, ce)])
    probs = np.concatenate([np.repeat(p, nr * nh), np.ones(n - 1), np.ones(k)])
    mat = sp.csr_matrix((probs, (rows, cols)), shape=(n * k, n))
    mat.sum_duplicates()
    mat.sort_indices()
    states = tuple((m.states[i // (nr * nh)], (i // nh) % nr, i % nh) for i in range(n - 1)) + ("CE",)
    mdp = Nrmdp(states, tuple(m.actions) + (RESET,), mat, start)
    return TripleProduct(mdp, r, h)


def uniform_chain(mdp: Nrmdp) -> sp.csr_matrix:
    """Markov chain of the strategy playing every action with equal probability."""
    n, k = mdp.n_states, mdp.n_actions
    avg = sp.kron(sp.identity(n), np.full((1, k), 1.0 / k), format="csr")
    return sp.csr_matrix(avg @ mdp.matrix)
