"""Explicit-state probabilistic model checking for small MDPs.

All routines take an MDP whose transitions live in a stacked CSR matrix
(row ``s * n_actions + a``) and return a memoryless deterministic
:class:`Strategy`. Ties between optimal actions go to the lowest action
index.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

log = logging.getLogger(__name__)

MAX_REACH = "max_reach"
MIN_STEPS = "min_steps"
MEAN_PAYOFF = "mean_payoff"


class NotStronglyConnected(ValueError):
    pass


class SingularChainError(ArithmeticError):
    def __init__(self, message, bscc=None):
        super().__init__(message)
        self.bscc = bscc


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveParams:
    tolerance: float = 1e-9
    max_iterations: int = 10**6
    damping: float = 0.5
    # "value" (value iteration) or "policy" (policy iteration); only
    # min_expected_steps offers the latter
    method: str = "value"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        if self.method not in ("value", "policy"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class Strategy:
    choice: np.ndarray
    value: np.ndarray
    kind: str

    def __getitem__(self, s: int) -> int:
        return int(self.choice[s])


# -- graph helpers ----------------------------------------------------

def _graph(chain: sp.spmatrix) -> sp.csr_matrix:
    g = sp.csr_matrix(chain, copy=True)
    g.data = (g.data > 0).astype(float)
    g.eliminate_zeros()
    return g


def sccs(graph: sp.spmatrix) -> np.ndarray:
    _, labels = connected_components(_graph(graph), directed=True, connection="strong")
    return labels


def bsccs(chain: sp.spmatrix) -> list:
    """Bottom strongly connected components of a Markov chain, as sorted state lists."""
    g = _graph(chain).tocoo()
    labels = sccs(g)
    leaving = np.zeros(labels.max() + 1 if labels.size else 0, dtype=bool)
    cross = labels[g.row] != labels[g.col]
    leaving[labels[g.row[cross]]] = True
    comps = {}
    for s, c in enumerate(labels.tolist()):
        if not leaving[c]:
            comps.setdefault(c, []).append(s)
    return sorted(comps.values(), key=lambda c: c[0])


def state_graph(mdp) -> sp.csr_matrix:
    """Directed graph s -> s' for every action with positive probability."""
    n, k = mdp.n_states, mdp.n_actions
    m = mdp.matrix.tocoo()
    g = sp.csr_matrix((np.ones(m.nnz), (m.row // k, m.col)), shape=(n, n))
    return _graph(g)


def is_strongly_connected(mdp_or_graph) -> bool:
    g = state_graph(mdp_or_graph) if hasattr(mdp_or_graph, "n_actions") else mdp_or_graph
    if g.shape[0] == 0:
        return True
    n_comp, _ = connected_components(_graph(g), directed=True, connection="strong")
    return n_comp == 1


def _as_mask(goal: Iterable[int], n: int) -> np.ndarray:
    if isinstance(goal, np.ndarray) and goal.dtype == bool:
        mask = goal.copy()
    else:
        mask = np.zeros(n, dtype=bool)
        mask[list(goal)] = True
    if not mask.any():
        raise ValueError("goal set is empty")
    return mask


def _qvals(mdp, v: np.ndarray) -> np.ndarray:
    return (mdp.matrix @ v).reshape(mdp.n_states, mdp.n_actions)


def can_reach(mdp, goal_mask: np.ndarray) -> np.ndarray:
    """States from which the goal is reachable with positive probability."""
    reach = goal_mask.copy()
    while True:
        hit = (_qvals(mdp, reach.astype(float)) > 0).any(axis=1)
        new = reach | hit
        if (new == reach).all():
            return reach
        reach = new


def almost_sure(mdp, goal_mask: np.ndarray) -> np.ndarray:
    """States from which some strategy reaches the goal with probability 1."""
    n, k = mdp.n_states, mdp.n_actions
    u = np.ones(n, dtype=bool)
    while True:
        stays = (_qvals(mdp, (~u).astype(float)) <= 0)
        r = goal_mask.copy()
        while True:
            hits = _qvals(mdp, r.astype(float)) > 0
            new = r | (stays & hits).any(axis=1)
            if (new == r).all():
                break
            r = new
        if (r == u).all():
            return u
        u = r


def _pick(q: np.ndarray, best: np.ndarray, allowed: Optional[np.ndarray] = None, maximize=True) -> np.ndarray:
    """Lowest action index whose value is within tolerance of the best."""
    tie = 1e-9 * (1.0 + np.abs(best))
    ok = (q >= (best - tie)[:, None]) if maximize else (q <= (best + tie)[:, None])
    if allowed is not None:
        ok &= allowed
    return np.argmax(ok, axis=1)


# -- reachability -----------------------------------------------------

def max_reachability(mdp, goal, params: SolveParams = SolveParams()) -> Strategy:
    """Maximal probability of eventually reaching ``goal`` from each state.

    Value iteration from below after qualitative precomputation of the
    probability-0 and probability-1 states. The extracted strategy only
    uses optimal actions that make progress towards the goal, so it never
    idles in an end component.
    """
    n = mdp.n_states
    goal_mask = _as_mask(goal, n)
    zero = ~can_reach(mdp, goal_mask)
    one = almost_sure(mdp, goal_mask)
    v = np.where(one, 1.0, 0.0)
    free = ~(zero | one)
    for it in range(params.max_iterations):
        q = _qvals(mdp, v)
        w = np.where(free, q.max(axis=1), v)
        delta = np.abs(w - v).max() if n else 0.0
        v = w
        if delta < params.tolerance:
            break
    else:
        raise NoConvergence(f"max_reachability: no convergence in {params.max_iterations} iterations")
    q = _qvals(mdp, v)
    choice = _progress_choice(mdp, q, v, goal_mask, zero)
    return Strategy(choice, v, MAX_REACH)


def _progress_choice(mdp, q, v, goal_mask, zero) -> np.ndarray:
    n, k = mdp.n_states, mdp.n_actions
    tie = 1e-9 * (1.0 + np.abs(v))
    optimal = q >= (v - tie)[:, None]
    choice = np.zeros(n, dtype=int)
    done = goal_mask | zero
    layered = goal_mask.copy()
    while True:
        hits = (_qvals(mdp, layered.astype(float)) > 0) & optimal
        new = hits.any(axis=1) & ~layered & ~done
        if not new.any():
            break
        choice[new] = np.argmax(hits[new], axis=1)
        layered |= new
    # anything left (value 0, or numerically stranded) takes the greedy action
    rest = ~layered & ~goal_mask
    choice[rest] = _pick(q[rest], q[rest].max(axis=1))
    return choice


# -- expected steps ---------------------------------------------------

def min_expected_steps(mdp, goal, params: SolveParams = SolveParams()) -> Strategy:
    """Minimal expected number of transitions to reach ``goal`` (each costs 1).

    States that cannot reach the goal almost surely get ``math.inf``. Only
    actions keeping the play inside the almost-sure region are considered.
    """
    n, k = mdp.n_states, mdp.n_actions
    goal_mask = _as_mask(goal, n)
    finite = almost_sure(mdp, goal_mask)
    allowed = _qvals(mdp, (~finite).astype(float)) <= 0
    work = finite & ~goal_mask
    if params.method == "policy":
        v = _ssp_policy_iteration(mdp, goal_mask, finite, allowed, params)
    else:
        v = _ssp_value_iteration(mdp, work, finite, allowed, params)
    value = np.full(n, math.inf)
    value[finite] = v[finite]
    q = _restricted_q(mdp, v, finite, allowed)
    choice = np.zeros(n, dtype=int)
    if work.any():
        choice[work] = _pick(q[work], q[work].min(axis=1), maximize=False)
    return Strategy(choice, value, MIN_STEPS)


def _restricted_q(mdp, v, finite, allowed) -> np.ndarray:
    vv = np.where(finite, v, 0.0)
    q = 1.0 + _qvals(mdp, vv)
    return np.where(allowed, q, math.inf)


def _ssp_value_iteration(mdp, work, finite, allowed, params) -> np.ndarray:
    v = np.zeros(mdp.n_states)
    for _ in range(params.max_iterations):
        q = _restricted_q(mdp, v, finite, allowed)
        w = np.where(work, q.min(axis=1), 0.0)
        delta = np.abs(w - v)[work].max() if work.any() else 0.0
        v = w
        if delta < params.tolerance:
            return v
    raise NoConvergence(f"min_expected_steps: no convergence in {params.max_iterations} iterations")


def _ssp_policy_iteration(mdp, goal_mask, finite, allowed, params) -> np.ndarray:
    n, k = mdp.n_states, mdp.n_actions
    work = finite & ~goal_mask
    idx = np.flatnonzero(work)
    choice = _proper_choice(mdp, goal_mask, finite, allowed)
    v = np.zeros(n)
    for _ in range(min(params.max_iterations, 10_000)):
        if idx.size:
            p = mdp.matrix[idx * k + choice[idx]][:, idx]
            a = sp.identity(idx.size, format="csc") - p.tocsc()
            v = np.zeros(n)
            v[idx] = spla.spsolve(a, np.ones(idx.size))
        q = _restricted_q(mdp, v, finite, allowed)
        if not idx.size:
            return v
        cur = q[idx, choice[idx]]
        best = q[idx].min(axis=1)
        improve = best < cur - 1e-12 * (1.0 + np.abs(cur))
        if not improve.any():
            return v
        upd = idx[improve]
        choice[upd] = _pick(q[upd], q[upd].min(axis=1), maximize=False)
    raise NoConvergence("min_expected_steps: policy iteration did not stabilise")


def _proper_choice(mdp, goal_mask, finite, allowed) -> np.ndarray:
    """A strategy reaching the goal almost surely from every finite state."""
    n = mdp.n_states
    choice = np.zeros(n, dtype=int)
    layered = goal_mask.copy()
    while True:
        hits = (_qvals(mdp, layered.astype(float)) > 0) & allowed
        new = hits.any(axis=1) & ~layered & finite
        if not new.any():
            return choice
        choice[new] = np.argmax(hits[new], axis=1)
        layered |= new


# -- mean payoff ------------------------------------------------------

def optimal_mean_payoff(mdp, params: SolveParams = SolveParams()) -> Strategy:
    """Optimal long-run average reward on a strongly connected MDP.

    Relative value iteration on the aperiodic transform
    P' = damping * P + (1 - damping) * I, which has the same gain for every
    strategy. Stops when the span of successive differences drops below
    the tolerance; the gain is the midpoint of the final bounds.

    A dense product also contains pairs that cannot be reached from its
    initial state. Those are accepted as long as they can reach it: the
    solve runs on the reachable part (strongly connected) and the other
    states are steered into it.
    """
    n, k = mdp.n_states, mdp.n_actions
    core = _recurrent_core(mdp)
    r = np.asarray(mdp.rewards, dtype=float).reshape(n, k)
    tau = params.damping
    sub = _restrict(mdp, core) if not core.all() else mdp
    rs = r[core]
    v = np.zeros(sub.n_states)
    for it in range(params.max_iterations):
        q = rs + tau * _qvals(sub, v) + (1.0 - tau) * v[:, None]
        w = q.max(axis=1)
        diff = w - v
        lo, hi = diff.min(), diff.max()
        if hi - lo < params.tolerance:
            gain = 0.5 * (lo + hi)
            log.debug("mean payoff converged after %d iterations, gain %.6g", it + 1, gain)
            choice = np.zeros(n, dtype=int)
            choice[core] = _pick(q, w)
            if not core.all():
                choice[~core] = _proper_choice(mdp, core, np.ones(n, dtype=bool),
                                               np.ones((n, k), dtype=bool))[~core]
            return Strategy(choice, np.full(n, gain), MEAN_PAYOFF)
        v = w - w[0]
    raise NoConvergence(f"mean payoff: no convergence in {params.max_iterations} iterations")


def _recurrent_core(mdp) -> np.ndarray:
    """States reachable from the initial state, checked to be reachable back from everywhere."""
    from scipy.sparse.csgraph import breadth_first_order

    g = state_graph(mdp)
    fwd = np.zeros(mdp.n_states, dtype=bool)
    fwd[breadth_first_order(g, mdp.initial_state, return_predecessors=False)] = True
    back = np.zeros(mdp.n_states, dtype=bool)
    back[breadth_first_order(g.T.tocsr(), mdp.initial_state, return_predecessors=False)] = True
    if not back.all():
        raise NotStronglyConnected(
            f"{int((~back).sum())} states cannot reach the initial state; mean-payoff needs a "
            "strongly connected MDP")
    return fwd


def _restrict(mdp, keep: np.ndarray):
    """Sub-MDP on a closed set of states (all successors of kept states are kept)."""
    from .mdp import Nrmdp

    idx = np.flatnonzero(keep)
    k = mdp.n_actions
    rows = (idx[:, None] * k + np.arange(k)).ravel()
    mat = sp.csr_matrix(mdp.matrix[rows][:, idx])
    return Nrmdp(tuple(range(idx.size)), mdp.actions, mat, 0)


def induced_chain(mdp, choice) -> tuple:
    """(P, r) of the Markov chain obtained by fixing ``choice``."""
    n, k = mdp.n_states, mdp.n_actions
    choice = np.asarray(choice, dtype=int)
    rows = np.arange(n) * k + choice
    p = mdp.matrix[rows]
    r = None
    if getattr(mdp, "rewards", None) is not None:
        r = np.asarray(mdp.rewards, dtype=float).reshape(n, k)[np.arange(n), choice]
    return p, r


def chain_gain(p: sp.spmatrix, r: np.ndarray) -> np.ndarray:
    """Per-state long-run average reward of a finite Markov chain."""
    p = sp.csr_matrix(p)
    n = p.shape[0]
    gain = np.zeros(n)
    recurrent = np.zeros(n, dtype=bool)
    for b in bsccs(p):
        b = np.asarray(b)
        pb = p[b][:, b]
        m = (pb.T - sp.identity(b.size)).tolil()
        m[b.size - 1, :] = np.ones(b.size)
        rhs = np.zeros(b.size)
        rhs[-1] = 1.0
        with np.errstate(all="ignore"):
            try:
                pi = spla.spsolve(m.tocsc(), rhs) if b.size > 1 else np.ones(1)
            except RuntimeError as exc:
                raise SingularChainError(str(exc), b.tolist()) from exc
        if not np.all(np.isfinite(pi)):
            raise SingularChainError("stationary distribution is not finite", b.tolist())
        gain[b] = float(pi @ r[b])
        recurrent[b] = True
    t = np.flatnonzero(~recurrent)
    if t.size:
        rec = np.flatnonzero(recurrent)
        a = (sp.identity(t.size) - p[t][:, t]).tocsc()
        rhs = p[t][:, rec] @ gain[rec]
        sol = spla.spsolve(a, rhs) if t.size > 1 else np.atleast_1d(rhs / a.toarray()[0, 0])
        if not np.all(np.isfinite(sol)):
            raise SingularChainError("transient system is singular")
        gain[t] = sol
    return gain


def evaluate_strategy(mdp, strategy) -> np.ndarray:
    """Per-state gain of a memoryless deterministic strategy."""
    choice = strategy.choice if isinstance(strategy, Strategy) else strategy
    p, r = induced_chain(mdp, choice)
    return chain_gain(p, r)
