"""Mealy reward machines: execution, equivalence and (de)serialization."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

from .mdp import History, LabelingFunction

REWARD_TOL = 1e-9


class MachineFormatError(ValueError):
    pass


def rewards_equal(x: float, y: float) -> bool:
    return abs(x - y) <= REWARD_TOL


def traces_equal(xs: Sequence[float], ys: Sequence[float]) -> bool:
    return len(xs) == len(ys) and all(rewards_equal(x, y) for x, y in zip(xs, ys))


@dataclass(frozen=True)
class MealyRewardMachine:
    """<U, u0, Z, delta_u, delta_r, c> with nodes 0..n-1.

    ``transition[u][z]`` and ``output[u][z]`` are total over nodes x alphabet.
    The null observation is never stored: stepping on it keeps the node and
    pays ``default_reward``.
    """

    alphabet: tuple
    transition: tuple
    output: tuple
    default_reward: float = 0.0
    start: int = 0
    node_names: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "transition", tuple(tuple(int(v) for v in row) for row in self.transition))
        object.__setattr__(self, "output", tuple(tuple(float(v) for v in row) for row in self.output))
        n, k = len(self.transition), len(self.alphabet)
        if n == 0:
            raise ValueError("machine needs at least one node")
        if len(self.output) != n or any(len(r) != k for r in self.transition + self.output):
            raise ValueError("transition/output tables must be total over nodes x alphabet")
        if not 0 <= self.start < n:
            raise ValueError(f"start node {self.start} out of range")
        if any(not 0 <= v < n for row in self.transition for v in row):
            raise ValueError("transition target out of range")
        if self.node_names is not None and len(self.node_names) != n:
            raise ValueError("node_names length mismatch")

    @property
    def n_nodes(self) -> int:
        return len(self.transition)

    def name_of(self, u: int):
        return self.node_names[u] if self.node_names is not None else u

    def step(self, u: int, z: Optional[int]) -> tuple:
        if not 0 <= u < self.n_nodes:
            raise IndexError(f"invalid node {u}")
        if z is None:
            return u, self.default_reward
        return self.transition[u][z], self.output[u][z]

    def run_observations(self, word: Sequence[int]) -> tuple:
        u, out = self.start, []
        k = len(self.alphabet)
        for z in word:
            if not 0 <= z < k:
                raise KeyError(f"unknown observation symbol {z!r}")
            out.append(self.output[u][z])
            u = self.transition[u][z]
        return tuple(out)

    def node_after(self, word: Sequence[int]) -> int:
        u = self.start
        for z in word:
            u = self.transition[u][z]
        return u

    def run_history(self, history: History, labels: LabelingFunction) -> tuple:
        """delta_r* over a state-action history; null steps yield c in place."""
        u, out = self.start, []
        for a, s in history.steps:
            u, r = self.step(u, labels(a, s))
            out.append(r)
        return tuple(out)

    def with_edge(self, u: int, z: int, target: Optional[int] = None, reward: Optional[float] = None):
        """Copy with one edge replaced (handy for fault injection)."""
        trans = [list(r) for r in self.transition]
        out = [list(r) for r in self.output]
        if target is not None:
            trans[u][z] = target
        if reward is not None:
            out[u][z] = reward
        return MealyRewardMachine(self.alphabet, trans, out, self.default_reward, self.start, self.node_names)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        names = [self.name_of(u) for u in range(self.n_nodes)]
        edges = [
            {"from": names[u], "input": self.alphabet[z], "to": names[self.transition[u][z]],
             "reward": self.output[u][z]}
            for u in range(self.n_nodes) for z in range(len(self.alphabet))
        ]
        return {"nodes": names, "start": names[self.start], "alphabet": list(self.alphabet),
                "default_reward": self.default_reward, "edges": edges}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_dot(self, show_self_loops: bool = True) -> str:
        lines = ["digraph MRM {", "  rankdir=LR;", '  __start [shape=point];']
        names = [self.name_of(u) for u in range(self.n_nodes)]
        for u, name in enumerate(names):
            lines.append(f'  n{u} [label="{name}", shape=circle];')
        lines.append(f"  __start -> n{self.start};")
        for u in range(self.n_nodes):
            for z, sym in enumerate(self.alphabet):
                v, r = self.transition[u][z], self.output[u][z]
                if v == u and not show_self_loops:
                    continue
                lines.append(f'  n{u} -> n{v} [label="{sym}|{_fmt(r)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _fmt(r: float) -> str:
    return str(int(r)) if float(r).is_integer() else repr(r)


def from_dict(data: dict) -> MealyRewardMachine:
    try:
        names = list(data["nodes"])
        alphabet = list(data["alphabet"])
        start = names.index(data["start"])
        default = float(data.get("default_reward", 0.0))
        idx = {n: i for i, n in enumerate(names)}
        sym = {z: i for i, z in enumerate(alphabet)}
        trans = [[None] * len(alphabet) for _ in names]
        out = [[None] * len(alphabet) for _ in names]
        for e in data["edges"]:
            u, z = idx[e["from"]], sym[e["input"]]
            if trans[u][z] is not None:
                raise MachineFormatError(f"duplicate edge {e['from']!r} --{e['input']}-->")
            trans[u][z], out[u][z] = idx[e["to"]], float(e["reward"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MachineFormatError):
            raise
        raise MachineFormatError(f"invalid machine description: {exc!r}") from exc
    missing = [(names[u], alphabet[z]) for u in range(len(names)) for z in range(len(alphabet))
               if trans[u][z] is None]
    if missing:
        raise MachineFormatError(f"machine is not total, missing edges: {missing[:5]}")
    node_names = tuple(names) if names != list(range(len(names))) else None
    return MealyRewardMachine(tuple(alphabet), trans, out, default, start, node_names)


def from_json(text: str) -> MealyRewardMachine:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MachineFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_dict(data)


def from_edges(alphabet: Sequence[str], n_nodes: int, edges, default_reward: float = 0.0,
               self_loop_reward: float = 0.0, start: int = 0) -> MealyRewardMachine:
    """Build a machine from (from, symbol, to, reward) edges.

    Pairs left unspecified become self-loops paying ``self_loop_reward``,
    the usual convention when drawings omit self-loops.
    """
    alphabet = tuple(alphabet)
    sym = {z: i for i, z in enumerate(alphabet)}
    trans = [[u] * len(alphabet) for u in range(n_nodes)]
    out = [[self_loop_reward] * len(alphabet) for _ in range(n_nodes)]
    for u, z, v, r in edges:
        trans[u][sym[z]] = v
        out[u][sym[z]] = r
    return MealyRewardMachine(alphabet, trans, out, default_reward, start)


def check_equivalence(r: MealyRewardMachine, h: MealyRewardMachine) -> Optional[tuple]:
    """Shortest distinguishing word, or None when the machines are equivalent.

    Breadth-first search over synchronous node pairs; the first edge whose
    outputs differ ends the search.
    """
    if tuple(r.alphabet) != tuple(h.alphabet):
        raise ValueError(f"alphabet mismatch: {r.alphabet} vs {h.alphabet}")
    if not rewards_equal(r.default_reward, h.default_reward):
        raise ValueError("machines disagree on the default reward")
    start = (r.start, h.start)
    parent = {start: None}
    queue = deque([start])
    k = len(r.alphabet)
    while queue:
        pair = queue.popleft()
        ur, uh = pair
        for z in range(k):
            if not rewards_equal(r.output[ur][z], h.output[uh][z]):
                return _path(parent, pair) + (z,)
            nxt = (r.transition[ur][z], h.transition[uh][z])
            if nxt not in parent:
                parent[nxt] = (pair, z)
                queue.append(nxt)
    return None


def _path(parent: dict, node) -> tuple:
    word = []
    while parent[node] is not None:
        node, z = parent[node]
        word.append(z)
    return tuple(reversed(word))
