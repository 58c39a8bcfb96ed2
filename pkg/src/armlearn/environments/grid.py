"""Text format for grid worlds and its compilation to (Nrmdp, labeling).

A grid file has a ``key = value`` header, then sections::

    slip = 0.05
    default_reward = -0.1
    reset_cost = -10
    start = 1,1 4,1          # x,y cells; several cells -> uniform random start
    actions = buy sell collect
    alphabet = m e g t j     # optional, fixes the order of observations

    [grid]
    #######
    #.m..t#
    #######

    [bindings]
    m buy m                  # item  action  observation   ('*' = any action)

    [effects]
    ask Aa -> Aa             # 'ask' on an A/a cell moves uniformly to an A/a cell

``#`` is a wall, ``.`` a blank cell, any other character an item. Moves
are north/east/south/west; bumping into a wall keeps the position. On
every action the agent stays put with probability ``slip``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..mdp import NULL, LabelingFunction, Nrmdp

MOVES = {"north": (0, -1), "east": (1, 0), "south": (0, 1), "west": (-1, 0)}
WILDCARD = "*"
START_STATE = "start"


class GridFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = f"line {line}" + (f", column {column}" if column is not None else "") if line else ""
        super().__init__(f"{where}: {message}" if where else message)
        self.line, self.column = line, column


@dataclass
class GridSpec:
    width: int
    height: int
    rows: list                      # strings, one char per cell
    actions: list                   # domain actions (moves are implicit)
    bindings: list                  # (item, action, observation)
    effects: list = field(default_factory=list)   # (action, from_items, to_items)
    starts: list = field(default_factory=list)    # (x, y)
    slip: float = 0.05
    default_reward: float = 0.0
    reset_cost: float = 0.0
    alphabet: Optional[list] = None
    name: str = "grid"

    def is_wall(self, x: int, y: int) -> bool:
        return not (0 <= x < self.width and 0 <= y < self.height) or self.rows[y][x] == "#"

    def item(self, x: int, y: int) -> Optional[str]:
        ch = self.rows[y][x]
        return None if ch in "#." else ch

    @property
    def all_actions(self) -> list:
        return list(MOVES) + list(self.actions)

    def observations(self) -> list:
        if self.alphabet:
            return list(self.alphabet)
        seen = []
        for _, _, z in self.bindings:
            if z not in seen:
                seen.append(z)
        return seen

    def cells(self) -> list:
        return [(x, y) for y in range(self.height) for x in range(self.width) if not self.is_wall(x, y)]

    def to_text(self) -> str:
        lines = [f"name = {self.name}", f"slip = {self.slip!r}", f"default_reward = {self.default_reward!r}",
                 f"reset_cost = {self.reset_cost!r}",
                 "start = " + " ".join(f"{x},{y}" for x, y in self.starts),
                 "actions = " + " ".join(self.actions)]
        if self.alphabet:
            lines.append("alphabet = " + " ".join(self.alphabet))
        lines += ["", "[grid]"] + list(self.rows) + ["", "[bindings]"]
        lines += [f"{i} {a} {z}" for i, a, z in self.bindings]
        if self.effects:
            lines += ["", "[effects]"]
            lines += [f"{a} {''.join(src)} -> {''.join(dst)}" for a, src, dst in self.effects]
        return "\n".join(lines) + "\n"


def load_grid(text: str) -> GridSpec:
    header, rows, bindings, effects = {}, [], [], []
    section = None
    grid_line = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        if section == "grid":
            stripped = raw.rstrip()
            if not stripped:
                continue
            if not stripped.startswith("["):
                rows.append((lineno, stripped))
                continue
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("grid", "bindings", "effects"):
                raise GridFormatError(f"unknown section [{section}]", lineno)
            if section == "grid":
                grid_line = lineno
            continue
        if section is None:
            if "=" not in line:
                raise GridFormatError("expected 'key = value'", lineno)
            key, value = (p.strip() for p in line.split("=", 1))
            header[key] = (lineno, value)
        elif section == "bindings":
            parts = line.split()
            if len(parts) != 3:
                raise GridFormatError("binding needs 'item action observation'", lineno)
            bindings.append((lineno, *parts))
        elif section == "effects":
            try:
                lhs, rhs = line.split("->")
                action, src = lhs.split()
                (dst,) = rhs.split()
            except ValueError:
                raise GridFormatError("effect needs 'action ITEMS -> ITEMS'", lineno) from None
            effects.append((lineno, action, list(src), list(dst)))
    if not rows:
        raise GridFormatError("missing [grid] section", grid_line)
    width = max(len(r) for _, r in rows)
    grid = [r.ljust(width, "#") for _, r in rows]

    def number(key, default):
        if key not in header:
            return default
        ln, v = header[key]
        try:
            return float(v)
        except ValueError:
            raise GridFormatError(f"{key} must be a number, got {v!r}", ln) from None

    spec = GridSpec(
        width=width, height=len(grid), rows=grid,
        actions=header.get("actions", (0, ""))[1].split(),
        bindings=[(i, a, z) for _, i, a, z in bindings],
        effects=[(a, s, d) for _, a, s, d in effects],
        slip=number("slip", 0.05),
        default_reward=number("default_reward", 0.0),
        reset_cost=number("reset_cost", 0.0),
        alphabet=header["alphabet"][1].split() if "alphabet" in header else None,
        name=header.get("name", (0, "grid"))[1],
    )
    if "start" not in header:
        raise GridFormatError("missing 'start' header")
    ln, value = header["start"]
    for tok in value.split():
        try:
            x, y = (int(v) for v in tok.split(","))
        except ValueError:
            raise GridFormatError(f"bad start cell {tok!r}", ln) from None
        if spec.is_wall(x, y):
            raise GridFormatError(f"start cell {tok} is a wall", ln)
        spec.starts.append((x, y))
    if not 0 <= spec.slip < 1:
        raise GridFormatError("slip must lie in [0, 1)", header.get("slip", (None,))[0])
    known = set(spec.all_actions) | {WILDCARD}
    obs = spec.observations()
    for ln, item, action, z in bindings:
        if action not in known:
            raise GridFormatError(f"binding uses unknown action {action!r}", ln)
        if z not in obs:
            raise GridFormatError(f"binding uses observation {z!r} missing from the alphabet", ln)
    for ln, action, _, _ in effects:
        if action not in known:
            raise GridFormatError(f"effect uses unknown action {action!r}", ln)
    return spec


def _strip_comment(line: str) -> str:
    # '#' starts a comment only when preceded by whitespace or at line start
    for i, ch in enumerate(line):
        if ch == "#" and (i == 0 or line[i - 1].isspace()):
            return line[:i]
    return line


def compile_grid(spec: GridSpec) -> tuple:
    """Build the (Nrmdp, LabelingFunction) pair of a grid.

    One state per free cell, named ``"x,y"``. With several start cells an
    extra initial state ``start`` is added from which every action lands
    uniformly on a start cell.
    """
    cells = spec.cells()
    multi = len(spec.starts) > 1
    offset = 1 if multi else 0
    index = {c: i + offset for i, c in enumerate(cells)}
    names = ([START_STATE] if multi else []) + [f"{x},{y}" for x, y in cells]
    actions = spec.all_actions
    n_s = len(names)
    by_item = {}
    for c in cells:
        it = spec.item(*c)
        if it is not None:
            by_item.setdefault(it, []).append(c)
    rows = {}
    slip = spec.slip
    for c in cells:
        s = index[c]
        for a, name in enumerate(actions):
            dist = {}
            if name in MOVES:
                dx, dy = MOVES[name]
                tx, ty = c[0] + dx, c[1] + dy
                targets = [c if spec.is_wall(tx, ty) else (tx, ty)]
            else:
                targets = [c]
                for act, src, dst in spec.effects:
                    if act == name and spec.item(*c) in src:
                        targets = [d for it in dst for d in by_item.get(it, [])] or [c]
                        break
            for t in targets:
                dist[index[t]] = dist.get(index[t], 0.0) + (1.0 - slip) / len(targets)
            dist[s] = dist.get(s, 0.0) + slip
            rows[(s, a)] = sorted(dist.items())
    if multi:
        uniform = sorted((index[c], 1.0 / len(spec.starts)) for c in spec.starts)
        for a in range(len(actions)):
            rows[(0, a)] = uniform
        initial = 0
    else:
        initial = index[spec.starts[0]]
    model = Nrmdp.from_rows(names, actions, rows, initial)

    alphabet = spec.observations()
    table = np.full((len(actions), n_s), NULL, dtype=int)
    for item, action, z in spec.bindings:
        acts = range(len(actions)) if action == WILDCARD else [actions.index(action)]
        for c in by_item.get(item, []):
            for a in acts:
                table[a, index[c]] = alphabet.index(z)
    return model, LabelingFunction(table, tuple(alphabet))
