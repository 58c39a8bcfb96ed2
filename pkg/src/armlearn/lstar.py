"""Observation-table learning of Mealy reward machines (Angluin-style).

Words are tuples of symbol indices. Membership queries are answered from
outside: the table only lists what it still needs and accepts answers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .machine import MealyRewardMachine, rewards_equal, traces_equal

log = logging.getLogger(__name__)


class TableError(RuntimeError):
    pass


class ContradictionError(TableError):
    """Two answers for the same word disagree: the teacher is not a function."""


class NotACounterexample(TableError):
    pass


@dataclass(frozen=True)
class Complete:
    pass


@dataclass(frozen=True)
class Unclosed:
    row: tuple


@dataclass(frozen=True)
class Inconsistent:
    first: tuple
    second: tuple
    symbol: int
    suffix: tuple


def _key(outputs) -> tuple:
    return tuple(round(r, 9) + 0.0 for r in outputs)


class ObservationTable:
    def __init__(self, alphabet: Sequence[str], default_reward: float = 0.0):
        self.alphabet = tuple(alphabet)
        self.default_reward = default_reward
        self.prefixes: list = [()]
        self.suffixes: list = [(z,) for z in range(len(self.alphabet))]
        # answers for every cached word and all of its prefixes
        self.known: dict = {(): ()}
        self.hypothesis: Optional[MealyRewardMachine] = None
        self.hypothesis_id = 0
        self._prefix_set = {()}

    # -- cells --------------------------------------------------------

    def boundary(self) -> list:
        out, seen = [], set(self._prefix_set)
        for p in self.prefixes:
            for z in range(len(self.alphabet)):
                w = p + (z,)
                if w not in seen:
                    seen.add(w)
                    out.append(w)
        return out

    def rows(self) -> list:
        return self.prefixes + self.boundary()

    def cell(self, p: tuple, e: tuple) -> Optional[tuple]:
        ans = self.known.get(p + e)
        return None if ans is None else ans[len(p):]

    def row(self, p: tuple) -> tuple:
        return tuple(_key(self.cell(p, e)) for e in self.suffixes)

    def pending_queries(self) -> list:
        needed = {p + e for p in self.rows() for e in self.suffixes}
        return sorted((w for w in needed if w not in self.known), key=lambda w: (len(w), w))

    def next_query(self) -> Optional[tuple]:
        """Shortest pending word that is not a proper prefix of another pending word.

        Answering a word answers all its prefixes, so maximal words are
        enough to fill the table.
        """
        pending = self.pending_queries()
        if not pending:
            return None
        inner = {w[:i] for w in pending for i in range(len(w))}
        return next(w for w in pending if w not in inner)

    def resolve(self, word: Sequence[int], rewards: Sequence[float]) -> None:
        word, rewards = tuple(word), tuple(float(r) for r in rewards)
        if len(word) != len(rewards):
            raise ValueError(f"word of length {len(word)} answered with {len(rewards)} rewards")
        if word in self.known:
            if not traces_equal(self.known[word], rewards):
                raise ContradictionError(f"word {word}: {self.known[word]} vs {rewards}")
            return
        # check the longest cached prefix before writing anything
        for i in range(len(word), 0, -1):
            old = self.known.get(word[:i])
            if old is not None:
                if not traces_equal(old, rewards[:i]):
                    raise ContradictionError(f"prefix {word[:i]}: {old} vs {rewards[:i]}")
                break
        for i in range(len(word), 0, -1):
            if word[:i] in self.known:
                break
            self.known[word[:i]] = rewards[:i]

    def answer_all(self, membership: Callable[[tuple], Sequence[float]]) -> int:
        """Fill every pending cell with a membership oracle; returns queries asked."""
        asked = 0
        while (w := self.next_query()) is not None:
            self.resolve(w, membership(w))
            asked += 1
        return asked

    # -- closedness / consistency ------------------------------------

    def completeness(self):
        if self.pending_queries():
            raise TableError("table has unfilled cells")
        s_rows = {}
        for p in self.prefixes:
            s_rows.setdefault(self.row(p), p)
        for w in self.boundary():
            if self.row(w) not in s_rows:
                return Unclosed(w)
        by_row = {}
        for p in self.prefixes:
            by_row.setdefault(self.row(p), []).append(p)
        for group in by_row.values():
            first = group[0]
            for other in group[1:]:
                for z in range(len(self.alphabet)):
                    for e in self.suffixes:
                        a, b = self.cell(first + (z,), e), self.cell(other + (z,), e)
                        if not traces_equal(a, b):
                            return Inconsistent(first, other, z, e)
        return Complete()

    def is_complete(self) -> bool:
        return isinstance(self.completeness(), Complete)

    def fix(self, certificate) -> None:
        if isinstance(certificate, Unclosed):
            self._add_prefix(certificate.row)
        elif isinstance(certificate, Inconsistent):
            col = (certificate.symbol,) + certificate.suffix
            if col not in self.suffixes:
                self.suffixes.append(col)
        else:
            raise TableError(f"nothing to fix for {certificate!r}")

    def _add_prefix(self, p: tuple) -> None:
        if p not in self._prefix_set:
            self._prefix_set.add(p)
            self.prefixes.append(p)

    # -- hypotheses and counterexamples --------------------------------

    def build_hypothesis(self) -> MealyRewardMachine:
        if not self.is_complete():
            raise TableError("table is not closed and consistent")
        classes, reps = {}, []
        for p in self.prefixes:
            key = self.row(p)
            if key not in classes:
                classes[key] = len(reps)
                reps.append(p)
        trans = [[classes[self.row(p + (z,))] for z in range(len(self.alphabet))] for p in reps]
        out = [[self.cell(p, (z,))[0] for z in range(len(self.alphabet))] for p in reps]
        self.hypothesis = MealyRewardMachine(self.alphabet, trans, out, self.default_reward, 0)
        self.hypothesis_id += 1
        log.debug("hypothesis %d: %d nodes", self.hypothesis_id, len(reps))
        return self.hypothesis

    def cached_counterexample(self, h: MealyRewardMachine) -> Optional[tuple]:
        """Shortest cached word on which ``h`` disagrees with its recorded answer."""
        for w in sorted(self.known, key=lambda w: (len(w), w)):
            if not traces_equal(h.run_observations(w), self.known[w]):
                return w
        return None

    def add_counterexample(self, word: Sequence[int], rewards: Sequence[float]) -> None:
        word, rewards = tuple(word), tuple(float(r) for r in rewards)
        if self.hypothesis is None:
            raise TableError("no hypothesis to refute")
        if traces_equal(self.hypothesis.run_observations(word), rewards):
            raise NotACounterexample(f"hypothesis already agrees on {word}")
        self.resolve(word, rewards)
        for i in range(1, len(word) + 1):
            self._add_prefix(word[:i])

    def dump(self) -> str:
        """Plain-text rendering for debugging."""
        def fmt(w):
            return "".join(f"{self.alphabet[z]}." for z in w).rstrip(".") or "ε"

        header = ["row"] + [fmt(e) for e in self.suffixes]
        lines = ["\t".join(header)]
        for label, ws in (("S", self.prefixes), ("S.Z", self.boundary())):
            for p in ws:
                cells = [",".join(f"{r:g}" for r in c) if (c := self.cell(p, e)) is not None else "?"
                         for e in self.suffixes]
                lines.append("\t".join([f"{label}:{fmt(p)}"] + cells))
        return "\n".join(lines)


def learn(alphabet: Sequence[str], default_reward: float,
          membership: Callable[[tuple], Sequence[float]],
          equivalence: Callable[[MealyRewardMachine], Optional[tuple]],
          max_rounds: int = 1000):
    """Run L* against a minimally adequate teacher.

    ``equivalence`` returns None or a counterexample word; its answer is then
    fetched with ``membership``. Returns (machine, table).
    """
    table = ObservationTable(alphabet, default_reward)
    for _ in range(max_rounds):
        table.answer_all(membership)
        cert = table.completeness()
        if not isinstance(cert, Complete):
            table.fix(cert)
            continue
        h = table.build_hypothesis()
        cex = equivalence(h)
        if cex is None:
            return h, table
        table.add_counterexample(cex, membership(tuple(cex)))
    raise TableError(f"no convergence after {max_rounds} rounds")


def agrees(h: MealyRewardMachine, word, rewards) -> bool:
    return traces_equal(h.run_observations(word), rewards)


__all__ = [
    "ObservationTable", "Complete", "Unclosed", "Inconsistent", "TableError",
    "ContradictionError", "NotACounterexample", "learn", "agrees", "rewards_equal",
]
