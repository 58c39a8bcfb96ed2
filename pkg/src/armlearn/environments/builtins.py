"""The three benchmark domains: treasure map, office bot and cube."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..config import DriverConfig
from ..machine import MealyRewardMachine, from_edges, from_json
from .env import HiddenEnvironment
from .grid import GridSpec, compile_grid, load_grid

NAMES = ("treasure", "office", "cube")

# Benchmark machine edges; omitted pairs are self-loops paying 0.
_EDGES = {
    "treasure": (("m", "e", "g", "t", "j"), 5, [
        (0, "m", 1, 10), (1, "e", 2, 80), (1, "g", 3, 70),
        (2, "t", 4, 80), (3, "t", 4, 95), (4, "j", 1, 180),
    ]),
    "office": (("mrA", "mrB", "drA", "drB", "hmA", "hmB", "hdA", "hdB", "del"), 9, [
        (0, "mrA", 1, 1), (0, "mrB", 2, 1), (0, "drA", 3, 1), (0, "drB", 4, 1),
        (1, "hmA", 5, 2), (2, "hmB", 6, 2), (3, "hdA", 7, 2), (4, "hdB", 8, 2),
        (5, "del", 0, 3), (6, "del", 0, 3), (7, "del", 0, 4), (8, "del", 0, 4),
    ]),
    "cube": (("a", "b"), 7, [
        (0, "a", 1, 0), (1, "a", 2, 0), (2, "a", 3, 0), (2, "b", 5, 2),
        (3, "a", 4, 0), (4, "a", 1, 0), (4, "b", 6, 1), (5, "b", 0, 0), (6, "b", 0, 0),
    ]),
}

_DEFAULTS = {
    "treasure": dict(v_expert=9.0, episode_length=507, total_step_budget=400_000),
    "office": dict(v_expert=0.3, episode_length=63, total_step_budget=400_000),
    "cube": dict(v_expert=0.15, episode_length=75, total_step_budget=100_000),
}

# published optima of the original layouts, kept for comparison only
REFERENCE_OPTIMUM = {"treasure": 9.884, "office": 0.383, "cube": 0.1624}

_DEFAULT_REWARD = {"treasure": -0.1, "office": -0.1, "cube": 0.0}


def truth_machine(name: str) -> MealyRewardMachine:
    alphabet, n, edges = _EDGES[name]
    return from_edges(alphabet, n, edges, default_reward=_DEFAULT_REWARD[name])


def _data(filename: str) -> str:
    return resources.files(__package__).joinpath("data", filename).read_text()


def builtin(name: str) -> tuple:
    """(GridSpec, truth machine, DriverConfig) for a benchmark domain."""
    if name not in NAMES:
        raise KeyError(f"unknown domain {name!r}; choose from {NAMES}")
    spec = load_grid(_data(f"{name}.grid"))
    truth = from_json(_data(f"{name}.json"))
    return spec, truth, DriverConfig(**_DEFAULTS[name])


def make_env(spec: GridSpec, truth: MealyRewardMachine, seed=None) -> HiddenEnvironment:
    model, labels = compile_grid(spec)
    return HiddenEnvironment(model, labels, truth, spec.reset_cost, seed)


def export(name: str, directory) -> list:
    """Write ``<name>.grid`` and ``<name>.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for ext in ("grid", "json"):
        path = directory / f"{name}.{ext}"
        path.write_text(_data(f"{name}.{ext}"))
        written.append(path)
    return written
