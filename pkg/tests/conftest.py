import numpy as np
import pytest

from armlearn.environments import builtin, compile_grid
from armlearn.mdp import LabelingFunction, Nrmdp, RewardMdp


def reward_mdp(rows, rewards, initial=0):
    """RewardMdp from rows[s][a] = [(t, p), ...] and rewards[s][a]."""
    n, k = len(rows), len(rows[0])
    m = Nrmdp.from_rows(range(n), range(k), rows, initial)
    return RewardMdp(m.states, m.actions, m.matrix, initial, np.asarray(rewards, dtype=float))


def corridor(k, alphabet=("a",), word=None):
    """Deterministic line 0 -> 1 -> ... -> k; entering cell i+1 emits word[i]."""
    word = word or [0] * k
    rows = [[[(min(s + 1, k), 1.0)]] for s in range(k + 1)]
    m = Nrmdp.from_rows(range(k + 1), ["go"], rows, 0)
    table = np.full((1, k + 1), -1)
    for i, z in enumerate(word):
        table[0, i + 1] = z
    return m, LabelingFunction(table, tuple(alphabet))


@pytest.fixture(scope="session")
def domains():
    out = {}
    for name in ("treasure", "office", "cube"):
        spec, truth, cfg = builtin(name)
        model, labels = compile_grid(spec)
        out[name] = dict(spec=spec, truth=truth, config=cfg, model=model, labels=labels)
    return out


@pytest.fixture(scope="session")
def treasure(domains):
    return domains["treasure"]


def random_sc_mdp(rng, max_states=5, max_actions=3):
    """Random strongly connected MDP: action 0 always has some mass on s -> s+1 (mod n)."""
    n = int(rng.integers(1, max_states + 1))
    k = int(rng.integers(1, max_actions + 1))
    rows = []
    for s in range(n):
        per_s = []
        for a in range(k):
            support = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist()
            if a == 0 and (s + 1) % n not in support:
                support.append((s + 1) % n)
            w = rng.random(len(support)) + 0.05
            per_s.append(list(zip(support, (w / w.sum()).tolist())))
        rows.append(per_s)
    return reward_mdp(rows, rng.uniform(-1, 1, size=(n, k)))
