import random

import numpy as np
import pytest

from armlearn.environments import (GridFormatError, builtin, compile_grid, export, load_grid, make_env,
                                   truth_machine)
from armlearn.environments.env import reveal
from armlearn.machine import from_json
from armlearn.mdp import History, validate

EMPTY = """\
start = {start}
slip = {slip}
actions = collect
alphabet = t

[grid]
.....
.....
..t..
.....
.....

[bindings]
t collect t
"""


def empty_grid(start="0,0", slip=0.05):
    return load_grid(EMPTY.format(start=start, slip=slip))


def test_state_counts():
    m, _ = compile_grid(empty_grid())
    assert m.n_states == 25
    m2, _ = compile_grid(empty_grid(start="0,0 4,4"))
    assert m2.n_states == 26
    assert m2.states[0] == "start"
    assert dict(m2.row(0, 0)) == {m2.state_index("0,0"): 0.5, m2.state_index("4,4"): 0.5}


def test_binding_labels_cell():
    m, labels = compile_grid(empty_grid())
    s = m.state_index("2,2")
    assert labels(m.action_index("collect"), s) == 0
    assert labels(m.action_index("north"), s) is None


def test_wall_bump_stays():
    m, _ = compile_grid(empty_grid())
    s = m.state_index("4,2")
    assert m.row(s, m.action_index("east")) == [(s, 1.0)]


def test_slip_added_to_stay():
    m, _ = compile_grid(empty_grid(slip=0.1))
    s = m.state_index("1,1")
    assert dict(m.row(s, m.action_index("east"))) == pytest.approx({s: 0.1, m.state_index("2,1"): 0.9})


def test_builtins_validate(domains):
    for d in domains.values():
        assert validate(d["model"]) == []


def test_parse_errors():
    with pytest.raises(GridFormatError, match="line 1"):
        load_grid("start 0,0\n[grid]\n..\n")
    with pytest.raises(GridFormatError, match="missing"):
        load_grid("start = 0,0\n")
    with pytest.raises(GridFormatError, match="wall"):
        load_grid("start = 0,0\n[grid]\n#.\n")
    with pytest.raises(GridFormatError, match="unknown action"):
        load_grid("start = 0,0\nalphabet = t\n[grid]\n.t\n[bindings]\nt fly t\n")
    with pytest.raises(GridFormatError, match="alphabet"):
        load_grid("start = 0,0\nalphabet = t\n[grid]\n.t\n[bindings]\nt * q\n")
    with pytest.raises(GridFormatError, match="slip"):
        load_grid("start = 0,0\nslip = 1\n[grid]\n..\n")
    with pytest.raises(GridFormatError) as err:
        load_grid("start = 0,0\nslip = x\n[grid]\n..\n")
    assert err.value.line == 2


def test_grid_text_roundtrip(domains):
    for d in domains.values():
        spec = d["spec"]
        again = load_grid(spec.to_text())
        assert again == spec


def test_env_rewards(treasure):
    spec, model = treasure["spec"], treasure["model"]
    env = make_env(spec, treasure["truth"], seed=0)
    assert env.reset() == (model.initial_state, -10)
    # walk from the start corner: any move landing on a blank cell pays c
    _, r = env.step(model.action_index("north"))
    assert r == pytest.approx(-0.1)
    env.state = model.state_index(next(f"{x},{y}" for x, y in spec.cells() if spec.item(x, y) == "m"))
    rewards = {env.step(model.action_index("buy"))[1] for _ in range(50)}
    assert 10 in rewards
    with pytest.raises(IndexError):
        env.step(model.n_actions)


def test_env_agrees_with_machine(domains):
    for name, d in domains.items():
        env = make_env(d["spec"], d["truth"], seed=7)
        rng = random.Random(1)
        for _ in range(20):
            s0, _ = env.reset()
            hist, rewards = History(s0), []
            for _ in range(300):
                a = rng.randrange(env.n_actions)
                s, r = env.step(a)
                hist.steps.append((a, s))
                rewards.append(r)
            assert tuple(rewards) == reveal(env).run_history(hist, d["labels"])


def test_slip_frequency():
    m, labels = compile_grid(empty_grid())
    truth = from_json(truth_json())
    env = make_env(empty_grid(), truth, seed=9)
    start = m.state_index("1,1")
    east = m.action_index("east")
    n, stays = 100_000, 0
    for _ in range(n):
        env.state = start
        s, _ = env.step(east)
        stays += s == start
    assert abs(stays / n - 0.05) < 0.007


def truth_json():
    return '{"nodes":[0],"start":0,"alphabet":["t"],"default_reward":0,' \
           '"edges":[{"from":0,"input":"t","to":0,"reward":1}]}'


def test_builtin_facts():
    spec, truth, cfg = builtin("cube")
    assert truth.n_nodes == 7
    assert (spec.default_reward, spec.reset_cost) == (0, -1)
    spec, truth, cfg = builtin("office")
    assert truth.step(0, truth.alphabet.index("mrA")) == (1, 1)
    assert (spec.default_reward, spec.reset_cost, cfg.v_expert, cfg.episode_length) == (-0.1, -2, 0.3, 63)
    spec, truth, cfg = builtin("treasure")
    assert cfg.v_expert == 9
    assert (spec.default_reward, spec.reset_cost, cfg.episode_length) == (-0.1, -10, 507)
    assert len(spec.starts) == 20
    with pytest.raises(KeyError):
        builtin("maze")


def test_builtin_machines_match_edges():
    for name in ("treasure", "office", "cube"):
        _, truth, _ = builtin(name)
        assert truth == truth_machine(name)


def test_office_ask_is_a_coin_flip(domains):
    d = domains["office"]
    m, labels, spec = d["model"], d["labels"], d["spec"]
    ask = m.action_index("ask")
    cells = {spec.item(x, y): m.state_index(f"{x},{y}") for x, y in spec.cells() if spec.item(x, y)}
    row = dict(m.row(cells["A"], ask))
    assert row == pytest.approx({cells["a"]: 0.475, cells["A"]: 0.525})
    assert labels.alphabet[labels(ask, cells["a"])] == "mrA"
    assert labels.alphabet[labels(ask, cells["A"])] == "drA"


def test_cube_layout(domains):
    spec = domains["cube"]["spec"]
    items = [spec.item(*c) for c in spec.cells()]
    assert (spec.width, spec.height) == (5, 5)
    assert items.count("a") == 2 and items.count("b") == 2
    assert len(spec.cells()) == 25


def test_export(tmp_path):
    paths = export("cube", tmp_path)
    assert sorted(p.name for p in paths) == ["cube.grid", "cube.json"]
    assert load_grid(paths[0].read_text()) == builtin("cube")[0]
