"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line with the
measured numbers before asserting.
"""
import math
import random
import time

import numpy as np
import pytest

from armlearn.config import DriverConfig
from armlearn.driver import (empirical_mean_payoff, exploit_until_ce, explore_uniform_until_ce,
                             run_active_learning)
from armlearn.environments import REFERENCE_OPTIMUM, builtin, compile_grid, make_env, truth_machine
from armlearn.lstar import learn
from armlearn.machine import MealyRewardMachine, check_equivalence
from armlearn.planner import MAX, MIN, BudgetExhausted, build_query_mdp, execute_membership_query, plan
from armlearn.product import build_product_with_reset
from armlearn.solver import evaluate_strategy, optimal_mean_payoff

from conftest import random_sc_mdp
from test_solver import brute_force_gain

DOMAINS = ("treasure", "office", "cube")
MINIMAL_NODES = {"treasure": 5, "office": 7, "cube": 6}


@pytest.fixture
def report(capsys):
    def emit(n, ok, text):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {text}")
    return emit


def optimum(name):
    spec, truth, _ = builtin(name)
    model, labels = compile_grid(spec)
    p = build_product_with_reset(model, labels, truth, spec.reset_cost)
    strat = optimal_mean_payoff(p.mdp)
    return p, strat, float(strat.value[p.mdp.initial_state])


def teacher_run(truth):
    asked = []

    def mq(w):
        asked.append(tuple(w))
        return truth.run_observations(w)

    h, table = learn(truth.alphabet, truth.default_reward, mq, lambda h: check_equivalence(truth, h))
    return h, table, asked


def test_1_oracle_teacher_learning(report):
    details, ok = [], True
    for name in DOMAINS:
        truth = truth_machine(name)
        t = time.perf_counter()
        h, table, _ = teacher_run(truth)
        dt = time.perf_counter() - t
        good = check_equivalence(truth, h) is None and dt < 1.0
        if name == "cube":
            good &= h.n_nodes == 6
        if name == "office":
            node = lambda *w: h.node_after([truth.alphabet.index(z) for z in w])
            good &= node("mrA", "hmA") == node("mrB", "hmB") and node("drA", "hdA") == node("drB", "hdB")
            good &= h.n_nodes == truth.n_nodes - 2
        ok &= good
        details.append(f"{name} {truth.n_nodes}->{h.n_nodes} nodes in {dt * 1000:.0f} ms")
    report(1, ok, "; ".join(details))
    assert ok


def test_2_solver_matches_enumeration(report):
    t = time.perf_counter()
    worst = 0.0
    n = 200
    for seed in range(n):
        m = random_sc_mdp(np.random.default_rng(10_000 + seed))
        g = optimal_mean_payoff(m).value[0]
        worst = max(worst, abs(g - brute_force_gain(m)))
    dt = time.perf_counter() - t
    ok = worst <= 1e-6 and dt < 60
    report(2, ok, f"{n} random MDPs, max |gain - enumeration| = {worst:.2e}, {dt:.1f} s")
    assert ok


def calibration_queries(name, count=10):
    """An even spread over the membership queries L* asks about the domain's machine."""
    _, _, asked = teacher_run(truth_machine(name))
    words = sorted(set(asked), key=lambda w: (len(w), w))
    idx = np.linspace(0, len(words) - 1, count).round().astype(int)
    return [words[i] for i in dict.fromkeys(idx.tolist())]


@pytest.mark.slow
def test_3_planner_calibration(report):
    worst_z, lines, ok = 0.0, [], True
    target = 10_000
    for name in DOMAINS:
        spec, truth, _ = builtin(name)
        model, labels = compile_grid(spec)
        words = calibration_queries(name)
        assert len(words) >= 10
        for qi, word in enumerate(words):
            q = build_query_mdp(model, labels, word)
            # MAX: per-attempt success frequency against alpha
            strat = plan(q, MAX)
            alpha = float(strat.value[q.start])
            env = make_env(spec, truth, seed=1000 + qi)
            successes = attempts = 0
            while attempts < target:
                env.reset()
                attempts += execute_membership_query(env, strat, q).attempts
                successes += 1
            freq = successes / attempts
            se = math.sqrt(alpha * (1 - alpha) / attempts)
            z_max = abs(freq - alpha) / se if se > 0 else (0.0 if abs(freq - alpha) < 1e-12 else math.inf)
            # MIN: mean steps per realisation against N
            strat = plan(q, MIN)
            expected = float(strat.value[q.start])
            env = make_env(spec, truth, seed=2000 + qi)
            steps = []
            for _ in range(target):
                env.reset()
                steps.append(execute_membership_query(env, strat, q).steps)
            se = np.std(steps, ddof=1) / math.sqrt(target)
            z_min = abs(np.mean(steps) - expected) / se if se > 0 else (
                0.0 if abs(np.mean(steps) - expected) < 1e-9 else math.inf)
            worst_z = max(worst_z, z_max, z_min)
            ok &= z_max <= 3 and z_min <= 3
            if z_max > 3 or z_min > 3:
                lines.append(f"{name} {word}: alpha {alpha:.4f} vs {freq:.4f} (z {z_max:.2f}), "
                             f"N {expected:.2f} vs {np.mean(steps):.2f} (z {z_min:.2f})")
    report(3, ok, f"30 queries x 2 modes x {target} runs, worst deviation {worst_z:.2f} standard errors"
           + ("; " + "; ".join(lines) if lines else ""))
    assert ok


def test_4_exploitation_reaches_gain(report):
    ok, details = True, []
    for name in DOMAINS:
        spec, truth, _ = builtin(name)
        p, strat, gain = optimum(name)
        env = make_env(spec, truth, seed=4)
        steps = 10**5
        # one long episode, so the only resets are the ones the strategy chooses
        res = exploit_until_ce(env, p, strat, episode_length=steps, budget=steps + 1)
        mean = empirical_mean_payoff(res.rewards)
        rel = abs(mean - gain) / abs(gain)
        good = res.counterexample is None and len(res.rewards) == steps and rel < 0.05
        ok &= good
        details.append(f"{name} solver {gain:.4f} empirical {mean:.4f} ({rel * 100:.2f}%), "
                       f"reference {REFERENCE_OPTIMUM[name]}")
    report(4, ok, "; ".join(details))
    assert ok


# faults injected into the hidden machine: (node, symbol, wrong reward)
FAULTS = {"treasure": (0, "m", 9.0), "office": (0, "mrA", 2.0), "cube": (2, "b", 3.0)}


@pytest.mark.slow
def test_5_uniform_exploration_finds_counterexamples(report):
    ok, details = True, []
    budget = 10**5
    for name in DOMAINS:
        spec, truth, _ = builtin(name)
        u, z, r = FAULTS[name]
        wrong = truth.with_edge(u, truth.alphabet.index(z), reward=r)
        found = spurious = 0
        for seed in range(100):
            env = make_env(spec, truth, seed=seed)
            try:
                cex = explore_uniform_until_ce(env, wrong, budget, random.Random(seed))
                found += cex.rewards == truth.run_observations(cex.word)
            except BudgetExhausted:
                pass
            env = make_env(spec, truth, seed=seed)
            try:
                explore_uniform_until_ce(env, truth, budget, random.Random(seed))
                spurious += 1
            except BudgetExhausted:
                pass
        ok &= found == 100 and spurious == 0
        details.append(f"{name} wrong h {found}/100, true h {spurious}/100")
    report(5, ok, "; ".join(details))
    assert ok


def test_6_active_learning_reaches_expert_value(report):
    ok, details = True, []
    for name in DOMAINS:
        spec, truth, cfg = builtin(name)
        p_true, _, gain = optimum(name)
        config = DriverConfig(**{**cfg.to_dict(), "v_expert": 0.9 * gain})
        env = make_env(spec, truth, seed=config.seed)
        t = time.perf_counter()
        log = run_active_learning(env, config)
        dt = time.perf_counter() - t
        # value of the learned strategy in the real product
        model, labels = compile_grid(spec)
        ph = build_product_with_reset(model, labels, log.machine, spec.reset_cost)
        sh = optimal_mean_payoff(ph.mdp)
        real = _true_value(p_true, ph, sh)
        good = (log.final_gain >= config.v_expert and log.hypotheses <= MINIMAL_NODES[name] and dt < 300)
        ok &= good
        details.append(f"{name} V(H) {log.final_gain:.4f} >= {config.v_expert:.4f}, true value {real:.4f}, "
                       f"{log.hypotheses} hypotheses, {log.mq_count} MQs, {log.ce_count} CEs, {dt:.1f} s")
    report(6, ok, "; ".join(details))
    assert ok


def _true_value(p_true, ph, sh):
    """Gain of the hypothesis strategy when the true machine pays the rewards."""
    nt, nh = p_true.n_nodes, ph.n_nodes
    truth, hyp = p_true.machine, ph.machine
    # joint product of truth and hypothesis nodes, strategy read from the hypothesis side
    alphabet = truth.alphabet
    k = len(alphabet)
    pairs = [(a, b) for a in range(nt) for b in range(nh)]
    index = {pr: i for i, pr in enumerate(pairs)}
    trans = [[index[(truth.transition[a][z], hyp.transition[b][z])] for z in range(k)] for a, b in pairs]
    out = [[truth.output[a][z] for z in range(k)] for a, b in pairs]
    joint = MealyRewardMachine(alphabet, trans, out, truth.default_reward, index[(truth.start, hyp.start)])
    pj = build_product_with_reset(p_true.model, p_true.labels, joint, p_true.reset_cost)
    choice = np.array([sh.choice[ph.index(s, pairs[u][1])] for s in range(p_true.model.n_states)
                       for u in range(len(pairs))])
    return float(evaluate_strategy(pj.mdp, choice)[pj.mdp.initial_state])


def test_7_determinism(report, tmp_path):
    ok, details = True, []
    for name in DOMAINS:
        spec, truth, cfg = builtin(name)
        blobs = []
        for run in range(2):
            env = make_env(spec, truth, seed=cfg.seed)
            log = run_active_learning(env, cfg)
            out = tmp_path / f"{name}-{run}"
            log.write(out)
            blobs.append(((out / "run.csv").read_bytes(), (out / "learned.json").read_bytes()))
        same = blobs[0] == blobs[1]
        ok &= same
        details.append(f"{name} {'identical' if same else 'different'}")
    report(7, ok, "; ".join(details))
    assert ok
