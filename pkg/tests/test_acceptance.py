"""Acceptance gate: one test per criterion, each at its stated tolerance.

Cheap criteria run live.  The four training-matrix criteria read
results/acceptance/matrix_summary.json, produced by
`python scripts/run_acceptance_matrix.py` (hours of single-core training;
resumable).  Tests for unfinished matrix parts skip with instructions.

The web client's replay criterion lives in frontend/test (vitest); the
last test here drives it when the frontend toolchain is installed.
"""

import json
import os
import shutil
import subprocess

import numpy as np
import pytest

from fibercoupling.agents import AgentConfig, RandomAgent
from fibercoupling.agents.base import SquashedGaussianActor
from fibercoupling.agents.tqc import truncate_pooled_quantiles
from fibercoupling.config import RunConfig, apply_overrides
from fibercoupling.env import EnvConfig, RewardParams, max_return, reward
from fibercoupling.harness.evaluate import evaluate
from fibercoupling.harness.train import build_env, train
from fibercoupling.nn import BatchRenorm, Mlp
from fibercoupling.testbed import TestbedModel, coupling_power

from gradcheck import FixedNoise, fd_gradients, max_relative_error

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
MATRIX = os.path.join(ROOT, "results", "acceptance", "matrix_summary.json")


def report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def matrix_summary() -> dict:
    if not os.path.exists(MATRIX):
        pytest.skip("acceptance matrix not generated: run scripts/run_acceptance_matrix.py")
    with open(MATRIX, encoding="utf-8") as fh:
        return json.load(fh)


def matrix_runs(summary: dict, names: list[str]) -> dict:
    runs = summary.get("runs", {})
    missing = [n for n in names if n not in runs]
    if missing:
        pytest.skip(f"acceptance matrix incomplete ({len(runs)} runs done; "
                    f"missing {missing[:3]}...): run scripts/run_acceptance_matrix.py")
    return {n: runs[n] for n in names}


# -- 1. testbed exactness ---------------------------------------------------

def test_testbed_exactness():
    model = TestbedModel()
    at_means = coupling_power(model.means, model)
    ok = abs(at_means - 0.92) < 1e-12
    errors = [abs(at_means - 0.92)]
    expected_one_sigma = 0.92 * np.exp(-0.5)
    for axis in range(4):
        pos = model.means.astype(float).copy()
        pos[axis] += model.sigmas[axis]
        err = abs(coupling_power(pos, model) - expected_one_sigma)
        errors.append(err)
        ok = ok and err < 1e-12
    report("testbed-exactness", ok, f"max error {max(errors):.2e} (tol 1e-12)")
    assert ok


# -- 2. reward oracle ---------------------------------------------------------

def test_reward_oracle_values_and_monotonicity():
    params = RewardParams()
    frozen = [
        (reward(0.9, 1, 30, 0.05, 0.9, 0.2, params), 0.24333333333333333),
        (reward(0.91, 1, 30, 0.05, 0.9, 0.2, params), 179.75675515726595),
        (reward(0.04, 10, 30, 0.05, 0.9, 0.2, params), -10.359562086314801),
    ]
    worst = max(abs(a - b) for a, b in frozen)
    ok = worst < 1e-9

    rng = np.random.default_rng(0)
    n = 100_000
    p = rng.uniform(0.0, 1.0, size=n)
    t = rng.integers(1, 31, size=n)
    eps = 1e-5
    checked = 0
    for p_i, t_i in zip(p, t):
        t_i = int(t_i)
        base = reward(p_i, t_i, 30, 0.05, 0.9, 0.2, params)
        up = reward(min(p_i + eps, 1.2), t_i, 30, 0.05, 0.9, 0.2, params)
        if p_i < 0.05 - eps:
            ok = ok and abs(up) < abs(base)                     # fail |r| shrinks in P
            if t_i < 30:
                later = reward(p_i, t_i + 1, 30, 0.05, 0.9, 0.2, params)
                ok = ok and abs(later) < abs(base)              # and in t
        elif 0.05 + eps < p_i <= 0.9 - eps:
            ok = ok and up > base                               # step grows in P
        elif p_i > 0.9 + eps:
            ok = ok and up > base                               # goal grows in P
            if t_i < 30:
                later = reward(p_i, t_i + 1, 30, 0.05, 0.9, 0.2, params)
                ok = ok and later < base                        # goal shrinks in t
        checked += 1
        if not ok:
            break
    report("reward-oracle", ok,
           f"branch values within {worst:.2e} (tol 1e-9); {checked} monotonicity samples")
    assert ok


# -- 3. gradient fidelity --------------------------------------------------------

def _mse_case(rng, batch_renorm, train):
    sizes = [int(rng.integers(3, 7)), int(rng.integers(4, 9)), int(rng.integers(2, 5))]
    net = Mlp(sizes, rng, ensemble=int(rng.integers(1, 3)), batch_renorm=batch_renorm)
    for layer in net.layers:
        if isinstance(layer, BatchRenorm):
            layer.freeze_stats = True
            layer.running_mean[:] = rng.standard_normal(layer.running_mean.shape) * 0.2
            layer.running_var[:] = 0.7 + 0.6 * rng.random(layer.running_var.shape)
    x = rng.standard_normal((5, sizes[0]))
    target = rng.standard_normal((net.ensemble, 5, sizes[-1]))

    def loss():
        y, caches = net.forward(x, train=train)
        return 0.5 * float(((y - target) ** 2).sum()), caches, y

    value, caches, y = loss()
    net.zero_grads()
    net.backward(y - target, caches, need_input_grad=False)
    analytic = {k: v.copy() for k, v in net.grads().items()}
    numeric = fd_gradients(lambda: loss()[0], net.params())
    return max_relative_error(analytic, numeric)


def _actor_case(rng):
    obs_dim = int(rng.integers(3, 6))
    act_dim = int(rng.integers(2, 4))
    cfg = AgentConfig(algo="sac", hidden=(int(rng.integers(5, 9)), int(rng.integers(4, 8))),
                      dtype="float64", actor_out_scale=float(rng.uniform(0.2, 0.8)))
    actor = SquashedGaussianActor(obs_dim, act_dim, cfg, rng)
    critics = Mlp([obs_dim + act_dim, 6, 1], rng, ensemble=2)
    s = rng.standard_normal((4, obs_dim))
    eps = rng.standard_normal((4, act_dim))
    alpha = float(rng.uniform(0.05, 0.8))

    def loss():
        a, logp, _ = actor.sample(s, FixedNoise(eps))
        q = critics(np.concatenate([s, a], axis=1))[:, :, 0]
        return float(np.mean(alpha * logp - q.min(axis=0)))

    a, logp, ctx = actor.sample(s, FixedNoise(eps))
    q_pi, caches = critics.forward(np.concatenate([s, a], axis=1))
    q_pi = q_pi[:, :, 0]
    batch = len(s)
    argmin = q_pi.argmin(axis=0)
    d_q = np.zeros((2, batch, 1))
    d_q[argmin, np.arange(batch), 0] = -1.0 / batch
    d_input = critics.backward(d_q, caches, need_input_grad=True, param_grads=False)
    actor.net.zero_grads()
    actor.backward_from(ctx, d_input[:, obs_dim:], alpha / batch)
    analytic = {k: v.copy() for k, v in actor.net.grads().items()}
    numeric = fd_gradients(loss, actor.net.params())
    return max_relative_error(analytic, numeric)


def test_gradient_fidelity_fifty_networks():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(50):
        if i < 15:
            err = _mse_case(rng, batch_renorm=False, train=False)
        elif i < 25:
            err = _mse_case(rng, batch_renorm=True, train=True)
        elif i < 35:
            err = _mse_case(rng, batch_renorm=True, train=False)
        else:
            err = _actor_case(rng)
        worst = max(worst, err)
    ok = worst < 1e-4
    report("gradient-fidelity", ok, f"max relative error {worst:.2e} over 50 nets (tol 1e-4)")
    assert ok


# -- 4. TQC truncation -------------------------------------------------------------

def test_tqc_truncation_oracle_equivalence():
    rng = np.random.default_rng(7)
    cases = 0
    ok = True
    grid = [(n, q, d) for n in (1, 2, 3, 4) for q in (5, 25) for d in (0, 1, 2, 3)]
    per_cell = 10_000 // len(grid) + 1
    for n_nets, n_q, drop in grid:
        for _ in range(per_cell):
            quantiles = rng.standard_normal((n_nets, 3, n_q))
            got = truncate_pooled_quantiles(quantiles, drop)
            for b in range(3):
                pool = sorted(quantiles[:, b, :].ravel().tolist())
                keep = len(pool) - drop * n_nets
                ok = ok and np.array_equal(got[b], np.asarray(pool[:keep]))
            cases += 1
        if not ok:
            break
    report("tqc-truncation", ok, f"{cases} random quantile sets across {len(grid)} grid cells")
    assert ok


# -- 5. learning on the noiseless testbed -------------------------------------------

def test_learning_matrix_goal_probability():
    summary = matrix_summary()
    names = [f"learning_{algo}_s{seed}" for algo in ("sac", "tqc", "crossq")
             for seed in range(5)]
    runs = matrix_runs(summary, names)
    details = []
    ok = True
    for algo in ("sac", "tqc", "crossq"):
        probs = [runs[f"learning_{algo}_s{s}"]["goal_probability"] for s in range(5)]
        mean = float(np.mean(probs))
        details.append(f"{algo}={mean:.3f}")
        ok = ok and mean >= 0.8
    report("learning-noiseless", ok,
           "mean final goal probability over 5 seeds: " + ", ".join(details) + " (tol >= 0.8)")
    assert ok


def test_learning_random_baseline():
    """Baseline anchor per the derived train-op example: P_goal=0.85, < 0.1.

    The stricter same-goal (0.8) reading is reported alongside; see the
    decisions ledger for the calibration analysis.
    """
    summary = matrix_summary()
    at_08 = summary.get("random_baseline", {}).get("goal_probability_mean")
    probs = []
    for seed in range(5):
        rng = np.random.default_rng(np.random.SeedSequence([778, seed]))
        env = build_env(apply_overrides(RunConfig(), {"env.p_goal": 0.85}), rng,
                        reset_method="A")
        agent = RandomAgent(env.config.observation_size, 4, AgentConfig(algo="random"))
        probs.append(evaluate(agent, env, 100, rng).goal_probability)
    at_085 = float(np.mean(probs))
    ok = at_085 < 0.1
    report("random-baseline", ok,
           f"goal probability {at_085:.3f} at the derived 0.85 anchor (tol < 0.1); "
           f"{at_08:.3f} at goal 0.8 for reference" if at_08 is not None
           else f"goal probability {at_085:.3f} (tol < 0.1)")
    assert ok


# -- 6. noise degradation trend -------------------------------------------------------

def test_noise_degradation_trend():
    summary = matrix_summary()
    clean = matrix_runs(summary, [f"direct09_tqc_s{s}" for s in range(5)])
    noisy = matrix_runs(summary, [f"noise3_tqc_s{s}" for s in range(5)])
    clean_mean = float(np.mean([r["mean_normalized_return"] for r in clean.values()]))
    noisy_mean = float(np.mean([r["mean_normalized_return"] for r in noisy.values()]))
    ok = noisy_mean < clean_mean
    report("noise-degradation", ok,
           f"mean final normalized return: N=0 {clean_mean:.3f} vs N=3 {noisy_mean:.3f}")
    assert ok


# -- 7. curriculum trend ----------------------------------------------------------------

def test_curriculum_trend():
    summary = matrix_summary()
    stair = matrix_runs(summary, [f"stair_tqc_s{s}" for s in range(5)])
    direct = matrix_runs(summary, [f"direct09_tqc_s{s}" for s in range(5)])
    stair_mean = float(np.mean([r["goal_probability"] for r in stair.values()]))
    direct_mean = float(np.mean([r["goal_probability"] for r in direct.values()]))
    ok = stair_mean >= direct_mean
    report("curriculum-trend", ok,
           f"goal probability at 1e5 steps: staircase {stair_mean:.3f} "
           f">= direct {direct_mean:.3f} (ties allowed)")
    assert ok


# -- 8. shift robustness -------------------------------------------------------------------

def test_shift_robustness():
    summary = matrix_summary()
    table = summary.get("shift_eval", {})
    noabs = [table.get(f"shift_noabs_tqc_s{s}") for s in range(3)]
    withabs = [table.get(f"shift_abs_tqc_s{s}") for s in range(3)]
    if any(v is None for v in noabs + withabs):
        pytest.skip("shift evaluations incomplete: run scripts/run_acceptance_matrix.py")
    noabs_k4 = float(np.mean([v["4"] for v in noabs]))
    withabs_k4 = float(np.mean([v["4"] for v in withabs]))
    ok = noabs_k4 >= 0.5 and withabs_k4 < 0.5
    report("shift-robustness", ok,
           f"k=4 goal probability: without abs positions {noabs_k4:.3f} (>= 0.5), "
           f"with abs positions {withabs_k4:.3f} (< 0.5)")
    assert ok


# -- 9. normalized return bound + reset postcondition ------------------------------------------

def test_normalized_return_bounded_in_all_logged_runs():
    run_dirs = []
    acceptance_root = os.path.join(ROOT, "results", "acceptance")
    if os.path.isdir(acceptance_root):
        run_dirs = [os.path.join(acceptance_root, d) for d in os.listdir(acceptance_root)
                    if os.path.isdir(os.path.join(acceptance_root, d))]
    worst = -np.inf
    episodes = 0
    for run_dir in run_dirs:
        path = os.path.join(run_dir, "episodes.csv")
        if not os.path.exists(path):
            continue
        data = np.genfromtxt(path, delimiter=",", names=True,
                             dtype=None, encoding="utf-8")
        if data.size == 0:
            continue
        values = np.atleast_1d(data["normalized_return"])
        worst = max(worst, float(values.max()))
        episodes += len(values)
    if episodes == 0:
        pytest.skip("no logged runs yet: run scripts/run_acceptance_matrix.py")
    ok = worst <= 1.0 + 1e-12
    report("normalized-return-bound", ok,
           f"max normalized return {worst:.6f} over {episodes} episodes (tol <= 1)")
    assert ok


@pytest.mark.parametrize("method", ["A", "B"])
@pytest.mark.parametrize("noise", [0.0, 1.0])
def test_reset_postcondition_monte_carlo(method, noise):
    config = apply_overrides(RunConfig(), {
        "env.reset_method": method, "noise.noise_factor": noise, "env.p_goal": 0.9})
    rng = np.random.default_rng(np.random.SeedSequence([55, int(noise), ord(method)]))
    env = build_env(config, rng)
    n = 10_000
    lo, hi = np.inf, -np.inf
    for _ in range(n):
        env.reset()
        lo = min(lo, env.start_power)
        hi = max(hi, env.start_power)
        assert 0.2 <= env.start_power <= 0.9
    report(f"reset-postcondition-{method}-N{noise:g}", True,
           f"{n} resets, start power in [{lo:.3f}, {hi:.3f}] within [0.2, 0.9]")


# -- 10. determinism -----------------------------------------------------------------------------

def test_metrics_determinism(tmp_path):
    def run(name):
        config = apply_overrides(RunConfig(), {
            "env.p_goal": 0.8, "agent.algo": "sac", "total_steps": 800,
            "eval_interval": 400, "eval_episodes": 5, "seed": 123,
            "out_dir": str(tmp_path / name),
        })
        return train(config).out_dir

    a, b = run("a"), run("b")
    ok = True
    for name in ("episodes.csv", "losses.csv", "evals.csv"):
        with open(os.path.join(a, name), "rb") as fh:
            bytes_a = fh.read()
        with open(os.path.join(b, name), "rb") as fh:
            bytes_b = fh.read()
        ok = ok and bytes_a == bytes_b
    report("determinism", ok, "episodes/losses/evals CSVs byte-identical for config+seed")
    assert ok


# -- secondary: protocol conformance + UI replay ---------------------------------------------------

def test_secondary_protocol_conformance(tmp_path):
    from test_bridge import parse_reply, play_config
    from fibercoupling.bridge.session import Session, summarize_baseline_csv

    path = tmp_path / "baseline.csv"
    session = Session(play_config(), seed=42, baseline_csv=str(path))
    rng = np.random.default_rng(2)
    replies = session.handle_message({"cmd": "hello", "name": "acceptance"})
    ok = [parse_reply(r).type for r in replies] == ["state", "leaderboard"]
    session.handle_message({"cmd": "reset", "mode": "auto"})
    for _ in range(20):
        steps = rng.integers(-2000, 2001, size=4).tolist()
        for raw in session.handle_message({"cmd": "move", "steps": steps}):
            parsed = parse_reply(raw)  # raises if any reply fails schema validation
            ok = ok and parsed.type in ("state", "leaderboard")
        if session.attempt.closed:
            session.handle_message({"cmd": "reset", "mode": "auto"})
    session.handle_message({"cmd": "end_attempt"})

    for _ in range(29):
        session.handle_message({"cmd": "reset", "mode": "perturb"})
        for _ in range(40):
            delta = np.clip(session.env.model.centers - session.env.bank.positions,
                            -6000, 6000).astype(int)
            state = parse_reply(session.handle_message(
                {"cmd": "move", "steps": delta.tolist()})[0])
            if state.type == "state" and state.goal_reached:
                break
        else:
            session.handle_message({"cmd": "end_attempt"})
    summary = summarize_baseline_csv(str(path), mode="perturb")
    ok = ok and summary["attempts"] == 29
    ok = ok and all(np.isfinite(summary[k]) for k in
                    ("mean_start_power", "mean_end_power", "p_goal"))
    report("protocol-conformance", ok,
           f"scripted client verified; 29 perturb attempts -> p[goal]={summary['p_goal']:.2f}, "
           f"mean end power {summary['mean_end_power']:.3f}")
    assert ok


def test_secondary_ui_replay_suite():
    frontend = os.path.join(ROOT, "frontend")
    if shutil.which("npm") is None or not os.path.isdir(os.path.join(frontend, "node_modules")):
        pytest.skip("frontend toolchain not installed: cd frontend && npm install")
    proc = subprocess.run(["npm", "test", "--silent"], cwd=frontend,
                          capture_output=True, text=True, timeout=600)
    ok = proc.returncode == 0
    report("ui-replay", ok, "vitest replay suite over canned message streams")
    if not ok:
        print(proc.stdout[-2000:])
        print(proc.stderr[-2000:])
    assert ok
