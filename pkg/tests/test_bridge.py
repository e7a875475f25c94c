"""Bridge tests: protocol conformance over a real WebSocket and session logic."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from pydantic import ValidationError

from fibercoupling.bridge.protocol import ClientCommand, ErrorMessage, \
    LeaderboardMessage, StateMessage
from fibercoupling.bridge.server import create_app
from fibercoupling.bridge.session import Session, summarize_baseline_csv
from fibercoupling.config import RunConfig, apply_overrides


def play_config(**overrides):
    base = {"env.p_goal": 0.9, "seconds_per_step": 1.0}
    base.update(overrides)
    return apply_overrides(RunConfig(), base)


def parse_reply(raw: dict):
    kind = raw.get("type")
    model = {"state": StateMessage, "error": ErrorMessage,
             "leaderboard": LeaderboardMessage}[kind]
    return model.model_validate(raw)


# -- session logic -------------------------------------------------------------

def test_zero_move_leaves_power_unchanged(tmp_path):
    session = Session(play_config(), seed=1, baseline_csv=str(tmp_path / "b.csv"))
    before = session.env.current_power
    replies = session.handle_message({"cmd": "move", "steps": [0, 0, 0, 0]})
    state = parse_reply(replies[0])
    assert state.type == "state"
    assert state.power == pytest.approx(before, abs=1e-12)
    assert state.step_count == 1 and state.elapsed_s == 1.0


def test_auto_reset_lands_in_band(tmp_path):
    session = Session(play_config(), seed=2, baseline_csv=str(tmp_path / "b.csv"))
    for _ in range(5):
        state = parse_reply(session.handle_message({"cmd": "reset", "mode": "auto"})[0])
        assert 0.2 <= state.power <= 0.9
        assert state.step_count == 0 and state.elapsed_s == 0.0


def test_goal_crossing_closes_attempt(tmp_path):
    path = tmp_path / "b.csv"
    session = Session(play_config(), seed=3, baseline_csv=str(path))
    # walk straight to the optimum using the hidden state (test-only shortcut)
    for _ in range(40):
        delta = np.clip(session.env.model.centers - session.env.bank.positions,
                        -6000, 6000).astype(int)
        replies = session.handle_message({"cmd": "move", "steps": delta.tolist()})
        state = parse_reply(replies[0])
        if state.goal_reached:
            break
    assert state.goal_reached
    assert parse_reply(replies[1]).type == "leaderboard"
    # attempt is closed: further moves are rejected
    error = parse_reply(session.handle_message({"cmd": "move", "steps": [1, 0, 0, 0]})[0])
    assert error.type == "error" and error.code == "attempt_over"
    summary = summarize_baseline_csv(str(path))
    assert summary["attempts"] == 1 and summary["p_goal"] == 1.0


def test_perturb_reset_shifts_means(tmp_path):
    session = Session(play_config(), seed=4, baseline_csv=str(tmp_path / "b.csv"))
    base_shifts = session.env.model.shifts.copy()
    session.handle_message({"cmd": "reset", "mode": "perturb"})
    assert not np.array_equal(session.env.model.shifts, base_shifts)
    moved = np.flatnonzero(session.env.model.shifts != base_shifts)
    assert 1 <= len(moved) <= 4


def test_oversize_steps_clamped_with_flag(tmp_path):
    session = Session(play_config(), seed=5, baseline_csv=str(tmp_path / "b.csv"))
    a_max = session.env.config.a_max
    before = session.env.bank.positions.copy()
    state = parse_reply(session.handle_message(
        {"cmd": "move", "steps": [10 * a_max, 0, 0, 0]})[0])
    assert state.clamped
    assert abs(int(session.env.bank.positions[0] - before[0])) <= a_max


def test_malformed_message_keeps_session(tmp_path):
    session = Session(play_config(), seed=6, baseline_csv=str(tmp_path / "b.csv"))
    error = parse_reply(session.handle_message({"cmd": "launch_laser"})[0])
    assert error.type == "error" and error.code == "bad_message"
    state = parse_reply(session.handle_message({"cmd": "move", "steps": [0, 0, 0, 0]})[0])
    assert state.type == "state"


def test_observer_role_is_read_only(tmp_path):
    session = Session(play_config(), seed=7, baseline_csv=str(tmp_path / "b.csv"))
    error = parse_reply(session.handle_message({"cmd": "move", "steps": [0, 0, 0, 0]},
                                               role="observer")[0])
    assert error.code == "read_only"
    state = parse_reply(session.handle_message({"cmd": "hello"}, role="observer")[0])
    assert state.role == "observer"


def test_elapsed_time_uses_simulated_clock(tmp_path):
    config = play_config(seconds_per_step=2.5)
    session = Session(config, seed=8, baseline_csv=str(tmp_path / "b.csv"))
    for _ in range(4):
        state = parse_reply(session.handle_message(
            {"cmd": "move", "steps": [100, 0, 0, 0]})[0])
    assert state.elapsed_s == pytest.approx(4 * 2.5)


def test_command_schema_rejects_bad_steps():
    with pytest.raises(ValidationError):
        ClientCommand.model_validate({"cmd": "move", "steps": [1, 2, 3]})


# -- protocol over a real websocket ---------------------------------------------

def test_scripted_client_protocol_conformance(tmp_path):
    """hello / reset / 20 moves / end_attempt; every reply validates."""
    app = create_app(play_config(), seed=9, baseline_csv=str(tmp_path / "b.csv"),
                     ui_dir=str(tmp_path / "missing"))
    client = TestClient(app)
    rng = np.random.default_rng(0)
    with client.websocket_connect("/ws") as ws:
        def roundtrip(msg, n_replies=1):
            ws.send_text(json.dumps(msg))
            return [parse_reply(json.loads(ws.receive_text())) for _ in range(n_replies)]

        state, board = roundtrip({"cmd": "hello", "name": "scripted"}, 2)
        assert state.type == "state" and board.type == "leaderboard"
        (state,) = roundtrip({"cmd": "reset", "mode": "auto"})
        assert 0.2 <= state.power <= 0.9
        for _ in range(20):
            steps = rng.integers(-1000, 1001, size=4).tolist()
            replies = roundtrip({"cmd": "move", "steps": steps},
                                n_replies=1)
            state = replies[0]
            assert state.type == "state"
            assert len(state.trace) == 11  # m + 1 powers per move
            if state.goal_reached:
                (board,) = roundtrip({"cmd": "reset", "mode": "auto"})
        replies = roundtrip({"cmd": "end_attempt"}, 2)
        assert replies[0].type == "state" and replies[1].type == "leaderboard"

        ws.send_text("this is not json")
        error = parse_reply(json.loads(ws.receive_text()))
        assert error.type == "error" and error.code == "bad_json"


def test_second_client_is_observer(tmp_path):
    app = create_app(play_config(), seed=10, baseline_csv=str(tmp_path / "b.csv"),
                     ui_dir=str(tmp_path / "missing"))
    client = TestClient(app)
    with client.websocket_connect("/ws") as controller:
        with client.websocket_connect("/ws") as observer:
            observer.send_text(json.dumps({"cmd": "hello"}))
            state = parse_reply(json.loads(observer.receive_text()))
            assert state.role == "observer"
            json.loads(observer.receive_text())  # leaderboard
            observer.send_text(json.dumps({"cmd": "move", "steps": [1, 0, 0, 0]}))
            error = parse_reply(json.loads(observer.receive_text()))
            assert error.code == "read_only"
            # controller moves are broadcast to the observer
            controller.send_text(json.dumps({"cmd": "move", "steps": [0, 0, 0, 0]}))
            own = parse_reply(json.loads(controller.receive_text()))
            relayed = parse_reply(json.loads(observer.receive_text()))
            assert own.type == relayed.type == "state"
            assert relayed.power == own.power


def test_perturb_session_yields_table_summary(tmp_path):
    """29 perturb-mode attempts produce a computable baseline summary."""
    path = tmp_path / "b.csv"
    session = Session(play_config(), seed=11, baseline_csv=str(path))
    rng = np.random.default_rng(1)
    for _ in range(29):
        session.handle_message({"cmd": "reset", "mode": "perturb"})
        for _ in range(60):
            delta = np.clip(session.env.model.centers - session.env.bank.positions,
                            -6000, 6000).astype(int)
            jitter = rng.integers(-400, 401, size=4)
            state = parse_reply(session.handle_message(
                {"cmd": "move", "steps": (delta + jitter).tolist()})[0])
            if state.goal_reached:
                break
        else:
            session.handle_message({"cmd": "end_attempt"})
    summary = summarize_baseline_csv(str(path), mode="perturb")
    assert summary["attempts"] == 29
    assert 0.0 <= summary["p_goal"] <= 1.0
    assert 0.0 <= summary["mean_start_power"] <= 1.0
    assert summary["mean_end_power"] > summary["mean_start_power"]
    assert np.isfinite(summary["mean_steps_to_goal"])


def test_info_endpoint(tmp_path):
    app = create_app(play_config(), seed=12, baseline_csv=None,
                     ui_dir=str(tmp_path / "missing"))
    client = TestClient(app)
    info = client.get("/api/info").json()
    assert info["goal_power"] == 0.9
    assert info["a_max"] == 6000
