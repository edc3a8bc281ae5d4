"""Planner backends: scripted exploration, replay, and the chat client."""

from __future__ import annotations

import json

import numpy as np
import pytest
import requests

from prag.backends import (
    CHAT_API_KEY_ENV,
    SYSTEM_PROMPT,
    BackendError,
    RemoteChatBackend,
    ReplayOracleBackend,
    SeededExplorerBackend,
    StepContext,
    exploration_script,
)
from prag.prompting import HighLevelAction, parse_action
from prag.trajectory_db import RetrievalHit, TaskRecord

from tests.conftest import border_walls, make_ball_world
from prag.gridworld.world import World


def make_kitchen_world() -> World:
    """7x7 room with fixtures of every behaviour plus loose items."""
    world = World(7, 7, walls=border_walls(7, 7), agent_position=(1, 5), agent_heading="N")
    world.place_object("sink_1", "sink", (1, 1))
    world.place_object("table_1", "table", (3, 1))
    world.place_object("cabinet_1", "cabinet", (5, 1))
    world.place_object("mug_1", "mug", (2, 3))
    world.place_object("ball_1", "ball", (3, 3))
    world.place_object("key_1", "key", (4, 3))
    return world


def make_context(observation, hits=(), goal_text="goal", step_index=0, seed=0):
    return StepContext(
        task_id="t1",
        iteration=1,
        goal_text=goal_text,
        step_index=step_index,
        hits=tuple(hits),
        observation=observation,
        seed=seed,
    )


def make_record(goal_text, history, done):
    return TaskRecord(
        task_id="t1",
        iteration=1,
        goal_text=goal_text,
        goal_embedding=np.zeros(4),
        obs_embeddings=tuple(np.zeros(4) for _ in history),
        history=tuple(history),
        done=done,
    )


def drain(backend, task_id, iteration, observation, steps=40):
    """begin_episode then collect replies for a fixed number of steps."""
    backend.begin_episode(task_id, iteration, "goal", observation)
    context = make_context(observation)
    return [backend.complete("prompt", context) for _ in range(steps)]


class TestExplorationScript:
    def test_pure_function_of_inputs(self):
        obs = make_kitchen_world().observe()
        a = exploration_script(7, "wash", 3, obs)
        b = exploration_script(7, "wash", 3, obs)
        assert a == b

    def test_iteration_changes_the_script(self):
        obs = make_kitchen_world().observe()
        scripts = {tuple(exploration_script(0, "wash", i, obs)) for i in range(1, 9)}
        assert len(scripts) > 1

    def test_task_id_changes_the_script(self):
        obs = make_kitchen_world().observe()
        scripts = {
            tuple(exploration_script(0, task_id, 1, obs))
            for task_id in ("a", "b", "c", "d", "e", "f")
        }
        assert len(scripts) > 1

    def test_every_line_parses_under_the_grammar(self):
        obs = make_kitchen_world().observe()
        for iteration in range(1, 6):
            for line in exploration_script(0, "wash", iteration, obs):
                action = parse_action(line, obs)
                assert isinstance(action, HighLevelAction), line

    def test_ends_with_done(self):
        obs = make_kitchen_world().observe()
        for iteration in range(1, 6):
            script = exploration_script(0, "wash", iteration, obs)
            assert script[-1] == "Action: done()"
            assert script.count("Action: done()") == 1

    def test_every_pickup_is_followed_by_a_drop(self):
        obs = make_kitchen_world().observe()
        for seed in range(5):
            script = exploration_script(seed, "wash", 1, obs)
            for i, line in enumerate(script):
                if line.startswith("Action: pickup("):
                    assert script[i + 1].startswith("Action: drop(")

    def test_no_carry_moves_without_items_or_fixtures(self):
        world = World(4, 4, walls=border_walls(4, 4), agent_position=(1, 1), agent_heading="N")
        obs = world.observe()
        for iteration in range(1, 6):
            assert exploration_script(0, "t", iteration, obs) == ["Action: done()"]


class TestSeededExplorer:
    def test_replays_script_then_done_forever(self):
        obs = make_kitchen_world().observe()
        backend = SeededExplorerBackend(seed=0)
        script = exploration_script(0, "t1", 2, obs)
        backend.begin_episode("t1", 2, "goal", obs)
        context = make_context(obs)
        replies = [backend.complete("p", context) for _ in range(len(script) + 3)]
        assert replies[: len(script)] == script
        assert replies[len(script) :] == ["Action: done()"] * 3

    def test_same_seed_same_replies(self):
        obs = make_kitchen_world().observe()
        a = drain(SeededExplorerBackend(seed=5), "t1", 1, obs)
        b = drain(SeededExplorerBackend(seed=5), "t1", 1, obs)
        assert a == b

    def test_begin_episode_resets_the_cursor(self):
        obs = make_kitchen_world().observe()
        backend = SeededExplorerBackend(seed=0)
        first = drain(backend, "t1", 1, obs)
        second = drain(backend, "t1", 1, obs)
        assert first == second

    def test_different_seeds_diverge(self):
        obs = make_kitchen_world().observe()
        replies = {tuple(drain(SeededExplorerBackend(seed=s), "t1", 1, obs)) for s in range(6)}
        assert len(replies) > 1


class TestReplayOracle:
    HISTORY = (
        ("pickup(ball_1)", "ball_1/agent/held_by: True"),
        ("drop(table_1)", "ball_1/table_1/on_top_of: True"),
        ("done()", "ball_1/table_1/on_top_of: True"),
    )

    def test_replays_matching_done_record(self):
        obs = make_ball_world().observe()
        record = make_record("goal", self.HISTORY, done=True)
        hits = (RetrievalHit(2.0, record),)
        backend = ReplayOracleBackend(seed=0)
        backend.begin_episode("t1", 2, "goal", obs)
        replies = [
            backend.complete("p", make_context(obs, hits=hits, step_index=i))
            for i in range(5)
        ]
        assert replies == [
            "Action: pickup(ball_1)",
            "Action: drop(table_1)",
            "Action: done()",
            "Action: done()",
            "Action: done()",
        ]

    def test_only_the_top_hit_is_consulted(self):
        obs = make_ball_world().observe()
        bad = make_record("goal", (("toggle(sink_1)", ""),), done=False)
        good = make_record("goal", self.HISTORY, done=True)
        hits = (RetrievalHit(2.0, bad), RetrievalHit(1.0, good))
        backend = ReplayOracleBackend(seed=0)
        backend.begin_episode("t1", 2, "goal", obs)
        reply = backend.complete("p", make_context(obs, hits=hits))
        explorer_first = drain(SeededExplorerBackend(seed=0), "t1", 2, obs, steps=1)[0]
        assert reply == explorer_first

    @pytest.mark.parametrize(
        "record_goal,record_done",
        [("goal", False), ("another goal", True)],
    )
    def test_unusable_hit_falls_back_to_explorer(self, record_goal, record_done):
        obs = make_kitchen_world().observe()
        record = make_record(record_goal, self.HISTORY, done=record_done)
        hits = (RetrievalHit(2.0, record),)
        backend = ReplayOracleBackend(seed=3)
        backend.begin_episode("t1", 1, "goal", obs)
        replies = [
            backend.complete("p", make_context(obs, hits=hits, step_index=i))
            for i in range(10)
        ]
        assert replies == drain(SeededExplorerBackend(seed=3), "t1", 1, obs, steps=10)

    def test_no_hits_falls_back_to_explorer(self):
        obs = make_kitchen_world().observe()
        backend = ReplayOracleBackend(seed=3)
        replies = drain(backend, "t1", 1, obs, steps=10)
        assert replies == drain(SeededExplorerBackend(seed=3), "t1", 1, obs, steps=10)

    def test_cursor_resets_between_episodes(self):
        obs = make_ball_world().observe()
        record = make_record("goal", self.HISTORY, done=True)
        hits = (RetrievalHit(2.0, record),)
        backend = ReplayOracleBackend(seed=0)
        for _ in range(2):
            backend.begin_episode("t1", 2, "goal", obs)
            assert backend.complete("p", make_context(obs, hits=hits)) == (
                "Action: pickup(ball_1)"
            )


class FakeResponse:
    def __init__(self, body=None, status=200, invalid_json=False):
        self.body = body
        self.status = status
        self.invalid_json = invalid_json

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"status {self.status}")

    def json(self):
        if self.invalid_json:
            raise ValueError("not json")
        return self.body


GOOD_BODY = {"choices": [{"message": {"content": "Action: done()"}}]}


@pytest.fixture
def capture_post(monkeypatch):
    calls = []

    def fake_post(url, json=None, headers=None, timeout=None):
        calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        return FakeResponse(GOOD_BODY)

    monkeypatch.setattr(requests, "post", fake_post)
    monkeypatch.delenv(CHAT_API_KEY_ENV, raising=False)
    return calls


class TestRemoteChatBackend:
    def make_backend(self, **kwargs):
        defaults = dict(base_url="http://chat.test/v1", model="planner-small")
        defaults.update(kwargs)
        return RemoteChatBackend(**defaults)

    def test_requires_base_url_and_model(self):
        with pytest.raises(ValueError, match="base_url"):
            RemoteChatBackend("", "m")
        with pytest.raises(ValueError, match="model"):
            RemoteChatBackend("http://chat.test", "")

    def test_posts_chat_completions_payload(self, capture_post):
        obs = make_ball_world().observe()
        reply = self.make_backend().complete("PROMPT", make_context(obs))
        assert reply == "Action: done()"
        (call,) = capture_post
        assert call["url"] == "http://chat.test/v1/chat/completions"
        assert call["timeout"] == 30.0
        assert call["json"] == {
            "model": "planner-small",
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": "PROMPT"},
            ],
            "temperature": 0.0,
        }

    def test_trailing_slash_is_normalised(self, capture_post):
        obs = make_ball_world().observe()
        self.make_backend(base_url="http://chat.test/v1/").complete("p", make_context(obs))
        assert capture_post[0]["url"] == "http://chat.test/v1/chat/completions"

    def test_no_authorization_header_without_key(self, capture_post):
        obs = make_ball_world().observe()
        self.make_backend().complete("p", make_context(obs))
        assert "Authorization" not in capture_post[0]["headers"]

    def test_bearer_token_from_environment(self, capture_post, monkeypatch):
        monkeypatch.setenv(CHAT_API_KEY_ENV, "sekret")
        obs = make_ball_world().observe()
        self.make_backend().complete("p", make_context(obs))
        assert capture_post[0]["headers"]["Authorization"] == "Bearer sekret"

    def test_custom_key_env_name(self, capture_post, monkeypatch):
        monkeypatch.setenv("OTHER_KEY", "tok")
        obs = make_ball_world().observe()
        self.make_backend(api_key_env="OTHER_KEY").complete("p", make_context(obs))
        assert capture_post[0]["headers"]["Authorization"] == "Bearer tok"

    def test_key_is_read_at_call_time(self, capture_post, monkeypatch):
        obs = make_ball_world().observe()
        backend = self.make_backend()
        backend.complete("p", make_context(obs))
        monkeypatch.setenv(CHAT_API_KEY_ENV, "late")
        backend.complete("p", make_context(obs))
        assert "Authorization" not in capture_post[0]["headers"]
        assert capture_post[1]["headers"]["Authorization"] == "Bearer late"

    def test_custom_temperature_and_timeout(self, capture_post):
        obs = make_ball_world().observe()
        self.make_backend(temperature=0.7, timeout=5.0).complete("p", make_context(obs))
        assert capture_post[0]["json"]["temperature"] == 0.7
        assert capture_post[0]["timeout"] == 5.0

    def test_log_sees_request_and_response_but_never_the_key(self, capture_post, monkeypatch):
        monkeypatch.setenv(CHAT_API_KEY_ENV, "sekret")
        events = []
        backend = self.make_backend(log=lambda kind, payload: events.append((kind, payload)))
        obs = make_ball_world().observe()
        backend.complete("p", make_context(obs))
        assert [kind for kind, _ in events] == ["request", "response"]
        assert events[1][1]["payload"] == GOOD_BODY
        assert "sekret" not in json.dumps(events)

    def test_transport_error_becomes_backend_error(self, monkeypatch):
        def boom(*args, **kwargs):
            raise requests.ConnectionError("refused")

        monkeypatch.setattr(requests, "post", boom)
        obs = make_ball_world().observe()
        with pytest.raises(BackendError, match="chat request failed"):
            self.make_backend().complete("p", make_context(obs))

    def test_http_error_status_becomes_backend_error(self, monkeypatch):
        monkeypatch.setattr(requests, "post", lambda *a, **k: FakeResponse(status=500))
        obs = make_ball_world().observe()
        with pytest.raises(BackendError, match="chat request failed"):
            self.make_backend().complete("p", make_context(obs))

    def test_non_json_body_becomes_backend_error(self, monkeypatch):
        monkeypatch.setattr(
            requests, "post", lambda *a, **k: FakeResponse(invalid_json=True)
        )
        obs = make_ball_world().observe()
        with pytest.raises(BackendError, match="not JSON"):
            self.make_backend().complete("p", make_context(obs))

    @pytest.mark.parametrize(
        "body",
        [
            {},
            {"choices": []},
            {"choices": [{"message": {}}]},
            {"choices": [{}]},
        ],
    )
    def test_missing_content_becomes_backend_error(self, monkeypatch, body):
        monkeypatch.setattr(requests, "post", lambda *a, **k: FakeResponse(body))
        obs = make_ball_world().observe()
        with pytest.raises(BackendError, match="missing message content"):
            self.make_backend().complete("p", make_context(obs))

    def test_non_string_content_becomes_backend_error(self, monkeypatch):
        body = {"choices": [{"message": {"content": ["Action: done()"]}}]}
        monkeypatch.setattr(requests, "post", lambda *a, **k: FakeResponse(body))
        obs = make_ball_world().observe()
        with pytest.raises(BackendError, match="not a string"):
            self.make_backend().complete("p", make_context(obs))
