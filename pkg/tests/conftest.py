"""Shared test helpers: scripted backends and small worlds."""

from __future__ import annotations

import pytest

from prag.backends import PlannerBackend
from prag.gridworld.tasks import PlacedAt, Task
from prag.gridworld.world import World


class ScriptedBackend(PlannerBackend):
    """Returns queued replies verbatim and counts every call."""

    name = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0
        self.prompts = []

    def begin_episode(self, task_id, iteration, goal_text, observation):
        pass

    def complete(self, prompt, context):
        self.prompts.append(prompt)
        index = self.calls
        self.calls += 1
        if index < len(self.replies):
            return self.replies[index]
        return "Action: done()"


def border_walls(width: int, height: int) -> frozenset:
    cells = set()
    for x in range(width):
        cells.add((x, 0))
        cells.add((x, height - 1))
    for y in range(height):
        cells.add((0, y))
        cells.add((width - 1, y))
    return frozenset(cells)


def make_ball_world() -> World:
    """5x5 bordered room: table at (3,1), ball at (1,1), agent at (1,3)."""
    world = World(5, 5, walls=border_walls(5, 5), agent_position=(1, 3), agent_heading="N")
    world.place_object("table_1", "table", (3, 1))
    world.place_object("ball_1", "ball", (1, 1))
    return world


def make_ball_task(task_id: str = "ball_task", max_steps: int = 40) -> Task:
    return Task(
        id=task_id,
        goal="Put the ball on the table",
        world=make_ball_world(),
        predicate=PlacedAt("ball_1", "table_1"),
        max_steps=max_steps,
    )


@pytest.fixture
def ball_task() -> Task:
    return make_ball_task()
