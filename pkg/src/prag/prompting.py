"""Prompt assembly and the high-level action grammar.

The prompt shown to a planner backend has four fixed sections, always in the
same order: GOAL, OBSERVATION (current scene graph), ACTIONS (the grammar),
EXPERIENCES (retrieved trajectories, best first), then one output-format
instruction. Rendering is deterministic down to the byte so prompts can be
golden-file tested and replayed.

The reply grammar is a single line ``Action: <verb>(<argument>)``. Parsing
never raises on bad model output; it returns a ParseFailure value with one of
three reasons (bad-format, unknown-verb, invalid-argument) that the planning
loop feeds back into a retry prompt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .gridworld.world import Cell, Observation

HIGH_LEVEL_VERBS = ("navigate", "pickup", "drop", "toggle", "open", "close", "done")

OUTPUT_INSTRUCTION = "Respond with exactly one line: Action: <verb>(<argument>)"

_ACTION_LINE_RE = re.compile(r"^\s*Action:\s*([A-Za-z_]+)\s*\(\s*(.*?)\s*\)\s*$")
_CELL_ARG_RE = re.compile(r"^(\d+)\s*,\s*(\d+)$")

_GRAMMAR_LINES = (
    "navigate(<target>): walk next to the target and face it",
    "pickup(<target>): go to the target and take the top item there (hands must be empty)",
    "drop(<target>): go to the target and put the held item there",
    "toggle(<target>): go to the target and switch it on or off",
    "open(<target>): go to the target and open it",
    "close(<target>): go to the target and close it",
    "done(): declare the task finished",
    '<target> is a visible object label, or a cell given as "x,y".',
)


@dataclass(frozen=True)
class HighLevelAction:
    """One planner decision: a verb plus an object label or cell argument."""

    verb: str
    argument: str | Cell | None = None

    def __post_init__(self) -> None:
        if self.verb not in HIGH_LEVEL_VERBS:
            raise ValueError(f"unknown high-level verb: {self.verb!r}")
        if self.verb == "done":
            if self.argument is not None:
                raise ValueError("done takes no argument")
        elif self.argument is None:
            raise ValueError(f"{self.verb} requires an argument")


@dataclass(frozen=True)
class ParseFailure:
    """Why a reply could not be turned into an action. Returned, not raised."""

    reason: str  # bad-format | unknown-verb | invalid-argument
    detail: str


def render_action(action: HighLevelAction) -> str:
    if action.argument is None:
        return f"{action.verb}()"
    if isinstance(action.argument, tuple):
        x, y = action.argument
        return f"{action.verb}({x},{y})"
    return f"{action.verb}({action.argument})"


def action_line(action: HighLevelAction) -> str:
    return f"Action: {render_action(action)}"


def parse_action(text: str, observation: Observation) -> HighLevelAction | ParseFailure:
    """Parse the first well-formed action line out of a backend reply.

    The argument must resolve against the observation: either a visible
    object label or an in-bounds cell.
    """
    match = None
    for line in text.splitlines():
        match = _ACTION_LINE_RE.match(line)
        if match:
            break
    if not match:
        return ParseFailure("bad-format", "no 'Action: <verb>(<argument>)' line found")

    verb, arg = match.group(1), match.group(2)
    if verb not in HIGH_LEVEL_VERBS:
        return ParseFailure("unknown-verb", f"{verb!r} is not an available action")

    if verb == "done":
        if arg:
            return ParseFailure("invalid-argument", "done takes no argument")
        return HighLevelAction("done")

    if not arg:
        return ParseFailure("invalid-argument", f"{verb} requires a target")
    cell_match = _CELL_ARG_RE.match(arg)
    if cell_match:
        cell = (int(cell_match.group(1)), int(cell_match.group(2)))
        if not (0 <= cell[0] < observation.width and 0 <= cell[1] < observation.height):
            return ParseFailure("invalid-argument", f"cell {arg!r} is outside the grid")
        return HighLevelAction(verb, cell)
    if arg not in observation.objects:
        return ParseFailure("invalid-argument", f"no visible object named {arg!r}")
    return HighLevelAction(verb, arg)


def action_space_text(observation: Observation) -> str:
    """The ACTIONS section: fixed grammar plus the current object vocabulary."""
    labels = ", ".join(sorted(observation.objects)) or "(none)"
    return "\n".join(_GRAMMAR_LINES + (f"Visible objects: {labels}",))


@dataclass(frozen=True)
class ExperienceEntry:
    """One retrieved trajectory, ready for prompt rendering."""

    goal_text: str
    history: tuple[tuple[str, str], ...]
    done: bool
    total_steps: int  # length before truncation


@dataclass(frozen=True)
class PromptBundle:
    """Everything the planner sees for one step, in render order."""

    goal: str
    scene_text: str
    action_space_text: str
    experiences: tuple[ExperienceEntry, ...] = ()


def experiences_from_hits(hits, history_limit: int = 20) -> tuple[ExperienceEntry, ...]:
    """Convert retrieval hits (already score-descending) into prompt entries.

    Histories are truncated to the last ``history_limit`` steps.
    """
    if history_limit < 1:
        raise ValueError(f"history_limit must be >= 1, got {history_limit}")
    entries = []
    for hit in hits:
        record = hit.record
        entries.append(
            ExperienceEntry(
                goal_text=record.goal_text,
                history=tuple(record.history[-history_limit:]),
                done=record.done,
                total_steps=len(record.history),
            )
        )
    return tuple(entries)


def _render_experience(index: int, entry: ExperienceEntry) -> str:
    lines = [f"[{index}] done={entry.done}", f"goal: {entry.goal_text}"]
    shown = len(entry.history)
    if shown < entry.total_steps:
        lines.append(f"steps (last {shown} of {entry.total_steps}):")
    else:
        lines.append("steps:")
    offset = entry.total_steps - shown
    for i, (action_text, obs_text) in enumerate(entry.history, start=offset + 1):
        flat_obs = obs_text.replace("\n", "; ") if obs_text else "(nothing visible)"
        lines.append(f"{i}. {action_text} => {flat_obs}")
    return "\n".join(lines)


def build_prompt(bundle: PromptBundle) -> str:
    """Render the full prompt. Byte-identical for equal bundles."""
    sections = [
        "GOAL",
        bundle.goal,
        "",
        "OBSERVATION",
        bundle.scene_text if bundle.scene_text else "(nothing visible)",
        "",
        "ACTIONS",
        bundle.action_space_text,
        "",
        "EXPERIENCES",
    ]
    if bundle.experiences:
        rendered = [
            _render_experience(i, entry)
            for i, entry in enumerate(bundle.experiences, start=1)
        ]
        sections.append("\n\n".join(rendered))
    else:
        sections.append("(none)")
    sections.extend(["", OUTPUT_INSTRUCTION])
    return "\n".join(sections)
