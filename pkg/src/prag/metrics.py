"""Episode metrics: success rates, path-weighted success, state transitions.

Success weighted by path length (``spl``) scores each episode as
S * P / max(L, P) where S is success (0 or 1), P the shortest possible step
count, and L the steps actually taken. A failed episode contributes 0, a
successful optimal one contributes 1, and detours shrink the credit, so the
mean over episodes never exceeds the plain success rate.
"""

from __future__ import annotations

import warnings
from collections.abc import Iterable, Sequence

from .gridworld.sim import EpisodeResult


def total_sr(results: Iterable[EpisodeResult]) -> float:
    """Fraction of episodes that succeeded. Empty input warns and returns 0."""
    items = list(results)
    if not items:
        warnings.warn("total_sr over zero episodes, returning 0.0", stacklevel=2)
        return 0.0
    return sum(1 for r in items if r.success) / len(items)


def task_sr(results: Iterable[EpisodeResult]) -> float:
    """Fraction of distinct tasks with at least one successful episode."""
    items = list(results)
    if not items:
        warnings.warn("task_sr over zero episodes, returning 0.0", stacklevel=2)
        return 0.0
    tasks: dict[str, bool] = {}
    for r in items:
        tasks[r.task_id] = tasks.get(r.task_id, False) or r.success
    return sum(1 for solved in tasks.values() if solved) / len(tasks)


def spl(results: Iterable[EpisodeResult]) -> float:
    """Mean success weighted by shortest path over actual path."""
    items = list(results)
    if not items:
        warnings.warn("spl over zero episodes, returning 0.0", stacklevel=2)
        return 0.0
    total = 0.0
    for r in items:
        if r.success:
            total += r.shortest_steps / max(r.steps_taken, r.shortest_steps)
    return total / len(items)


class TransitionReport:
    """Task-outcome retention across iterations.

    Built from one done-vector per iteration (task id -> solved). For a base
    iteration i and later iteration j, rate(i, j, from_state, to_state) is
    the fraction of tasks in from_state at i that are in to_state at j, or
    None when no task was in from_state at i.
    """

    def __init__(self, iterations: Sequence[int], done_vectors: Sequence[dict[str, bool]]) -> None:
        if len(iterations) != len(done_vectors):
            raise ValueError("iterations and done_vectors must have equal length")
        if done_vectors:
            keys = set(done_vectors[0])
            for vector in done_vectors[1:]:
                if set(vector) != keys:
                    raise ValueError("all done vectors must cover the same task ids")
        self.iterations = tuple(iterations)
        self.done_vectors = tuple(dict(v) for v in done_vectors)

    def rate(self, base: int, later: int, from_state: bool, to_state: bool) -> float | None:
        """Transition fraction between two iteration indices (0-based)."""
        if not 0 <= base < later < len(self.done_vectors):
            raise IndexError(f"need 0 <= base < later < {len(self.done_vectors)}")
        base_vec = self.done_vectors[base]
        later_vec = self.done_vectors[later]
        pool = [task for task, state in base_vec.items() if state is from_state]
        if not pool:
            return None
        hits = sum(1 for task in pool if later_vec[task] is to_state)
        return hits / len(pool)

    def format_table(self) -> str:
        """Render the retention matrix: one row per (iteration, state) base."""
        n = len(self.done_vectors)
        if n < 2:
            return "(not enough iterations for transitions)"

        def cell(value: float | None) -> str:
            return "-" if value is None else f"{100.0 * value:.1f}%"

        header = ["base state"]
        for j in range(1, n):
            header.extend([f"iter {self.iterations[j]}: True", "False"])
        rows = [header]
        for i in range(n - 1):
            for state in (True, False):
                row = [f"iter {self.iterations[i]} {'True' if state else 'False'}"]
                for j in range(1, n):
                    if j <= i:
                        row.extend(["", ""])
                        continue
                    row.append(cell(self.rate(i, j, state, True)))
                    row.append(cell(self.rate(i, j, state, False)))
                rows.append(row)
        widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
        lines = [
            "  ".join(text.rjust(widths[c]) for c, text in enumerate(row)).rstrip()
            for row in rows
        ]
        return "\n".join(lines)
