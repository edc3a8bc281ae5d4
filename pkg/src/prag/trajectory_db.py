"""Retrieval database of per-task trajectory records.

One record per task id. A record stores the goal embedding, one scene-graph
embedding per step, the (action, observation) history, and whether the task
was completed. Retrieval is an exact linear scan scored as

    score = cosine(query_goal, record_goal)
          + max over steps t of cosine(query_obs, record_obs[t])

with ties broken toward the more recent iteration, then lexicographic task
id. The store is a single line-delimited JSON file with a header line, so a
checkpoint can be inspected with standard shell tools.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import cosine

FORMAT_NAME = "prag-trajectory-db"
FORMAT_VERSION = 1


class DatabaseFormatError(Exception):
    """Raised when a database file cannot be parsed or fails validation.

    ``line_number`` is 1-based and refers to the offending line of the file,
    or None when the problem is not tied to a single line.
    """

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


def _as_vector(values, name: str) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} contains non-finite values")
    return vec


@dataclass
class TaskRecord:
    """One task's latest trajectory, as stored in the database."""

    task_id: str
    iteration: int
    goal_text: str
    goal_embedding: np.ndarray
    obs_embeddings: list[np.ndarray]
    history: list[tuple[str, str]]
    done: bool

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if self.iteration < 1:
            raise ValueError(f"iteration must be >= 1, got {self.iteration}")
        self.goal_embedding = _as_vector(self.goal_embedding, "goal_embedding")
        self.obs_embeddings = [
            _as_vector(v, f"obs_embeddings[{i}]")
            for i, v in enumerate(self.obs_embeddings)
        ]
        self.history = [(str(a), str(o)) for a, o in self.history]
        if len(self.history) < 1:
            raise ValueError("history must contain at least one step")
        if len(self.obs_embeddings) != len(self.history):
            raise ValueError(
                f"obs_embeddings ({len(self.obs_embeddings)}) and history "
                f"({len(self.history)}) must have equal length"
            )
        dim = self.goal_embedding.size
        for i, vec in enumerate(self.obs_embeddings):
            if vec.size != dim:
                raise ValueError(
                    f"obs_embeddings[{i}] has dimension {vec.size}, expected {dim}"
                )

    @property
    def dimension(self) -> int:
        return int(self.goal_embedding.size)

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "iteration": self.iteration,
            "goal_text": self.goal_text,
            "done": self.done,
            "goal_embedding": self.goal_embedding.tolist(),
            "obs_embeddings": [v.tolist() for v in self.obs_embeddings],
            "history": [[a, o] for a, o in self.history],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TaskRecord":
        return cls(
            task_id=data["task_id"],
            iteration=data["iteration"],
            goal_text=data["goal_text"],
            goal_embedding=data["goal_embedding"],
            obs_embeddings=data["obs_embeddings"],
            history=[(a, o) for a, o in data["history"]],
            done=data["done"],
        )


@dataclass(frozen=True)
class RetrievalQuery:
    """Current goal and current scene-graph embedding."""

    goal_embedding: np.ndarray
    obs_embedding: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "goal_embedding", _as_vector(self.goal_embedding, "goal_embedding")
        )
        object.__setattr__(
            self, "obs_embedding", _as_vector(self.obs_embedding, "obs_embedding")
        )


@dataclass(frozen=True)
class RetrievalHit:
    score: float
    record: TaskRecord


def score(query: RetrievalQuery, record: TaskRecord) -> float:
    """Goal similarity plus best per-step observation similarity."""
    goal_term = cosine(query.goal_embedding, record.goal_embedding)
    obs_term = max(cosine(query.obs_embedding, v) for v in record.obs_embeddings)
    return goal_term + obs_term


class TrajectoryDB:
    """In-memory record store with exact top-k retrieval and JSONL persistence."""

    def __init__(self, dimension: int | None = None):
        if dimension is not None and dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self._dimension = dimension
        self._records: dict[str, TaskRecord] = {}
        self.retrieval_count = 0

    def __len__(self) -> int:
        return len(self._records)

    @property
    def dimension(self) -> int | None:
        return self._dimension

    def get(self, task_id: str) -> TaskRecord | None:
        return self._records.get(task_id)

    def records(self) -> list[TaskRecord]:
        """All records, ordered by task id."""
        return [self._records[k] for k in sorted(self._records)]

    def _check_dimension(self, record: TaskRecord) -> None:
        if self._dimension is None:
            self._dimension = record.dimension
        elif record.dimension != self._dimension:
            raise ValueError(
                f"record {record.task_id!r} has dimension {record.dimension}, "
                f"database uses {self._dimension}"
            )

    def update_after_iteration(self, batch: list[TaskRecord]) -> None:
        """Merge one iteration's records, one per task, newest-wins.

        The whole batch must carry the same iteration index. A stored
        completed record is never replaced by a failed one, so the done flag
        of a task is monotone non-decreasing across iterations.
        """
        if not batch:
            return
        iterations = {r.iteration for r in batch}
        if len(iterations) != 1:
            raise ValueError(f"batch mixes iteration indices: {sorted(iterations)}")
        task_ids = [r.task_id for r in batch]
        if len(set(task_ids)) != len(task_ids):
            raise ValueError("batch contains more than one record for a task")
        for record in batch:
            self._check_dimension(record)
            stored = self._records.get(record.task_id)
            if stored is not None and stored.done and not record.done:
                continue
            self._records[record.task_id] = record

    def retrieve_top_k(self, query: RetrievalQuery, k: int) -> list[RetrievalHit]:
        """Exact linear scan returning the k best records.

        Ordering: score descending, then iteration descending, then task id
        ascending. Returns fewer than k hits when the database is smaller.
        """
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        self.retrieval_count += 1
        scored = [
            RetrievalHit(score=score(query, record), record=record)
            for record in self._records.values()
        ]
        scored.sort(key=lambda h: (-h.score, -h.record.iteration, h.record.task_id))
        return scored[:k]

    def save(self, path: str | Path) -> None:
        """Write the database as line-delimited JSON with a header line."""
        path = Path(path)
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "dimension": self._dimension,
        }
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(header) + "\n")
            for record in self.records():
                fh.write(json.dumps(record.to_json_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrajectoryDB":
        path = Path(path)
        with path.open("r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise DatabaseFormatError("empty file, missing header line", line_number=1)

        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise DatabaseFormatError(f"invalid header JSON: {exc}", line_number=1)
        if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
            raise DatabaseFormatError(
                f"not a {FORMAT_NAME} file (format={header.get('format')!r})"
                if isinstance(header, dict)
                else "header is not a JSON object",
                line_number=1,
            )
        if header.get("version") != FORMAT_VERSION:
            raise DatabaseFormatError(
                f"unsupported version {header.get('version')!r}", line_number=1
            )
        dimension = header.get("dimension")
        if dimension is not None and (not isinstance(dimension, int) or dimension < 1):
            raise DatabaseFormatError(
                f"invalid dimension {dimension!r}", line_number=1
            )

        db = cls(dimension=dimension)
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatabaseFormatError(f"invalid JSON: {exc}", line_number=lineno)
            try:
                record = TaskRecord.from_json_dict(data)
            except (KeyError, TypeError, ValueError) as exc:
                raise DatabaseFormatError(f"invalid record: {exc}", line_number=lineno)
            if db._dimension is not None and record.dimension != db._dimension:
                raise DatabaseFormatError(
                    f"record dimension {record.dimension} does not match "
                    f"header dimension {db._dimension}",
                    line_number=lineno,
                )
            if record.task_id in db._records:
                raise DatabaseFormatError(
                    f"duplicate task_id {record.task_id!r}", line_number=lineno
                )
            db._check_dimension(record)
            db._records[record.task_id] = record
        return db
