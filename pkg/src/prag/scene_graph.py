"""Scene graphs: typed object-relation snapshots of a world observation.

A scene graph is the text-friendly form of what the agent can see: a list of
object instance labels (landmarks first) plus the relation triples that
currently hold. Only true relations are kept, and the rendered form is one
``subject/object/relation: True`` line per triple, sorted, so equal world
states always produce byte-identical text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

AGENT_LABEL = "agent"

# Closed relation vocabulary. The first three are spatial and queried over
# ordered pairs of distinct objects; held_by ties an object to the agent;
# toggled_on and is_open are object states recorded as self-relations.
SPATIAL_RELATIONS = ("on_top_of", "inside_of", "next_to")
STATE_RELATIONS = ("toggled_on", "is_open")
RELATION_NAMES = frozenset(SPATIAL_RELATIONS) | frozenset(STATE_RELATIONS) | {"held_by"}

_LABEL_FORBIDDEN = ("/", ":", "\n")


class SceneTextError(ValueError):
    """Raised when canonical scene-graph text cannot be parsed."""


def _check_label(label: str) -> None:
    if not label or any(ch in label for ch in _LABEL_FORBIDDEN):
        raise ValueError(f"illegal object label: {label!r}")


@dataclass(frozen=True)
class SceneGraph:
    """Immutable set of nodes and true relation triples.

    ``relations`` holds (subject, relation, object) triples. Every label that
    appears in a triple must also appear in ``nodes``.
    """

    nodes: tuple[str, ...]
    relations: tuple[tuple[str, str, str], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(
            self, "relations", tuple(tuple(t) for t in self.relations)
        )
        seen_nodes = set()
        for label in self.nodes:
            _check_label(label)
            if label in seen_nodes:
                raise ValueError(f"duplicate node label: {label!r}")
            seen_nodes.add(label)
        seen_triples = set()
        for triple in self.relations:
            if len(triple) != 3:
                raise ValueError(f"relation triple must have 3 elements: {triple!r}")
            subject, relation, obj = triple
            if relation not in RELATION_NAMES:
                raise ValueError(f"unknown relation name: {relation!r}")
            for endpoint in (subject, obj):
                if endpoint not in seen_nodes:
                    raise ValueError(
                        f"relation endpoint {endpoint!r} missing from nodes"
                    )
            if triple in seen_triples:
                raise ValueError(f"duplicate relation triple: {triple!r}")
            seen_triples.add(triple)


def order_landmark_first(
    labels: Iterable[str], is_landmark: Callable[[str], bool]
) -> list[str]:
    """Stable partition of ``labels`` with landmarks ahead of everything else."""
    labels = list(labels)
    landmarks = [l for l in labels if is_landmark(l)]
    others = [l for l in labels if not is_landmark(l)]
    return landmarks + others


def extract(observation) -> SceneGraph:
    """Build a SceneGraph from a simulator observation.

    ``observation`` must expose ``objects`` (an ordered mapping of label to a
    view with ``landmark`` and ``held`` attributes) and a
    ``relation(subject, obj, name)`` predicate. Every true spatial relation
    over distinct object pairs is recorded, object states become
    self-relations, and held objects relate to the agent pseudo-node.
    """
    labels = sorted(observation.objects)
    nodes = order_landmark_first(labels, lambda l: observation.objects[l].landmark)

    relations: list[tuple[str, str, str]] = []
    for subject in labels:
        for obj in labels:
            if subject == obj:
                continue
            for name in SPATIAL_RELATIONS:
                if observation.relation(subject, obj, name):
                    relations.append((subject, name, obj))
    for label in labels:
        for name in STATE_RELATIONS:
            if observation.relation(label, label, name):
                relations.append((label, name, label))
    agent_needed = False
    for label in labels:
        if observation.relation(label, AGENT_LABEL, "held_by"):
            relations.append((label, "held_by", AGENT_LABEL))
            agent_needed = True
    if agent_needed:
        nodes = nodes + [AGENT_LABEL]
    return SceneGraph(nodes=tuple(nodes), relations=tuple(relations))


def render_text(graph: SceneGraph) -> str:
    """Canonical text form: sorted ``subject/object/relation: True`` lines."""
    lines = [
        f"{subject}/{obj}/{relation}: True"
        for subject, relation, obj in graph.relations
    ]
    return "\n".join(sorted(lines))


def parse_text(text: str) -> SceneGraph:
    """Parse canonical scene-graph text back into a SceneGraph.

    The inverse of :func:`render_text` up to node metadata: nodes are
    recovered as the sorted set of labels mentioned by the triples.
    """
    relations: list[tuple[str, str, str]] = []
    labels: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if not line.endswith(": True"):
            raise SceneTextError(f"line {lineno}: expected ': True' suffix: {line!r}")
        body = line[: -len(": True")]
        parts = body.split("/")
        if len(parts) != 3:
            raise SceneTextError(f"line {lineno}: expected subject/object/relation: {line!r}")
        subject, obj, relation = parts
        if relation not in RELATION_NAMES:
            raise SceneTextError(f"line {lineno}: unknown relation name: {relation!r}")
        labels.add(subject)
        labels.add(obj)
        relations.append((subject, relation, obj))
    return SceneGraph(nodes=tuple(sorted(labels)), relations=tuple(relations))
