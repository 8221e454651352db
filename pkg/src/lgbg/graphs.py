"""Per-day heterogeneous context graphs and multi-day labeled samples.

Nodes are distinct (stream, concept) pairs present in a day window, holding
the concept's total duration as attribute. Same-stream ("homogeneous") edges
are directed transitions between consecutive distinct concepts, weighted by
transition count. Cross-stream ("heterogeneous") edges link concepts whose
occurrences overlap in time, weighted by the number of overlapping pairs and
stored as two directed edges of equal weight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .streams import STREAMS, ConceptEvent, DayWindow, Vocabulary, slice_day

HOMOGENEOUS = "homogeneous"
HETEROGENEOUS = "heterogeneous"

PAM_CLASSES = 4


@dataclass(frozen=True)
class GraphNode:
    stream: str
    concept: str
    attribute: float  # hours of the concept within the day, > 0
    embedding_index: int


@dataclass(frozen=True)
class GraphEdge:
    src: int
    dst: int
    kind: str  # HOMOGENEOUS or HETEROGENEOUS
    weight: int


@dataclass
class LocalContextGraph:
    day_index: int
    nodes: list[GraphNode] = field(default_factory=list)
    edges: list[GraphEdge] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.nodes

    def node_index(self) -> dict[tuple[str, str], int]:
        return {(n.stream, n.concept): i for i, n in enumerate(self.nodes)}

    def to_dict(self) -> dict:
        return {
            "day_index": self.day_index,
            "nodes": [{"stream": n.stream, "concept": n.concept,
                       "attribute": n.attribute} for n in self.nodes],
            "edges": [{"src": e.src, "dst": e.dst, "kind": e.kind,
                       "weight": e.weight} for e in self.edges],
        }

    def dump_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ": "),
                          indent=1)


@dataclass
class GlobalSample:
    """Ordered span of local graphs labeled by the anchor (last) day."""

    graphs: list[LocalContextGraph]
    label: int
    subject: str
    anchor_day: int

    def __post_init__(self):
        if not self.graphs:
            raise ValidationError("a sample needs at least one graph")
        if not 0 <= self.label < PAM_CLASSES:
            raise ValidationError(f"label {self.label} outside 0..{PAM_CLASSES - 1}")


def _ordered(events: list[ConceptEvent]) -> list[ConceptEvent]:
    return sorted(events, key=lambda e: (e.start, e.end, e.concept))


def homogeneous_edges(events: list[ConceptEvent]) -> dict[tuple[str, str], int]:
    """Directed transition counts between consecutive distinct concepts."""
    counts: dict[tuple[str, str], int] = {}
    ordered = _ordered(events)
    for prev, nxt in zip(ordered, ordered[1:]):
        if prev.concept == nxt.concept:
            continue
        key = (prev.concept, nxt.concept)
        counts[key] = counts.get(key, 0) + 1
    return counts


def heterogeneous_edges(events_a: list[ConceptEvent],
                        events_b: list[ConceptEvent]) -> dict[tuple[str, str], int]:
    """Undirected co-occurrence counts between two different streams.

    A pair co-occurs when the intervals strictly overlap
    (max(starts) < min(ends)); touching intervals do not count. Counted by a
    boundary sweep that keeps the opposite stream's active set, so the cost is
    near-linear in events plus overlaps.
    """
    if events_a and events_b and events_a[0].stream == events_b[0].stream:
        raise ValidationError("heterogeneous_edges needs two different streams")
    # (time, is_start, side, event); ends sort before starts at equal times so
    # touching intervals never look active together.
    boundaries = []
    for side, events in ((0, events_a), (1, events_b)):
        for e in _ordered(events):
            boundaries.append((e.start, 1, side, e))
            boundaries.append((e.end, 0, side, e))
    boundaries.sort(key=lambda b: (b[0], b[1], b[2], b[3].concept))
    active: tuple[list[ConceptEvent], list[ConceptEvent]] = ([], [])
    counts: dict[tuple[str, str], int] = {}
    for _, is_start, side, event in boundaries:
        if is_start:
            for other in active[1 - side]:
                key = (event.concept, other.concept) if side == 0 \
                    else (other.concept, event.concept)
                counts[key] = counts.get(key, 0) + 1
            active[side].append(event)
        else:
            active[side].remove(event)
    return counts


def build_local_graph(window: DayWindow, vocab: Vocabulary, table) -> LocalContextGraph:
    """Assemble one day's graph; nodes in (stream, concept) lexicographic order."""
    durations: dict[tuple[str, str], float] = {}
    for stream in STREAMS:
        for e in window.events(stream):
            key = (stream, e.concept)
            durations[key] = durations.get(key, 0.0) + e.seconds / 3600.0

    keys = sorted(durations)
    nodes = [GraphNode(stream=s, concept=c, attribute=durations[(s, c)],
                       embedding_index=table.index(c)) for s, c in keys]
    index = {k: i for i, k in enumerate(keys)}

    edges: list[GraphEdge] = []
    for stream in STREAMS:
        for (a, b), w in homogeneous_edges(window.events(stream)).items():
            edges.append(GraphEdge(src=index[(stream, a)], dst=index[(stream, b)],
                                   kind=HOMOGENEOUS, weight=w))
    for i, s_a in enumerate(STREAMS):
        for s_b in STREAMS[i + 1:]:
            pair_counts = heterogeneous_edges(window.events(s_a), window.events(s_b))
            for (a, b), w in pair_counts.items():
                ia, ib = index[(s_a, a)], index[(s_b, b)]
                edges.append(GraphEdge(src=ia, dst=ib, kind=HETEROGENEOUS, weight=w))
                edges.append(GraphEdge(src=ib, dst=ia, kind=HETEROGENEOUS, weight=w))
    edges.sort(key=lambda e: (e.src, e.dst))
    return LocalContextGraph(day_index=window.day_index, nodes=nodes, edges=edges)


def build_samples(streams: dict[str, list[ConceptEvent]], labels: dict[int, int],
                  span: int, vocab: Vocabulary, table, subject: str = "",
                  day_origin: int = 0) -> list[GlobalSample]:
    """One sample per labeled day that has a full span of prior days."""
    if span < 1:
        raise ValidationError(f"span {span} must be >= 1")
    graph_cache: dict[int, LocalContextGraph] = {}

    def graph_for(day: int) -> LocalContextGraph:
        if day not in graph_cache:
            window = slice_day(streams, day, day_origin)
            graph_cache[day] = build_local_graph(window, vocab, table)
        return graph_cache[day]

    samples = []
    for day in sorted(labels):
        if day < span - 1:
            continue
        graphs = [graph_for(d) for d in range(day - span + 1, day + 1)]
        samples.append(GlobalSample(graphs=graphs, label=labels[day],
                                    subject=subject, anchor_day=day))
    return samples


def quantize_pam(score: int) -> int:
    """Map a 1-16 affect score onto its 4-quadrant class (1-4 -> 0, ... 13-16 -> 3)."""
    if not isinstance(score, int) or not 1 <= score <= 16:
        raise ValidationError(f"PAM score {score!r} outside 1..16")
    return (score - 1) // 4


def dump_graph(graph: LocalContextGraph, path) -> None:
    Path(path).write_text(graph.dump_json() + "\n", encoding="utf-8")
