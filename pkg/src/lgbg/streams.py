"""Concept event streams: vocabularies, log ingestion, day windows, features.

Event logs are UTF-8 JSON lines. The first line is a header `{"format": 1}`;
every following line is one record
`{"stream": "activity|audio|location", "concept": "<name>", "start": <int s>, "end": <int s>}`.
The vocabulary file is a single JSON object
`{"format": 1, "activity": [...], "audio": [...], "location": [...]}`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError, VocabularyError

ACTIVITY = "activity"
AUDIO = "audio"
LOCATION = "location"
STREAMS = (ACTIVITY, AUDIO, LOCATION)

ACTIVITY_CONCEPTS = ("stationary", "walking", "running", "unknown")
AUDIO_CONCEPTS = ("silence", "voice", "noise", "other")

# Reserved class for locations missing from the vocabulary file.
OTHER_LOCATION = "other-location"

MAX_LOCATIONS = 100
SECONDS_PER_DAY = 86400
FORMAT_VERSION = 1

# activity[4] + audio[4] + location[100]
FEATURE_DIM = 4 + 4 + MAX_LOCATIONS


@dataclass(frozen=True)
class Vocabulary:
    """Fixed concept vocabularies per stream; location list comes from a file."""

    locations: tuple[str, ...]

    def __post_init__(self):
        if OTHER_LOCATION not in self.locations:
            object.__setattr__(self, "locations", self.locations + (OTHER_LOCATION,))
        if len(self.locations) > MAX_LOCATIONS:
            raise ValidationError(
                f"{len(self.locations)} location classes exceed the {MAX_LOCATIONS} limit")
        if len(set(self.locations)) != len(self.locations):
            raise ValidationError("duplicate location class names")

    def concepts(self, stream: str) -> tuple[str, ...]:
        if stream == ACTIVITY:
            return ACTIVITY_CONCEPTS
        if stream == AUDIO:
            return AUDIO_CONCEPTS
        if stream == LOCATION:
            return self.locations
        raise VocabularyError(f"unknown stream type {stream!r}")

    def contains(self, stream: str, concept: str) -> bool:
        return concept in self.concepts(stream)

    def all_concepts(self) -> list[tuple[str, str]]:
        """(stream, concept) pairs in feature order: activity, audio, location."""
        out = []
        for stream in STREAMS:
            out.extend((stream, c) for c in self.concepts(stream))
        return out

    def feature_index(self, stream: str, concept: str) -> int:
        """Slot of (stream, concept) in the fixed 108-entry feature layout."""
        vocab = self.concepts(stream)
        if concept not in vocab:
            raise VocabularyError(f"{concept!r} not in {stream} vocabulary")
        i = vocab.index(concept)
        if stream == ACTIVITY:
            return i
        if stream == AUDIO:
            return 4 + i
        return 8 + i

    def digest(self) -> str:
        payload = json.dumps({s: list(self.concepts(s)) for s in STREAMS}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def save(self, path) -> None:
        doc = {"format": FORMAT_VERSION,
               ACTIVITY: list(ACTIVITY_CONCEPTS),
               AUDIO: list(AUDIO_CONCEPTS),
               LOCATION: list(self.locations)}
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"vocabulary file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ParseError(f"vocabulary file is not valid JSON: {e}") from e
        if doc.get("format") != FORMAT_VERSION:
            raise ParseError(f"unsupported vocabulary format {doc.get('format')!r}")
        if tuple(doc.get(ACTIVITY, ())) != ACTIVITY_CONCEPTS:
            raise VocabularyError("activity vocabulary must be exactly "
                                  + ", ".join(ACTIVITY_CONCEPTS))
        if tuple(doc.get(AUDIO, ())) != AUDIO_CONCEPTS:
            raise VocabularyError("audio vocabulary must be exactly "
                                  + ", ".join(AUDIO_CONCEPTS))
        return cls(locations=tuple(doc.get(LOCATION, ())))


@dataclass(frozen=True, order=True)
class ConceptEvent:
    """One detected concept occurrence with [start, end) second timestamps."""

    start: int
    end: int
    stream: str
    concept: str

    def __post_init__(self):
        if self.start >= self.end:
            raise ValidationError(
                f"event start {self.start} not before end {self.end}")

    @property
    def seconds(self) -> int:
        return self.end - self.start


@dataclass
class ParsedLog:
    """Per-stream event lists plus ingestion counters."""

    streams: dict[str, list[ConceptEvent]]
    remapped_locations: int = 0
    deduplicated: int = 0

    def total_events(self) -> int:
        return sum(len(v) for v in self.streams.values())


def _sort_events(events: list[ConceptEvent]) -> list[ConceptEvent]:
    return sorted(events, key=lambda e: (e.start, e.end, e.concept))


def parse_event_log(path, vocab: Vocabulary) -> ParsedLog:
    """Read, validate, deduplicate and sort a JSON-lines event log.

    Unknown location names map to the reserved `other-location` class (the
    remap count is reported); unknown activity/audio names are vocabulary
    errors because those vocabularies are closed.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"event log not found: {path}")
    streams: dict[str, list[ConceptEvent]] = {s: [] for s in STREAMS}
    seen: set[tuple] = set()
    remapped = 0
    deduped = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from e
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", line=lineno)
            if "format" in rec and lineno == 1:
                if rec["format"] != FORMAT_VERSION:
                    raise ParseError(f"unsupported log format {rec['format']!r}", line=lineno)
                continue
            missing = {"stream", "concept", "start", "end"} - rec.keys()
            if missing:
                raise ParseError(f"missing fields {sorted(missing)}", line=lineno)
            stream = rec["stream"]
            if stream not in STREAMS:
                raise VocabularyError(f"line {lineno}: unknown stream type {stream!r}")
            concept = rec["concept"]
            if not isinstance(rec["start"], int) or not isinstance(rec["end"], int):
                raise ParseError("start/end must be integer seconds", line=lineno)
            if rec["start"] >= rec["end"]:
                raise ValidationError(
                    f"line {lineno}: start {rec['start']} not before end {rec['end']}")
            if not vocab.contains(stream, concept):
                if stream == LOCATION:
                    concept = OTHER_LOCATION
                    remapped += 1
                else:
                    raise VocabularyError(
                        f"line {lineno}: {concept!r} not in {stream} vocabulary")
            key = (stream, concept, rec["start"], rec["end"])
            if key in seen:
                deduped += 1
                continue
            seen.add(key)
            streams[stream].append(
                ConceptEvent(start=rec["start"], end=rec["end"],
                             stream=stream, concept=concept))
    for s in STREAMS:
        streams[s] = _sort_events(streams[s])
    return ParsedLog(streams=streams, remapped_locations=remapped, deduplicated=deduped)


def write_event_log(path, streams: dict[str, list[ConceptEvent]]) -> None:
    """Serialize per-stream events in canonical order; inverse of parsing."""
    lines = [json.dumps({"format": FORMAT_VERSION})]
    for s in STREAMS:
        for e in _sort_events(streams.get(s, [])):
            lines.append(json.dumps(
                {"stream": e.stream, "concept": e.concept, "start": e.start, "end": e.end},
                sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class DayWindow:
    """One day's [start, end) slice of every stream, with straddlers clipped."""

    day_index: int
    day_start: int
    day_end: int
    streams: dict[str, list[ConceptEvent]] = field(default_factory=dict)

    def events(self, stream: str) -> list[ConceptEvent]:
        return self.streams.get(stream, [])

    def is_empty(self) -> bool:
        return all(not v for v in self.streams.values())


def slice_day(streams: dict[str, list[ConceptEvent]], day_index: int,
              day_origin: int = 0) -> DayWindow:
    """Clip every stream to day `day_index`; events straddling a boundary are
    split at it, so summed durations over days conserve total event time."""
    if day_index < 0:
        raise ValidationError(f"day_index {day_index} is negative")
    lo = day_origin + SECONDS_PER_DAY * day_index
    hi = lo + SECONDS_PER_DAY
    window: dict[str, list[ConceptEvent]] = {}
    for s in STREAMS:
        clipped = []
        for e in streams.get(s, []):
            start = max(e.start, lo)
            end = min(e.end, hi)
            if start < end:
                clipped.append(ConceptEvent(start=start, end=end,
                                            stream=e.stream, concept=e.concept))
        window[s] = _sort_events(clipped)
    return DayWindow(day_index=day_index, day_start=lo, day_end=hi, streams=window)


def day_span(streams: dict[str, list[ConceptEvent]], day_origin: int = 0) -> int:
    """Number of day windows needed to cover every event (0 for no events)."""
    last = max((e.end for evs in streams.values() for e in evs), default=None)
    if last is None:
        return 0
    return int(np.ceil((last - day_origin) / SECONDS_PER_DAY))


def duration_attribute(window: DayWindow, stream: str, concept: str,
                       vocab: Vocabulary) -> float:
    """Total hours of `concept` inside the window (0.0 when absent)."""
    if not vocab.contains(stream, concept):
        raise VocabularyError(f"{concept!r} not in {stream} vocabulary")
    seconds = sum(e.seconds for e in window.events(stream) if e.concept == concept)
    return seconds / 3600.0


def behavior_feature(window: DayWindow, vocab: Vocabulary) -> np.ndarray:
    """Per-day duration vector: 4 activity + 4 audio + 100 location hours.

    Location slots follow vocabulary order; slots past the vocabulary length
    stay zero so the layout is fixed at 108 entries.
    """
    out = np.zeros(FEATURE_DIM)
    for stream in STREAMS:
        for e in window.events(stream):
            out[vocab.feature_index(stream, e.concept)] += e.seconds / 3600.0
    return out
