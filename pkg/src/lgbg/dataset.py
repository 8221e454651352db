"""On-disk dataset layout shared by the CLI commands.

A dataset directory holds `dataset.json` (the manifest), `vocab.json` and one
JSON-lines event log per subject under `logs/`. The manifest lists subjects
with their per-day labels (and grade when present) so training, evaluation
and the grade task all read the same structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError
from .graphs import GlobalSample, build_samples
from .streams import (ConceptEvent, Vocabulary, parse_event_log, write_event_log)
from .synth import SynthDataset

MANIFEST = "dataset.json"
VOCAB_FILE = "vocab.json"


@dataclass
class SubjectRecord:
    subject: str
    streams: dict[str, list[ConceptEvent]]
    labels: dict[int, int] = field(default_factory=dict)
    gpa: float | None = None


@dataclass
class Dataset:
    vocab: Vocabulary
    subjects: list[SubjectRecord]
    day_origin: int = 0
    meta: dict = field(default_factory=dict)

    def samples(self, span: int, table) -> list[GlobalSample]:
        out = []
        for rec in self.subjects:
            out.extend(build_samples(rec.streams, rec.labels, span, self.vocab,
                                     table, subject=rec.subject,
                                     day_origin=self.day_origin))
        return out

    def cohort(self) -> list[tuple[str, dict, float]]:
        """(subject, streams, gpa) triples for the grade task."""
        return [(r.subject, r.streams, r.gpa) for r in self.subjects
                if r.gpa is not None]


def write_dataset(dataset: SynthDataset, out_dir) -> Path:
    out = Path(out_dir)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    dataset.vocab.save(out / VOCAB_FILE)
    subjects = []
    for rec in dataset.subjects:
        log_rel = f"logs/{rec.subject}.jsonl"
        write_event_log(out / log_rel, rec.streams)
        entry = {"id": rec.subject, "log": log_rel,
                 "labels": {str(d): c for d, c in sorted(rec.labels.items())}}
        if rec.gpa is not None:
            entry["gpa"] = rec.gpa
        subjects.append(entry)
    manifest = {"format": 1, "day_origin": 0, "scenario": dataset.spec.to_dict(),
                "subjects": subjects}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    return out


def load_dataset(path) -> Dataset:
    root = Path(path)
    manifest_path = root / MANIFEST
    if not manifest_path.exists():
        raise ValidationError(f"no {MANIFEST} under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"manifest is not valid JSON: {e}") from e
    if manifest.get("format") != 1:
        raise ParseError(f"unsupported dataset format {manifest.get('format')!r}")
    vocab = Vocabulary.load(root / VOCAB_FILE)
    subjects = []
    for entry in manifest["subjects"]:
        parsed = parse_event_log(root / entry["log"], vocab)
        labels = {int(day): int(cls) for day, cls in entry.get("labels", {}).items()}
        subjects.append(SubjectRecord(subject=entry["id"], streams=parsed.streams,
                                      labels=labels, gpa=entry.get("gpa")))
    return Dataset(vocab=vocab, subjects=subjects,
                   day_origin=int(manifest.get("day_origin", 0)),
                   meta=manifest.get("scenario", {}))
