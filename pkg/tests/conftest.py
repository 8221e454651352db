from __future__ import annotations

import numpy as np
import pytest

from lgbg.config import TrainConfig
from lgbg.embeddings import EmbeddingTable
from lgbg.streams import ConceptEvent, Vocabulary


@pytest.fixture
def vocab() -> Vocabulary:
    return Vocabulary(locations=("cafe", "classroom", "dorm", "gym", "library"))


@pytest.fixture
def small_config() -> TrainConfig:
    return TrainConfig(d=8, de=6, dp=10, layers=2, span=3, seed=3)


@pytest.fixture
def small_table(vocab, small_config) -> EmbeddingTable:
    return EmbeddingTable.fallback(vocab, small_config.d, small_config.seed)


def ev(stream: str, concept: str, start: int, end: int) -> ConceptEvent:
    return ConceptEvent(stream=stream, concept=concept, start=start, end=end)


def random_events(rng: np.random.Generator, stream: str, concepts, n: int,
                  horizon: int = 86400, max_len: int = 7200):
    """n random valid events of one stream within [0, horizon)."""
    events = []
    for _ in range(n):
        start = int(rng.integers(0, horizon - 2))
        end = int(start + rng.integers(1, max_len))
        events.append(ev(stream, str(rng.choice(concepts)), start, min(end, horizon - 1)))
    return events
