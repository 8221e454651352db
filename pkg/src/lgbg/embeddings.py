"""Initial node embeddings: loaded from a word-vector file or derived
deterministically from concept names when no file is supplied."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import EmbeddingError, ParseError
from .streams import Vocabulary


def _hash_vector(name: str, dim: int, seed: int) -> np.ndarray:
    """Unit-norm vector that is a pure function of (concept name, seed)."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class EmbeddingTable:
    """Concept name -> fixed d-dimensional vector; not updated by training."""

    def __init__(self, names: list[str], vectors: np.ndarray, source: str):
        self.names = list(names)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.source = source  # "file" or "deterministic-fallback"
        self._index = {n: i for i, n in enumerate(self.names)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index(self, name: str) -> int:
        if name not in self._index:
            raise EmbeddingError(f"no embedding for concept {name!r}")
        return self._index[name]

    def vector(self, name: str) -> np.ndarray:
        return self.vectors[self.index(name)]

    @classmethod
    def fallback(cls, vocab: Vocabulary, dim: int, seed: int) -> "EmbeddingTable":
        names = sorted({c for _, c in vocab.all_concepts()})
        vectors = np.stack([_hash_vector(n, dim, seed) for n in names])
        return cls(names, vectors, source="deterministic-fallback")

    @classmethod
    def from_file(cls, path, vocab: Vocabulary, dim: int, seed: int,
                  fill_missing: bool = True) -> "EmbeddingTable":
        """Read `<name> v1 .. vd` lines; vocabulary concepts absent from the
        file get fallback vectors when `fill_missing`, else raise."""
        loaded: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(),
                                      start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                vec = np.array([float(p) for p in parts[1:]])
            except ValueError as e:
                raise ParseError(f"bad embedding value: {e}", line=lineno) from e
            if vec.size != dim:
                raise ParseError(f"expected {dim} values, got {vec.size}", line=lineno)
            loaded[parts[0]] = vec
        names = sorted({c for _, c in vocab.all_concepts()})
        vectors = []
        for n in names:
            if n in loaded:
                vectors.append(loaded[n])
            elif fill_missing:
                vectors.append(_hash_vector(n, dim, seed))
            else:
                raise EmbeddingError(f"no embedding for concept {n!r} and no fallback")
        return cls(names, np.stack(vectors), source="file")
