"""Reference-document store: chunking, embedding, and exact top-k search.

The index is an exact cosine scan over unit-normalized embeddings; at desk
scale (well under a million chunks) this is both fast enough and trivially
testable against a brute-force oracle.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from .model import MedevalError, dumps_canonical

DEFAULT_WINDOW = 512
DEFAULT_OVERLAP = 64
DEFAULT_TOP_K = 3

_MATRIX_FILE = "embeddings.f32"
_CHUNKS_FILE = "chunks.jsonl"
_META_FILE = "meta.json"


class InvalidWindow(MedevalError):
    pass


class EmptyIndex(MedevalError):
    pass


class EmbedderFailure(MedevalError):
    pass


class EmbedderMismatch(MedevalError):
    pass


class Embedder(Protocol):
    """Deterministic text embedder: same text, same vector."""

    @property
    def dim(self) -> int: ...

    def embed(self, text: str) -> np.ndarray: ...

    def fingerprint(self) -> str: ...


class HashEmbedder:
    """Feature-hashing embedder over lowercase word tokens.

    Fully offline and deterministic, which lets the whole pipeline run
    without any external encoder. Token buckets come from a stable digest,
    never from Python's randomized hash().
    """

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise EmbedderFailure("dim must be positive")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def fingerprint(self) -> str:
        return f"hash-v1:dim={self._dim}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self._dim, dtype=np.float64)
        for token in re.findall(r"[a-z0-9]+", text.lower()):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            bucket = int.from_bytes(digest, "little") % self._dim
            vec[bucket] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0  # tokenless text maps to a fixed unit vector
            return vec
        return vec / norm


@dataclass(frozen=True)
class KnowledgeChunk:
    """A span of a source document with its unit-norm embedding."""

    chunk_id: str
    source_doc: str
    span: tuple[int, int]
    text: str
    embedding: np.ndarray

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise MedevalError(f"chunk {self.chunk_id} has blank text")
        norm = float(np.linalg.norm(self.embedding))
        if abs(norm - 1.0) > 1e-6:
            raise MedevalError(f"chunk {self.chunk_id} embedding norm {norm} != 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "chunk_id": self.chunk_id,
            "source_doc": self.source_doc,
            "span": list(self.span),
            "text": self.text,
        }


def chunk_document(
    doc_text: str, window: int = DEFAULT_WINDOW, overlap: int = DEFAULT_OVERLAP
) -> list[tuple[tuple[int, int], str]]:
    """Split a document into word-window chunks.

    Consecutive chunks share exactly `overlap` words; generation stops at
    the first chunk reaching the document end, so the last chunk may be
    shorter than `window`.
    """
    if window <= 0 or overlap < 0 or overlap >= window:
        raise InvalidWindow(f"need 0 <= overlap < window, got {window=} {overlap=}")
    words = doc_text.split()
    if not words:
        return []
    step = window - overlap
    chunks = []
    start = 0
    while True:
        end = min(start + window, len(words))
        chunks.append(((start, end), " ".join(words[start:end])))
        if end >= len(words):
            break
        start += step
    return chunks


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EmbedderFailure("embedder produced a zero vector")
    return np.asarray(vec, dtype=np.float64) / norm


class VectorIndex:
    """Exact-scan cosine index over knowledge chunks.

    Read-concurrent after construction; ties are broken by ascending
    chunk_id so results are fully deterministic.
    """

    def __init__(self, chunks: Sequence[KnowledgeChunk], embedder: Embedder):
        self.chunks = list(chunks)
        self.embedder = embedder
        if self.chunks:
            self._matrix = np.stack([c.embedding for c in self.chunks]).astype(np.float64)
        else:
            self._matrix = np.zeros((0, embedder.dim), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.chunks)

    def query(self, query_text: str, k: int = DEFAULT_TOP_K) -> list[tuple[KnowledgeChunk, float]]:
        if not self.chunks:
            raise EmptyIndex("query against an empty index")
        if k < 1:
            raise MedevalError("k must be >= 1")
        q = _normalize(self.embedder.embed(query_text))
        sims = self._matrix @ q
        order = sorted(range(len(self.chunks)), key=lambda i: (-sims[i], self.chunks[i].chunk_id))
        return [(self.chunks[i], float(sims[i])) for i in order[:k]]

    def save(self, out_dir: str | Path) -> None:
        """Persist as a JSONL chunk file plus a little-endian float32 matrix
        with an 8-byte header (u32 count, u32 dim)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / _CHUNKS_FILE).open("w", encoding="utf-8") as fh:
            for chunk in self.chunks:
                fh.write(dumps_canonical(chunk.to_dict()))
                fh.write("\n")
        with (out / _MATRIX_FILE).open("wb") as fh:
            fh.write(struct.pack("<II", len(self.chunks), self.embedder.dim))
            fh.write(self._matrix.astype("<f4").tobytes(order="C"))
        (out / _META_FILE).write_text(
            dumps_canonical({"embedder_fingerprint": self.embedder.fingerprint()}) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, store_dir: str | Path, embedder: Embedder) -> "VectorIndex":
        store = Path(store_dir)
        meta = json.loads((store / _META_FILE).read_text(encoding="utf-8"))
        if meta["embedder_fingerprint"] != embedder.fingerprint():
            raise EmbedderMismatch(
                f"index built with {meta['embedder_fingerprint']!r}, "
                f"got {embedder.fingerprint()!r}"
            )
        raw = (store / _MATRIX_FILE).read_bytes()
        count, dim = struct.unpack_from("<II", raw, 0)
        matrix = np.frombuffer(raw, dtype="<f4", offset=8).reshape(count, dim).astype(np.float64)
        chunks = []
        with (store / _CHUNKS_FILE).open("r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                d = json.loads(line)
                row = matrix[i]
                row = row / float(np.linalg.norm(row))  # re-unit after f32 rounding
                chunks.append(
                    KnowledgeChunk(
                        chunk_id=d["chunk_id"],
                        source_doc=d["source_doc"],
                        span=tuple(d["span"]),
                        text=d["text"],
                        embedding=row,
                    )
                )
        if len(chunks) != count:
            raise MedevalError(f"store lists {count} chunks, file has {len(chunks)}")
        return cls(chunks, embedder)


def index(chunks: Sequence[KnowledgeChunk], embedder: Embedder) -> VectorIndex:
    """Build an index over pre-embedded chunks."""
    return VectorIndex(chunks, embedder)


def load_store(store_dir: str | Path) -> VectorIndex:
    """Open a saved store, rebuilding the hash embedder from its fingerprint."""
    meta = json.loads((Path(store_dir) / _META_FILE).read_text(encoding="utf-8"))
    fingerprint = meta["embedder_fingerprint"]
    match = re.fullmatch(r"hash-v1:dim=(\d+)", fingerprint)
    if match is None:
        raise EmbedderMismatch(
            f"store fingerprint {fingerprint!r} needs an explicit embedder"
        )
    return VectorIndex.load(store_dir, HashEmbedder(int(match.group(1))))


def build_chunks(
    documents: dict[str, str],
    embedder: Embedder,
    window: int = DEFAULT_WINDOW,
    overlap: int = DEFAULT_OVERLAP,
) -> list[KnowledgeChunk]:
    """Chunk and embed a {source_doc: text} mapping, in sorted doc order."""
    chunks = []
    for doc_name in sorted(documents):
        for (start, end), text in chunk_document(documents[doc_name], window, overlap):
            try:
                embedding = _normalize(embedder.embed(text))
            except EmbedderFailure:
                raise
            except Exception as exc:
                raise EmbedderFailure(f"embedding failed for {doc_name}:{start}") from exc
            chunks.append(
                KnowledgeChunk(
                    chunk_id=f"{doc_name}:{start:08d}",
                    source_doc=doc_name,
                    span=(start, end),
                    text=text,
                    embedding=embedding,
                )
            )
    return chunks


def build_store(
    docs_dir: str | Path,
    out_dir: str | Path,
    embedder: Embedder | None = None,
    window: int = DEFAULT_WINDOW,
    overlap: int = DEFAULT_OVERLAP,
) -> VectorIndex:
    """Index every *.txt file under docs_dir and persist to out_dir."""
    embedder = embedder or HashEmbedder()
    docs = {}
    for path in sorted(Path(docs_dir).glob("*.txt")):
        docs[path.name] = path.read_text(encoding="utf-8")
    chunks = build_chunks(docs, embedder, window, overlap)
    idx = VectorIndex(chunks, embedder)
    idx.save(out_dir)
    return idx
