"""Tiered flight-knowledge store with exact embedding retrieval.

Documents are organized in three tiers (basic flight knowledge, aircraft
type knowledge, mission specific knowledge), chunked at paragraph
boundaries, embedded, and searched with an exact flat cosine index. The
corpus is small (manuals for one aircraft and four tasks), so exact
search is both fast and oracle-testable; no approximate structures.

Two embedding providers: a deterministic local hashed bag-of-tokens
embedder (tests and offline runs) and a remote embedding-service client.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np


class KnowledgeBaseError(Exception):
    pass


class EmptyDocument(KnowledgeBaseError):
    pass


class ProviderUnavailable(KnowledgeBaseError):
    pass


class DimensionMismatch(KnowledgeBaseError):
    pass


class EmptyIndex(KnowledgeBaseError):
    pass


class IndexFormatError(KnowledgeBaseError):
    pass


TIERS = ("basic", "aircraft_type", "mission_specific")

INDEX_MAGIC = b"ACKB"
INDEX_VERSION = 1


@dataclass(frozen=True)
class KnowledgeDoc:
    doc_id: str
    tier: str
    title: str
    body: str
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier: {self.tier}")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    tier: str
    text: str
    position: int
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class RetrievalHit:
    chunk: Chunk
    score: float  # cosine similarity in [-1, 1]
    rank: int  # 1-based, consecutive


def ingest(doc: KnowledgeDoc, max_chunk_chars: int = 600) -> list[Chunk]:
    """Split a document into ordered chunks, preferring paragraph breaks.

    Chunks cover the whole body (word-for-word) and never exceed
    max_chunk_chars; an over-long paragraph is split at word boundaries.
    """
    body = doc.body.strip()
    if not body:
        raise EmptyDocument(doc.doc_id)

    units: list[str] = []
    for para in re.split(r"\n\s*\n", body):
        para = para.strip()
        if not para:
            continue
        if len(para) <= max_chunk_chars:
            units.append(para)
            continue
        words = para.split()
        cur = ""
        for w in words:
            if cur and len(cur) + 1 + len(w) > max_chunk_chars:
                units.append(cur)
                cur = w
            else:
                cur = f"{cur} {w}" if cur else w
        if cur:
            units.append(cur)

    texts: list[str] = []
    cur = ""
    for unit in units:
        if cur and len(cur) + 2 + len(unit) > max_chunk_chars:
            texts.append(cur)
            cur = unit
        else:
            cur = f"{cur}\n\n{unit}" if cur else unit
    if cur:
        texts.append(cur)

    return [
        Chunk(
            chunk_id=f"{doc.doc_id}#{i:03d}",
            doc_id=doc.doc_id,
            tier=doc.tier,
            text=text,
            position=i,
            tags=doc.tags,
        )
        for i, text in enumerate(texts)
    ]


# --- embedding providers ----------------------------------------------------


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashEmbedder:
    """Deterministic hashed bag-of-tokens embedding for offline use.

    Each token hashes (sha256, salt-free) to a signed coordinate; the
    vector is L2-normalized. Overlapping vocabulary yields high cosine,
    which is exactly the property the retrieval tests rely on.
    """

    def __init__(self, dimension: int = 256):
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyDocument("cannot embed empty text")
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            tokens = [text.lower()]
        v = np.zeros(self.dimension, dtype=np.float64)
        for tok in tokens:
            digest = hashlib.sha256(tok.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] & 1 else -1.0
            v[idx] += sign
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            v[0] = 1.0
            norm = 1.0
        return (v / norm).astype(np.float32)


class RemoteEmbedder:
    """Client for an embeddings HTTP endpoint (OpenAI-style wire shape)."""

    def __init__(self, endpoint: str, model: str, api_key: str = "",
                 timeout_s: float = 10.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.dimension: int = 0  # fixed by the first response

    def embed(self, text: str) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"model": self.model, "input": [text]},
                headers=headers,
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            payload = resp.json()
            raw = payload["data"][0]["embedding"]
        except Exception as exc:  # noqa: BLE001 - uniform provider failure surface
            raise ProviderUnavailable(f"embedding request failed: {exc}") from None
        v = np.asarray(raw, dtype=np.float64)
        if self.dimension == 0:
            self.dimension = v.shape[0]
        elif v.shape[0] != self.dimension:
            raise DimensionMismatch(f"provider returned {v.shape[0]}, expected {self.dimension}")
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not math.isfinite(norm):
            raise ProviderUnavailable("provider returned a degenerate embedding")
        return (v / norm).astype(np.float32)


# --- flat cosine index -------------------------------------------------------


class FlatIndex:
    """Exact top-k cosine search over unit vectors, deterministic tie-break.

    Safe for concurrent readers; writes are exclusive (build-then-read).
    """

    def __init__(self, dimension: int):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self._chunks: list[Chunk] = []
        self._vectors: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def chunks(self) -> Sequence[Chunk]:
        return tuple(self._chunks)

    def add(self, chunk: Chunk, vector: np.ndarray) -> None:
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dimension,):
            raise DimensionMismatch(f"vector shape {v.shape}, index dimension {self.dimension}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector has non-finite entries")
        self._chunks.append(chunk)
        self._vectors.append(v)
        self._matrix = None

    def _scores(self, query: np.ndarray) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack(self._vectors).astype(np.float64)
        return self._matrix @ np.asarray(query, dtype=np.float64)

    def search(
        self,
        query: np.ndarray,
        k: int,
        tier: str | None = None,
        require_tags: Iterable[str] = (),
    ) -> list[RetrievalHit]:
        """Exact top-k by cosine among chunks passing the tier/tag filter."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._chunks:
            raise EmptyIndex("index holds no chunks")
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dimension,):
            raise DimensionMismatch(f"query shape {q.shape}, index dimension {self.dimension}")
        required = set(require_tags)
        candidates = [
            i
            for i, c in enumerate(self._chunks)
            if (tier is None or c.tier == tier) and required.issubset(c.tags)
        ]
        if not candidates:
            return []
        scores = self._scores(q)
        ordered = sorted(candidates, key=lambda i: (-scores[i], self._chunks[i].chunk_id))
        return [
            RetrievalHit(chunk=self._chunks[i], score=float(scores[i]), rank=r + 1)
            for r, i in enumerate(ordered[:k])
        ]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack(">HII", INDEX_VERSION, self.dimension, len(self._chunks)))
            for chunk, vec in zip(self._chunks, self._vectors):
                meta = json.dumps(
                    {
                        "chunk_id": chunk.chunk_id,
                        "doc_id": chunk.doc_id,
                        "tier": chunk.tier,
                        "text": chunk.text,
                        "position": chunk.position,
                        "tags": list(chunk.tags),
                    },
                    ensure_ascii=False,
                ).encode("utf-8")
                fh.write(struct.pack(">I", len(meta)))
                fh.write(meta)
                fh.write(vec.astype(">f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "FlatIndex":
        path = Path(path)
        data = path.read_bytes()
        if data[:4] != INDEX_MAGIC:
            raise IndexFormatError(f"{path}: not an index file")
        version, dim, count = struct.unpack(">HII", data[4:14])
        if version != INDEX_VERSION:
            raise IndexFormatError(f"{path}: unsupported index version {version}")
        index = cls(dim)
        off = 14
        for _ in range(count):
            (meta_len,) = struct.unpack(">I", data[off : off + 4])
            off += 4
            meta = json.loads(data[off : off + meta_len].decode("utf-8"))
            off += meta_len
            vec = np.frombuffer(data[off : off + 4 * dim], dtype=">f4").astype(np.float32)
            off += 4 * dim
            index.add(
                Chunk(
                    chunk_id=meta["chunk_id"],
                    doc_id=meta["doc_id"],
                    tier=meta["tier"],
                    text=meta["text"],
                    position=meta["position"],
                    tags=tuple(meta["tags"]),
                ),
                vec,
            )
        return index


def build_context(
    hits: Sequence[RetrievalHit], char_budget: int, sep: str = "\n\n"
) -> tuple[str, list[str]]:
    """Concatenate hit texts in rank order, truncating at whole chunks.

    Returns (context text, chunk ids actually included).
    """
    if char_budget <= 0:
        raise ValueError("char_budget must be positive")
    parts: list[str] = []
    provenance: list[str] = []
    used = 0
    for hit in hits:
        cost = len(hit.chunk.text) + (len(sep) if parts else 0)
        if used + cost > char_budget:
            break
        parts.append(hit.chunk.text)
        provenance.append(hit.chunk.chunk_id)
        used += cost
    return sep.join(parts), provenance


# --- corpus loading ---------------------------------------------------------


_FRONT_MATTER_RE = re.compile(r"\A---\s*\n(.*?)\n---\s*\n", re.DOTALL)


def parse_corpus_file(path: str | Path) -> KnowledgeDoc:
    """Read one corpus document: front-matter block (tier, title, tags) + body."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    m = _FRONT_MATTER_RE.match(text)
    if not m:
        raise KnowledgeBaseError(f"{path}: missing front-matter block")
    meta: dict[str, str] = {}
    for line in m.group(1).splitlines():
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        meta[key.strip().lower()] = value.strip()
    tier = meta.get("tier", "")
    if tier not in TIERS:
        raise KnowledgeBaseError(f"{path}: bad or missing tier {tier!r}")
    tags = tuple(t.strip() for t in meta.get("tags", "").split(",") if t.strip())
    return KnowledgeDoc(
        doc_id=path.stem,
        tier=tier,
        title=meta.get("title", path.stem),
        body=text[m.end():],
        tags=tags,
    )


def load_corpus(directory: str | Path) -> list[KnowledgeDoc]:
    directory = Path(directory)
    docs = [
        parse_corpus_file(p)
        for p in sorted(directory.glob("*.md")) + sorted(directory.glob("*.txt"))
    ]
    if not docs:
        raise KnowledgeBaseError(f"no corpus documents found under {directory}")
    return docs


def build_index(
    docs: Iterable[KnowledgeDoc],
    embedder: EmbeddingProvider,
    max_chunk_chars: int = 600,
) -> FlatIndex:
    index = FlatIndex(embedder.dimension)
    for doc in docs:
        for chunk in ingest(doc, max_chunk_chars=max_chunk_chars):
            index.add(chunk, embedder.embed(chunk.text))
    return index


def default_corpus_dir() -> Path:
    """The fixture corpus shipped with the package."""
    return Path(__file__).parent / "data" / "corpus"
