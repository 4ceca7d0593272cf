"""Core records, the validated dataset bundle, and embedding/score file IO.

Two embedding file formats are supported:

* FEMB, a little-endian binary format: magic ``FEMB``, ``u32`` version (1),
  ``u64`` record count, ``u32`` dimension, then per record a ``u16``-length
  prefixed UTF-8 image id, a ``u16``-length prefixed UTF-8 identity id and
  ``D`` binary32 floats.
* CSV with header ``image_id,identity_id,v0,...,v{D-1}``.

Quality scores live in CSV files with header ``image_id,score``. Floats are
written in shortest round-trip form.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

FEMB_MAGIC = b"FEMB"
FEMB_VERSION = 1
_HEADER = struct.Struct("<4sIQI")
_U16 = struct.Struct("<H")


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _check_token(token: str, what: str) -> str:
    if not isinstance(token, str) or not token:
        raise DataError(f"{what} must be a non-empty string")
    if "," in token or "\n" in token or "\r" in token:
        raise DataError(f"{what} {token!r} contains a comma or newline")
    return token


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    """One image: its id, its identity and its embedding vector (binary32)."""

    image_id: str
    identity_id: str
    vector: np.ndarray

    def __post_init__(self):
        _check_token(self.image_id, "image_id")
        _check_token(self.identity_id, "identity_id")
        vec = np.array(self.vector, dtype=np.float32).reshape(-1)
        if vec.size < 2:
            raise DataError(f"{self.image_id}: embedding dimension must be >= 2")
        if not np.all(np.isfinite(vec)):
            raise DataError(f"{self.image_id}: embedding has non-finite components")
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)

    @property
    def dimension(self) -> int:
        return self.vector.size

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.identity_id == other.identity_id
            and self.vector.shape == other.vector.shape
            and self.vector.tobytes() == other.vector.tobytes()
        )

    def __repr__(self):
        return (
            f"EmbeddingRecord({self.image_id!r}, {self.identity_id!r}, "
            f"dim={self.dimension})"
        )


class QualityTable(Mapping):
    """Immutable map ``image_id -> score`` with finite float scores."""

    def __init__(self, entries=()):
        data: dict[str, float] = {}
        items = entries.items() if isinstance(entries, Mapping) else entries
        for image_id, score in items:
            _check_token(image_id, "image_id")
            if image_id in data:
                raise DataError(f"duplicate image_id {image_id!r}")
            try:
                value = float(score)
            except (TypeError, ValueError):
                raise DataError(f"{image_id}: unparseable score {score!r}") from None
            if not math.isfinite(value):
                raise DataError(f"{image_id}: non-finite score {value!r}")
            data[image_id] = value
        self._data = data

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __repr__(self):
        return f"QualityTable({self._data!r})"


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """Embeddings and qualities with matching ids, plus the identity index.

    Image indices refer to positions in ``embeddings``. ``identity_index``
    lists identities in order of first appearance.
    """

    embeddings: tuple[EmbeddingRecord, ...]
    qualities: QualityTable
    dimension: int
    identity_index: dict[str, tuple[int, ...]]

    @property
    def n_images(self) -> int:
        return len(self.embeddings)

    @property
    def n_identities(self) -> int:
        return len(self.identity_index)

    @cached_property
    def image_ids(self) -> list[str]:
        return [r.image_id for r in self.embeddings]

    @cached_property
    def identity_of(self) -> np.ndarray:
        """Integer identity code per image (position in ``identity_index``)."""
        codes = np.empty(self.n_images, dtype=np.int64)
        for code, members in enumerate(self.identity_index.values()):
            codes[list(members)] = code
        codes.flags.writeable = False
        return codes

    @cached_property
    def vectors(self) -> np.ndarray:
        """``(N, D)`` float64 matrix of embeddings in bundle order."""
        if not self.embeddings:
            out = np.zeros((0, self.dimension))
        else:
            out = np.stack([r.vector for r in self.embeddings]).astype(np.float64)
        out.flags.writeable = False
        return out

    @cached_property
    def identity_vectors(self) -> dict[str, np.ndarray]:
        """Per-identity slices of :attr:`vectors`, in member order."""
        out = {}
        for identity, members in self.identity_index.items():
            arr = self.vectors[list(members)]
            arr.flags.writeable = False
            out[identity] = arr
        return out

    @cached_property
    def scores(self) -> np.ndarray:
        """Baseline quality scores aligned with ``embeddings``."""
        out = np.array([self.qualities[i] for i in self.image_ids], dtype=np.float64)
        out.flags.writeable = False
        return out


@dataclass(frozen=True)
class OptimConfig:
    """Settings of the label optimization."""

    clusters: int = 20
    theta: float = 0.001
    repeats: int = 10
    seed: int = 42

    def __post_init__(self):
        if int(self.clusters) != self.clusters or self.clusters < 2:
            raise DataError("clusters must be an integer >= 2")
        if not (0.0 <= float(self.theta) <= 1.0):
            raise DataError(f"theta must lie in [0, 1], got {self.theta}")
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise DataError("repeats must be an integer >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise DataError("seed must be an unsigned 64-bit integer")


def validate_bundle(embeddings, qualities: QualityTable) -> DatasetBundle:
    """Check that embeddings and qualities describe the same images.

    Raises:
        DataError: on id mismatch, duplicate ids, mixed dimensions or a
            zero-norm vector.
    """
    embeddings = tuple(embeddings)
    if not isinstance(qualities, QualityTable):
        qualities = QualityTable(qualities)
    emb_ids = [r.image_id for r in embeddings]
    seen = set()
    for image_id in emb_ids:
        if image_id in seen:
            raise DataError(f"duplicate image_id {image_id!r}")
        seen.add(image_id)
    missing_q = sorted(seen - set(qualities))
    missing_e = sorted(set(qualities) - seen)
    if missing_q or missing_e:
        parts = []
        if missing_q:
            parts.append(f"no quality score for: {', '.join(missing_q)}")
        if missing_e:
            parts.append(f"no embedding for: {', '.join(missing_e)}")
        raise DataError("; ".join(parts))

    dimension = embeddings[0].dimension if embeddings else 0
    index: dict[str, list[int]] = {}
    for i, rec in enumerate(embeddings):
        if rec.dimension != dimension:
            raise DataError(
                f"{rec.image_id}: dimension {rec.dimension} != {dimension}"
            )
        if not np.any(rec.vector):
            raise DataError(f"{rec.image_id}: zero-norm embedding")
        index.setdefault(rec.identity_id, []).append(i)
    return DatasetBundle(
        embeddings=embeddings,
        qualities=qualities,
        dimension=dimension,
        identity_index={k: tuple(v) for k, v in index.items()},
    )


# ---------------------------------------------------------------------------
# Embedding IO
# ---------------------------------------------------------------------------


def write_embeddings(path, records, fmt: str | None = None) -> None:
    """Write records as FEMB (default) or CSV (``fmt="csv"`` or ``.csv``)."""
    records = list(records)
    fmt = fmt or ("csv" if str(path).lower().endswith(".csv") else "femb")
    dims = {r.dimension for r in records}
    if len(dims) > 1:
        raise DataError(f"records have mixed dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    if fmt == "femb":
        buf = io.BytesIO()
        buf.write(_HEADER.pack(FEMB_MAGIC, FEMB_VERSION, len(records), dim))
        for rec in records:
            for token in (rec.image_id, rec.identity_id):
                raw = token.encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise DataError(f"id too long: {token[:32]!r}...")
                buf.write(_U16.pack(len(raw)))
                buf.write(raw)
            buf.write(rec.vector.astype("<f4").tobytes())
        Path(path).write_bytes(buf.getvalue())
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["image_id", "identity_id"] + [f"v{j}" for j in range(dim)])
            for rec in records:
                writer.writerow(
                    [rec.image_id, rec.identity_id]
                    + [repr(float(v)) for v in rec.vector]
                )
    else:
        raise DataError(f"unknown embedding format {fmt!r}")


def _read_femb(data: bytes) -> list[EmbeddingRecord]:
    if len(data) < _HEADER.size:
        raise DataError("truncated FEMB header")
    magic, version, count, dim = _HEADER.unpack_from(data, 0)
    if magic != FEMB_MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {FEMB_MAGIC!r}")
    if version != FEMB_VERSION:
        raise DataError(f"unsupported FEMB version {version}")
    if count and dim < 2:
        raise DataError(f"invalid dimension {dim}")
    pos = _HEADER.size
    records = []
    vec_bytes = 4 * dim

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise DataError("truncated FEMB record")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    try:
        for _ in range(count):
            (n_img,) = _U16.unpack(take(2))
            image_id = take(n_img).decode("utf-8")
            (n_ident,) = _U16.unpack(take(2))
            identity_id = take(n_ident).decode("utf-8")
            vec = np.frombuffer(take(vec_bytes), dtype="<f4").astype(np.float32)
            records.append(EmbeddingRecord(image_id, identity_id, vec))
    except UnicodeDecodeError as exc:
        raise DataError(f"invalid UTF-8 in FEMB id: {exc}") from None
    if pos != len(data):
        raise DataError(f"{len(data) - pos} trailing bytes after FEMB records")
    return records


def _read_embedding_csv(path) -> list[EmbeddingRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["image_id", "identity_id"]:
            raise DataError("embedding CSV header must start with image_id,identity_id")
        dim = len(header) - 2
        if header[2:] != [f"v{j}" for j in range(dim)] or dim < 2:
            raise DataError("embedding CSV header must list v0..v{D-1} with D >= 2")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 2:
                raise DataError(
                    f"line {lineno}: dimension {len(row) - 2} != {dim}"
                )
            try:
                vec = np.array([float(v) for v in row[2:]], dtype=np.float32)
            except ValueError:
                raise DataError(f"line {lineno}: unparseable component") from None
            records.append(EmbeddingRecord(row[0], row[1], vec))
    return records


def load_embeddings(path) -> list[EmbeddingRecord]:
    """Read embedding records from a FEMB or CSV file, in file order."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == FEMB_MAGIC:
        records = _read_femb(data)
    elif path.suffix.lower() == ".csv" or data.startswith(b"image_id"):
        records = _read_embedding_csv(path)
    else:
        raise DataError(f"{path}: not a FEMB file (magic {data[:4]!r})")
    seen = set()
    for rec in records:
        if rec.image_id in seen:
            raise DataError(f"duplicate image_id {rec.image_id!r}")
        seen.add(rec.image_id)
    return records


# ---------------------------------------------------------------------------
# Quality score IO
# ---------------------------------------------------------------------------


def format_float(value: float) -> str:
    return repr(float(value))


def dump_quality_scores(table: Mapping[str, float]) -> str:
    lines = ["image_id,score"]
    lines.extend(f"{k},{format_float(v)}" for k, v in table.items())
    return "\n".join(lines) + "\n"


def write_quality_scores(path, table: Mapping[str, float]) -> None:
    Path(path).write_text(dump_quality_scores(table), encoding="utf-8")


def load_quality_scores(path) -> QualityTable:
    """Parse an ``image_id,score`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "score"]:
            raise DataError(f"{path}: expected header image_id,score, got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns")
            rows.append((row[0], row[1]))
    return QualityTable(rows)
