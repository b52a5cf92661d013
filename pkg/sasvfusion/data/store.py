"""Binary embedding store.

File layout (little-endian):
    magic "SGEM" | u32 version | u32 asv_dim | u32 cm_dim | u64 record count
    per record: u16 + UTF-8 utt_id | u16 + UTF-8 speaker_id | u8 authenticity (0 bona fide, 1 spoof)
                | u16 + UTF-8 attack tag (empty if none) | asv_dim f64 | cm_dim f64

Externally extracted embeddings are packed the same way: build an
``EmbeddingStore`` with the extractor's widths, ``add`` one record per
utterance and call ``write_store``.
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List

import numpy as np

from sasvfusion.data.trials import Authenticity, UtteranceMeta
from sasvfusion.exceptions import (
    BadMagicError,
    ContractViolation,
    CorruptRecordError,
    DimensionMismatchError,
    MissingUtteranceError,
    TruncatedFileError,
    VersionMismatchError,
)
from sasvfusion.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"SGEM"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")
_AUTH_CODES = {Authenticity.BONA_FIDE: 0, Authenticity.SPOOF: 1}


@dataclass(frozen=True)
class StoreRecord:
    meta: UtteranceMeta
    asv: np.ndarray = field(repr=False)
    cm: np.ndarray = field(repr=False)


class EmbeddingStore:
    """Utterance id -> (metadata, ASV embedding, CM embedding), in insertion order."""

    def __init__(self, asv_dim: int, cm_dim: int):
        if asv_dim < 1 or cm_dim < 1:
            raise ContractViolation("embedding dimensions must be >= 1")
        self.asv_dim = int(asv_dim)
        self.cm_dim = int(cm_dim)
        self.records: Dict[str, StoreRecord] = {}

    def add(self, meta: UtteranceMeta, asv, cm):
        asv = np.asarray(asv, dtype=np.float64).reshape(-1)
        cm = np.asarray(cm, dtype=np.float64).reshape(-1)
        if asv.shape != (self.asv_dim,) or cm.shape != (self.cm_dim,):
            raise ContractViolation(
                f"{meta.utt_id}: embeddings have dims ({asv.size}, {cm.size}), store expects ({self.asv_dim}, {self.cm_dim})")
        if meta.utt_id in self.records:
            raise ContractViolation(f"duplicate utterance id '{meta.utt_id}'")
        self.records[meta.utt_id] = StoreRecord(meta, asv, cm)

    def __len__(self):
        return len(self.records)

    def __contains__(self, utt_id):
        return utt_id in self.records

    def __iter__(self) -> Iterator[StoreRecord]:
        return iter(self.records.values())

    def __getitem__(self, utt_id) -> StoreRecord:
        try:
            return self.records[utt_id]
        except KeyError:
            raise MissingUtteranceError(f"utterance '{utt_id}' is not in the store", [utt_id]) from None

    def metas(self) -> List[UtteranceMeta]:
        return [r.meta for r in self.records.values()]

    def asv_matrix(self, utt_ids):
        return np.vstack([self[u].asv for u in utt_ids])

    def cm_matrix(self, utt_ids):
        return np.vstack([self[u].cm for u in utt_ids])

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        if (self.asv_dim, self.cm_dim) != (other.asv_dim, other.cm_dim):
            return False
        if list(self.records) != list(other.records):
            return False
        return all(a.meta == b.meta and a.asv.tobytes() == b.asv.tobytes() and a.cm.tobytes() == b.cm.tobytes()
                   for a, b in zip(self, other))

    def __repr__(self):
        return f"EmbeddingStore(asv_dim={self.asv_dim}, cm_dim={self.cm_dim}, records={len(self)})"


def _text(value):
    encoded = value.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise ContractViolation(f"identifier too long for the store format: {value[:32]}...")
    return struct.pack("<H", len(encoded)) + encoded


def store_bytes(store: EmbeddingStore) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, store.asv_dim, store.cm_dim, len(store))]
    for rec in store:
        m = rec.meta
        parts.append(_text(m.utt_id))
        parts.append(_text(m.speaker_id))
        parts.append(struct.pack("<B", _AUTH_CODES[m.authenticity]))
        parts.append(_text(m.attack_id or ""))
        parts.append(np.ascontiguousarray(rec.asv, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(rec.cm, dtype="<f8").tobytes())
    return b"".join(parts)


def write_store(store: EmbeddingStore, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(store_bytes(store))
    logger.info(f"Wrote {len(store)} records to {path}")
    return path


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise TruncatedFileError(f"store truncated while reading {what}", self.offset)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def text(self, what):
        (n,) = struct.unpack("<H", self.take(2, f"{what} length"))
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptRecordError(f"{what} is not valid UTF-8", self.offset - n) from None


def store_from_bytes(data: bytes) -> EmbeddingStore:
    """Parse a store; every failure names the byte offset where it was detected."""
    cur = _Cursor(data)
    if len(data) >= 4 and data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    magic, version, asv_dim, cm_dim, count = _HEADER.unpack(cur.take(_HEADER.size, "header"))
    if version != VERSION:
        raise VersionMismatchError(f"store version {version} is not supported (expected {VERSION})", 4)
    if asv_dim < 1 or cm_dim < 1:
        raise DimensionMismatchError(f"store declares dimensions ({asv_dim}, {cm_dim})", 8)
    store = EmbeddingStore(asv_dim, cm_dim)
    for i in range(count):
        start = cur.offset
        utt_id = cur.text(f"utterance id of record {i}")
        speaker = cur.text(f"speaker id of record {i}")
        (code,) = struct.unpack("<B", cur.take(1, f"authenticity of record {i}"))
        if code not in (0, 1):
            raise CorruptRecordError(f"record {i} ('{utt_id}') has authenticity code {code}", cur.offset - 1)
        attack = cur.text(f"attack tag of record {i}")
        asv = np.frombuffer(cur.take(8 * asv_dim, f"ASV embedding of '{utt_id}'"), dtype="<f8")
        cm = np.frombuffer(cur.take(8 * cm_dim, f"CM embedding of '{utt_id}'"), dtype="<f8")
        authenticity = Authenticity.SPOOF if code == 1 else Authenticity.BONA_FIDE
        try:
            meta = UtteranceMeta(utt_id, speaker, authenticity, attack or None)
            store.add(meta, asv.astype(np.float64), cm.astype(np.float64))
        except ContractViolation as exc:
            raise CorruptRecordError(str(exc), start) from None
    if cur.offset != len(data):
        raise CorruptRecordError(f"{len(data) - cur.offset} trailing bytes after the last record", cur.offset)
    return store


def read_store(path) -> EmbeddingStore:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File '{path}' not found.")
    store = store_from_bytes(path.read_bytes())
    logger.info(f"Read {len(store)} records from {path} (asv_dim={store.asv_dim}, cm_dim={store.cm_dim})")
    return store
