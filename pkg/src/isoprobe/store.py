"""Embedding dumps and STS datasets: parsing, persistence, filtering, frequency bucketing.

Two on-disk dump formats are supported.

Text (TSV)::

    #isoprobe-dump v1 dim=<d>
    token  layer  sentence_id  position  is_cls  is_poolable  frequency  v1 ... vd

Binary (little-endian)::

    b"ISOPROBE" | u8 version=1 | u32 N | u32 d
    N x ( u32 len | utf-8 token | u32 layer | u32 sentence_id | u32 position
          | u8 flags (bit0 is_cls, bit1 is_poolable) | u64 frequency | d x f64 )
"""

from __future__ import annotations

import csv
import io
import math
import re
import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from isoprobe.errors import ContractError, DumpFormatError, IsoprobeWarning

MAGIC = b"ISOPROBE"
BINARY_VERSION = 1
TEXT_HEADER_RE = re.compile(r"^#isoprobe-dump v1 dim=(\d+)\s*$")

_HEAD = struct.Struct("<BII")
_META = struct.Struct("<IIIBQ")
_U32 = struct.Struct("<I")
_U32_MAX = 2**32 - 1


@dataclass(frozen=True)
class TokenRecord:
    token: str
    layer: int
    sentence_id: int
    position: int
    is_cls: bool = False
    is_poolable: bool = True
    frequency: int = 0  # 0 = unknown

    def __post_init__(self):
        for name in ("layer", "sentence_id", "position", "frequency"):
            value = getattr(self, name)
            if value < 0:
                raise ContractError(f"{name} must be >= 0, got {value}")
        if self.is_cls and self.position != 0:
            raise ContractError(f"[CLS] record must sit at position 0, got {self.position}")


@dataclass(frozen=True, eq=False)
class EmbeddingDump:
    """Token vectors with per-row metadata; ``vectors[i]`` belongs to ``records[i]``."""

    dim: int
    records: tuple[TokenRecord, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, order="C")
        if vectors.ndim != 2:
            vectors = vectors.reshape(len(self.records), self.dim)
        if self.dim <= 0:
            raise ContractError(f"dim must be positive, got {self.dim}")
        if vectors.shape != (len(self.records), self.dim):
            raise ContractError(
                f"vectors shape {vectors.shape} does not match "
                f"{len(self.records)} records x dim {self.dim}"
            )
        if not np.isfinite(vectors).all():
            raise ContractError("dump contains non-finite vector components")
        vectors.setflags(write=False)
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "vectors", vectors)
        seen = set()
        for rec in self.records:
            key = (rec.sentence_id, rec.layer, rec.position)
            if key in seen:
                raise ContractError(
                    f"duplicate (sentence_id, layer, position) = {key} in dump"
                )
            seen.add(key)

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingDump):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.records == other.records
            and self.vectors.tobytes() == other.vectors.tobytes()
        )

    @cached_property
    def layers(self) -> np.ndarray:
        return np.array([r.layer for r in self.records], dtype=np.int64)

    @cached_property
    def sentence_ids(self) -> np.ndarray:
        return np.array([r.sentence_id for r in self.records], dtype=np.int64)

    @cached_property
    def is_cls(self) -> np.ndarray:
        return np.array([r.is_cls for r in self.records], dtype=bool)

    @cached_property
    def is_poolable(self) -> np.ndarray:
        return np.array([r.is_poolable for r in self.records], dtype=bool)

    @cached_property
    def frequencies(self) -> np.ndarray:
        return np.array([r.frequency for r in self.records], dtype=np.int64)

    def layer_ids(self) -> list[int]:
        return sorted(set(self.layers.tolist()))

    def subset(self, indices) -> "EmbeddingDump":
        indices = np.asarray(indices, dtype=np.int64)
        return EmbeddingDump(
            self.dim, tuple(self.records[i] for i in indices), self.vectors[indices]
        )

    def with_vectors(self, vectors) -> "EmbeddingDump":
        """Same records, new vectors (row order must correspond)."""
        return EmbeddingDump(self.dim, self.records, vectors)


@dataclass(frozen=True)
class StsDataset:
    pairs: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        for a, b, gold in self.pairs:
            if not 0.0 <= gold <= 5.0:
                raise ContractError(f"gold score {gold} outside [0, 5] for pair ({a}, {b})")

    def __len__(self):
        return len(self.pairs)

    def sentence_ids(self) -> set[int]:
        return {a for a, _, _ in self.pairs} | {b for _, b, _ in self.pairs}


def as_matrix(m) -> np.ndarray:
    """Validate an embedding matrix: 2-D, at least one row and column, finite, float64."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractError(f"expected a non-empty N x d matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractError("matrix contains non-finite entries")
    return arr


# -- text format -------------------------------------------------------------


def _parse_flag(text, name, lineno):
    if text not in ("0", "1"):
        raise DumpFormatError(f"{name} must be 0 or 1, got {text!r}", lineno)
    return text == "1"


def _parse_uint(text, name, lineno):
    try:
        value = int(text)
    except ValueError:
        raise DumpFormatError(f"{name} is not an integer: {text!r}", lineno) from None
    if value < 0:
        raise DumpFormatError(f"{name} must be >= 0, got {value}", lineno)
    return value


def load_text_dump(path) -> EmbeddingDump:
    records = []
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        match = TEXT_HEADER_RE.match(header.rstrip("\n"))
        if not match:
            raise DumpFormatError(f"bad header {header.strip()!r}", 1)
        dim = int(match.group(1))
        if dim <= 0:
            raise DumpFormatError("dim must be positive", 1)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 7:
                raise DumpFormatError(f"expected at least 7 fields, got {len(parts)}", lineno)
            if len(parts) - 7 != dim:
                raise DumpFormatError(
                    f"vector has dimension {len(parts) - 7}, header says dim={dim}", lineno
                )
            try:
                vec = np.array(parts[7:], dtype=np.float64)
            except ValueError:
                raise DumpFormatError("unparseable vector component", lineno) from None
            if not np.isfinite(vec).all():
                raise DumpFormatError("non-finite vector component", lineno)
            try:
                rec = TokenRecord(
                    token=parts[0],
                    layer=_parse_uint(parts[1], "layer", lineno),
                    sentence_id=_parse_uint(parts[2], "sentence_id", lineno),
                    position=_parse_uint(parts[3], "position", lineno),
                    is_cls=_parse_flag(parts[4], "is_cls", lineno),
                    is_poolable=_parse_flag(parts[5], "is_poolable", lineno),
                    frequency=_parse_uint(parts[6], "frequency", lineno),
                )
            except DumpFormatError:
                raise
            except ContractError as exc:
                raise DumpFormatError(str(exc), lineno) from None
            records.append(rec)
            rows.append(vec)
    vectors = np.vstack(rows) if rows else np.zeros((0, dim))
    return EmbeddingDump(dim, tuple(records), vectors)


def write_text_dump(dump: EmbeddingDump, path) -> None:
    # repr() gives the shortest string that round-trips to the same double
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#isoprobe-dump v1 dim={dump.dim}\n")
        for rec, vec in zip(dump.records, dump.vectors):
            if "\t" in rec.token or "\n" in rec.token:
                raise ContractError(f"token {rec.token!r} cannot be written to TSV")
            meta = [
                rec.token,
                str(rec.layer),
                str(rec.sentence_id),
                str(rec.position),
                "1" if rec.is_cls else "0",
                "1" if rec.is_poolable else "0",
                str(rec.frequency),
            ]
            fh.write("\t".join(meta + [repr(float(x)) for x in vec]))
            fh.write("\n")


# -- binary format -----------------------------------------------------------


def write_binary_dump(dump: EmbeddingDump, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_HEAD.pack(BINARY_VERSION, len(dump), dump.dim))
    le = dump.vectors.astype("<f8", copy=False)
    for rec, vec in zip(dump.records, le):
        for name in ("layer", "sentence_id", "position"):
            if getattr(rec, name) > _U32_MAX:
                raise ContractError(f"{name} {getattr(rec, name)} does not fit in u32")
        token = rec.token.encode("utf-8")
        buf.write(_U32.pack(len(token)))
        buf.write(token)
        flags = (1 if rec.is_cls else 0) | (2 if rec.is_poolable else 0)
        buf.write(_META.pack(rec.layer, rec.sentence_id, rec.position, flags, rec.frequency))
        buf.write(vec.tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_binary_dump(path) -> EmbeddingDump:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise DumpFormatError("magic number mismatch: not an isoprobe binary dump")
    offset = len(MAGIC)
    if len(data) < offset + _HEAD.size:
        raise DumpFormatError("truncated file: incomplete header")
    version, n, dim = _HEAD.unpack_from(data, offset)
    offset += _HEAD.size
    if version != BINARY_VERSION:
        raise DumpFormatError(f"unsupported binary dump version {version}")
    if dim == 0:
        raise DumpFormatError("dim must be positive")
    vec_bytes = 8 * dim
    records = []
    vectors = np.empty((n, dim), dtype=np.float64)
    for i in range(n):
        if len(data) < offset + 4:
            raise DumpFormatError(f"truncated file in record {i}")
        (tlen,) = _U32.unpack_from(data, offset)
        offset += 4
        end = offset + tlen + _META.size + vec_bytes
        if len(data) < end:
            raise DumpFormatError(f"truncated file in record {i}")
        try:
            token = data[offset : offset + tlen].decode("utf-8")
        except UnicodeDecodeError:
            raise DumpFormatError(f"record {i}: token is not valid UTF-8") from None
        offset += tlen
        layer, sid, pos, flags, freq = _META.unpack_from(data, offset)
        offset += _META.size
        vectors[i] = np.frombuffer(data, dtype="<f8", count=dim, offset=offset)
        offset += vec_bytes
        try:
            records.append(
                TokenRecord(token, layer, sid, pos, bool(flags & 1), bool(flags & 2), freq)
            )
        except ContractError as exc:
            raise DumpFormatError(f"record {i}: {exc}") from None
    if offset != len(data):
        raise DumpFormatError(f"{len(data) - offset} trailing bytes after {n} records")
    if not np.isfinite(vectors).all():
        raise DumpFormatError("non-finite vector component")
    return EmbeddingDump(dim, tuple(records), vectors)


def load_dump(path) -> EmbeddingDump:
    """Load a dump, choosing the format by sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return load_binary_dump(path)
    return load_text_dump(path)


# -- filtering ---------------------------------------------------------------


def select_indices(dump, layer=None, cls_only=None, poolable_only=None, sample=None):
    """Row indices matching the filter, in dump order.

    ``cls_only`` / ``poolable_only``: True keeps only flagged rows, False keeps only
    unflagged rows, None does not filter. ``sample=(n, seed)`` draws n matching rows
    uniformly without replacement.
    """
    mask = np.ones(len(dump), dtype=bool)
    if layer is not None:
        mask &= dump.layers == layer
    if cls_only is not None:
        mask &= dump.is_cls == bool(cls_only)
    if poolable_only is not None:
        mask &= dump.is_poolable == bool(poolable_only)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        parts = []
        if layer is not None:
            parts.append(f"layer={layer}")
        if cls_only is not None:
            parts.append(f"cls_only={cls_only}")
        if poolable_only is not None:
            parts.append(f"poolable_only={poolable_only}")
        raise ContractError(f"empty selection: no rows match {', '.join(parts) or 'filter'}")
    if sample is not None:
        n, seed = sample
        if not 1 <= n <= idx.size:
            raise ContractError(f"cannot sample {n} rows from {idx.size} matches")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(idx, size=n, replace=False))
    return idx


def select(dump, layer=None, cls_only=None, poolable_only=None, sample=None) -> np.ndarray:
    idx = select_indices(dump, layer, cls_only, poolable_only, sample)
    return dump.vectors[idx].copy()


# -- frequency buckets -------------------------------------------------------


def frequency_buckets(frequencies, n_buckets: int, unknown_to_zero: bool = False) -> np.ndarray:
    """Quantile bucket per record: 1 = least frequent, ``n_buckets`` = most frequent.

    Accepts an :class:`EmbeddingDump` or a sequence of frequencies. Bucketing is by
    rank: sorted position p of M known tokens goes to ``1 + floor(p * n / M)``, and a
    run of tied frequencies shares the bucket of its first member, which keeps the
    assignment monotone in frequency. Unknown frequencies (0) land in bucket 0 when
    ``unknown_to_zero`` is set and are an error otherwise.
    """
    if isinstance(frequencies, EmbeddingDump):
        frequencies = frequencies.frequencies
    freqs = np.asarray(frequencies, dtype=np.int64)
    if n_buckets < 2:
        raise ContractError(f"n_buckets must be >= 2, got {n_buckets}")
    if (freqs < 0).any():
        raise ContractError("frequencies must be >= 0")
    known = freqs > 0
    if not known.all() and not unknown_to_zero:
        raise ContractError(
            f"{int((~known).sum())} records have unknown frequency (0); "
            "pass unknown_to_zero to bucket them as 0"
        )
    buckets = np.zeros(freqs.shape, dtype=np.int64)
    known_idx = np.flatnonzero(known)
    m = known_idx.size
    if m == 0:
        return buckets
    kf = freqs[known_idx]
    n_distinct = np.unique(kf).size
    if n_buckets > n_distinct:
        warnings.warn(
            f"{n_buckets} buckets requested but only {n_distinct} distinct frequencies; "
            "buckets collapse",
            IsoprobeWarning,
            stacklevel=2,
        )
    order = np.argsort(kf, kind="stable")
    sorted_f = kf[order]
    positions = np.arange(m)
    # first sorted position of each tie run
    is_start = np.ones(m, dtype=bool)
    is_start[1:] = sorted_f[1:] != sorted_f[:-1]
    run_start = np.maximum.accumulate(np.where(is_start, positions, 0))
    sorted_bucket = 1 + (run_start * n_buckets) // m
    out = np.empty(m, dtype=np.int64)
    out[order] = sorted_bucket
    buckets[known_idx] = out
    return buckets


# -- STS datasets ------------------------------------------------------------


def load_sts_dataset(path, dump: EmbeddingDump | None = None) -> StsDataset:
    """Read ``sent_a,sent_b,gold`` rows (comma or tab separated).

    When ``dump`` is given, every referenced sentence id must have rows in it.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise DumpFormatError("empty STS file", 1)
    delimiter = "\t" if "\t" in lines[0] else ","
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    if header != ["sent_a", "sent_b", "gold"]:
        raise DumpFormatError(f"expected header sent_a,sent_b,gold; got {header}", 1)
    pairs = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DumpFormatError(f"expected 3 fields, got {len(row)}", lineno)
        try:
            a, b = int(row[0]), int(row[1])
            gold = float(row[2])
        except ValueError:
            raise DumpFormatError(f"unparseable row {row}", lineno) from None
        if a < 0 or b < 0:
            raise DumpFormatError("sentence ids must be >= 0", lineno)
        if not (math.isfinite(gold) and 0.0 <= gold <= 5.0):
            raise DumpFormatError(f"gold score {gold} outside [0, 5]", lineno)
        pairs.append((a, b, gold))
    dataset = StsDataset(tuple(pairs))
    if dump is not None:
        present = set(dump.sentence_ids.tolist())
        dangling = sorted(dataset.sentence_ids() - present)
        if dangling:
            raise ContractError(f"dangling sentence ids (no rows in dump): {dangling[:10]}")
    return dataset


def write_sts_dataset(dataset: StsDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sent_a", "sent_b", "gold"])
        for a, b, gold in dataset.pairs:
            writer.writerow([a, b, repr(float(gold))])
