"""Shared domain types and the on-disk emulation model format.

Symbols live in an extended alphabet: octets are 0..255, ``GAP`` and
``WILDCARD`` are negative codes, so no payload byte can ever alias them.
The characters used when rendering ('★', '?') are display-only.

Model file layout (all integers little-endian)::

    magic   b"OEMU"          4 bytes
    version u16              currently 1
    params  u16 count, then count x (u8 name_len, name utf-8, f64 value)
    nclust  u32
    cluster records, each:
        id          i64
        members     u32 count, count x i64
        centroid    i64 index, u32 len + request bytes, u32 len + response bytes
        prototype   u32 L, L x i16 symbol, L x u32 source column
        weights     L x f64 weight, L x f64 entropy
        fields      u32 count, count x (u32 req_start, u32 req_end,
                                        u32 resp_start, u32 resp_end)
    trailer b"END!"
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, fields as dc_fields
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

GAP = -1
WILDCARD = -2

MAGIC = b"OEMU"
TRAILER = b"END!"
FORMAT_VERSION = 1


def as_octets(data) -> np.ndarray:
    """Coerce bytes-like / int sequences to a uint8 array."""
    if isinstance(data, np.ndarray):
        if data.dtype == np.uint8:
            return data
        return data.astype(np.uint8)
    if isinstance(data, (bytes, bytearray, memoryview)):
        return np.frombuffer(bytes(data), dtype=np.uint8)
    return np.asarray(list(data), dtype=np.uint8)


def render_symbols(symbols: Iterable[int], gap: str = "★", wildcard: str = "?") -> str:
    """Display a symbol row; non-printable octets are shown as ``\\xNN``."""
    out = []
    for s in symbols:
        s = int(s)
        if s == GAP:
            out.append(gap)
        elif s == WILDCARD:
            out.append(wildcard)
        elif 0x20 <= s < 0x7F:
            out.append(chr(s))
        else:
            out.append(f"\\x{s:02x}")
    return "".join(out)


@dataclass(frozen=True)
class Label:
    """Ground-truth annotation; evaluation only."""

    op_type: str | None = None
    critical_fields: tuple[tuple[int, int], ...] = ()  # (offset, length) into response


@dataclass(frozen=True)
class Transaction:
    index: int
    request: bytes
    response: bytes
    label: Label | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"transaction index must be non-negative, got {self.index}")
        object.__setattr__(self, "request", bytes(self.request))
        object.__setattr__(self, "response", bytes(self.response))

    def unlabelled(self) -> "Transaction":
        return Transaction(self.index, self.request, self.response)


@dataclass(frozen=True)
class TransactionLibrary:
    transactions: tuple[Transaction, ...]
    name: str = ""
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))
        seen = set()
        for t in self.transactions:
            if t.index in seen:
                raise ValueError(f"duplicate transaction index {t.index}")
            seen.add(t.index)

    def __len__(self):
        return len(self.transactions)

    def __iter__(self):
        return iter(self.transactions)

    def __getitem__(self, i):
        return self.transactions[i]

    @cached_property
    def by_index(self) -> dict[int, Transaction]:
        return {t.index: t for t in self.transactions}

    @property
    def labelled(self) -> bool:
        return all(t.label is not None and t.label.op_type is not None for t in self.transactions)

    def subset(self, positions: Sequence[int]) -> "TransactionLibrary":
        return TransactionLibrary(tuple(self.transactions[p] for p in positions), self.name, self.source)


@dataclass(frozen=True)
class Cluster:
    id: int
    member_indices: frozenset[int]
    centroid_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "member_indices", frozenset(self.member_indices))
        if not self.member_indices:
            raise ValueError(f"cluster {self.id} is empty")
        if self.centroid_index is not None and self.centroid_index not in self.member_indices:
            raise ValueError(f"centroid {self.centroid_index} is not a member of cluster {self.id}")


@dataclass(frozen=True)
class ConsensusPrototype:
    symbols: tuple[int, ...]  # octet or WILDCARD
    source_columns: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        object.__setattr__(self, "source_columns", tuple(int(c) for c in self.source_columns))
        if len(self.symbols) != len(self.source_columns):
            raise ValueError("prototype symbols and source columns differ in length")
        for s in self.symbols:
            if s != WILDCARD and not 0 <= s <= 255:
                raise ValueError(f"invalid prototype symbol {s}")
        if any(b <= a for a, b in zip(self.source_columns, self.source_columns[1:])):
            raise ValueError("prototype source columns must be strictly increasing")

    def __len__(self):
        return len(self.symbols)

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.symbols, dtype=np.int64)

    def render(self) -> str:
        return render_symbols(self.symbols)


@dataclass(frozen=True)
class WeightVector:
    weights: tuple[float, ...]
    entropies: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "entropies", tuple(float(e) for e in self.entropies))
        if len(self.weights) != len(self.entropies):
            raise ValueError("weights and entropies differ in length")

    def __len__(self):
        return len(self.weights)

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


@dataclass(frozen=True)
class SymmetricField:
    request_range: tuple[int, int]
    response_range: tuple[int, int]
    content: bytes


@dataclass(frozen=True)
class AnalysisParams:
    """Knobs for offline analysis and runtime matching."""

    f: float = 0.8               # consensus frequency threshold
    b: float = 1.0               # entropy weight scale
    c: float = 10.0              # entropy weight exponent
    match: float = 1.0           # M
    mismatch: float = -1.0       # D
    wildcard: float = 0.0        # X
    gap: float = -1.0            # G (pairwise, clustering, matching)
    msa_gap: float = -1.5        # G used inside multiple alignment
    cut_threshold: float = 0.45  # VAT chain cut
    min_field_len: int = 3       # symmetric field minimum length
    weighted_insertions: bool = True  # insertions cost by neighbouring weight

    def __post_init__(self):
        if not 0 < self.f <= 1:
            raise ValueError(f"f must be in (0, 1], got {self.f}")
        if self.b <= 0 or self.c <= 0:
            raise ValueError("b and c must be positive")
        if self.min_field_len < 1:
            raise ValueError("min_field_len must be >= 1")
        object.__setattr__(self, "min_field_len", int(self.min_field_len))
        object.__setattr__(self, "weighted_insertions", bool(self.weighted_insertions))

    def as_dict(self) -> dict[str, float | bool]:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}

    @property
    def scoring(self):
        from .align import ScoringConfig
        return ScoringConfig(self.match, self.mismatch, self.gap)

    @property
    def msa_scoring(self):
        from .align import ScoringConfig
        return ScoringConfig(self.match, self.mismatch, self.msa_gap)

    @property
    def wildcard_scoring(self):
        from .matcher import WildcardScoringConfig
        return WildcardScoringConfig(self.match, self.mismatch, self.wildcard, self.gap,
                                     self.weighted_insertions)


@dataclass(frozen=True)
class ClusterModel:
    cluster_id: int
    member_indices: tuple[int, ...]
    prototype: ConsensusPrototype
    weights: WeightVector
    centroid: Transaction
    fields: tuple[SymmetricField, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "member_indices", tuple(sorted(self.member_indices)))
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(self.prototype) != len(self.weights):
            raise ValueError(
                f"cluster {self.cluster_id}: prototype length {len(self.prototype)} "
                f"!= weight length {len(self.weights)}")
        if self.centroid.index not in self.member_indices:
            raise ValueError(f"cluster {self.cluster_id}: centroid is not a member")
        req, resp = self.centroid.request, self.centroid.response
        for fld in self.fields:
            (rs, re), (ss, se) = fld.request_range, fld.response_range
            if not (req[rs:re] == resp[ss:se] == fld.content):
                raise ValueError(f"cluster {self.cluster_id}: symmetric field does not match centroid")


@dataclass(frozen=True)
class EmulationModel:
    params: AnalysisParams
    clusters: tuple[ClusterModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        ids = [c.cluster_id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate cluster ids in model")

    def cluster(self, cluster_id: int) -> ClusterModel:
        for c in self.clusters:
            if c.cluster_id == cluster_id:
                return c
        raise KeyError(cluster_id)


# --------------------------------------------------------------------------
# serialization

class ModelFormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (at offset {offset})")


class ModelVersionError(ModelFormatError):
    pass


_PARAM_ORDER = [f.name for f in dc_fields(AnalysisParams)]


def _blob(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def serialize_model(model: EmulationModel) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<H", FORMAT_VERSION))
    params = model.params.as_dict()
    out.write(struct.pack("<H", len(params)))
    for name in _PARAM_ORDER:
        raw = name.encode()
        out.write(struct.pack("<B", len(raw)) + raw + struct.pack("<d", float(params[name])))
    out.write(struct.pack("<I", len(model.clusters)))
    for c in model.clusters:
        out.write(struct.pack("<q", c.cluster_id))
        out.write(struct.pack("<I", len(c.member_indices)))
        out.write(struct.pack(f"<{len(c.member_indices)}q", *c.member_indices))
        out.write(struct.pack("<q", c.centroid.index))
        out.write(_blob(c.centroid.request))
        out.write(_blob(c.centroid.response))
        n = len(c.prototype)
        out.write(struct.pack("<I", n))
        out.write(struct.pack(f"<{n}h", *c.prototype.symbols))
        out.write(struct.pack(f"<{n}I", *c.prototype.source_columns))
        out.write(struct.pack(f"<{n}d", *c.weights.weights))
        out.write(struct.pack(f"<{n}d", *c.weights.entropies))
        out.write(struct.pack("<I", len(c.fields)))
        for fld in c.fields:
            out.write(struct.pack("<4I", *fld.request_range, *fld.response_range))
    out.write(TRAILER)
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise ModelFormatError(f"truncated stream: wanted {n} bytes", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        size = struct.calcsize("<" + fmt)
        return struct.unpack("<" + fmt, self.take(size))

    def one(self, fmt: str):
        return self.unpack(fmt)[0]


def deserialize_model(data: bytes) -> EmulationModel:
    r = _Reader(bytes(data))
    if r.take(4) != MAGIC:
        raise ModelFormatError("bad magic, not an emulation model", 0)
    version = r.one("H")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format version {version} (expected {FORMAT_VERSION})", 4)
    params = {}
    for _ in range(r.one("H")):
        name = r.take(r.one("B")).decode("utf-8", errors="replace")
        params[name] = r.one("d")
    unknown = set(params) - set(_PARAM_ORDER)
    if unknown:
        raise ModelFormatError(f"unknown parameters {sorted(unknown)}", r.pos)
    try:
        ap = AnalysisParams(**params)
    except ValueError as exc:
        raise ModelFormatError(f"invalid parameters: {exc}", r.pos) from exc

    clusters = []
    for _ in range(r.one("I")):
        start = r.pos
        cid = r.one("q")
        members = r.unpack(f"{r.one('I')}q")
        cidx = r.one("q")
        req = r.take(r.one("I"))
        resp = r.take(r.one("I"))
        n = r.one("I")
        symbols = r.unpack(f"{n}h")
        cols = r.unpack(f"{n}I")
        weights = r.unpack(f"{n}d")
        entropies = r.unpack(f"{n}d")
        flds = []
        for _ in range(r.one("I")):
            rs, re, ss, se = r.unpack("4I")
            flds.append(SymmetricField((rs, re), (ss, se), req[rs:re]))
        try:
            clusters.append(ClusterModel(
                cluster_id=cid,
                member_indices=members,
                prototype=ConsensusPrototype(symbols, cols),
                weights=WeightVector(weights, entropies),
                centroid=Transaction(cidx, req, resp),
                fields=tuple(flds),
            ))
        except ValueError as exc:
            raise ModelFormatError(f"invalid cluster record: {exc}", start) from exc
    if r.take(4) != TRAILER:
        raise ModelFormatError("missing trailer", r.pos - 4)
    if r.pos != len(r.data):
        raise ModelFormatError("trailing bytes after model", r.pos)
    try:
        return EmulationModel(ap, tuple(clusters))
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc


def save_model(model: EmulationModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))


def load_model(path) -> EmulationModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
