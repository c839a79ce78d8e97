"""Trace library files and synthetic directory-protocol generators.

Trace file format: UTF-8 text, one JSON object per line. The first line is
a header::

    {"format": "opaque-trace", "version": 1, "name": "...", "source": "..."}

followed by one record per transaction::

    {"index": 24, "request": "<base64>", "response": "<base64>",
     "op_type": "A", "critical_fields": [{"offset": 4, "length": 2}]}

``op_type`` and ``critical_fields`` are optional.
"""

from __future__ import annotations

import base64
import binascii
import json
import os
import random
import struct
from dataclasses import dataclass, field

from .model import Label, Transaction, TransactionLibrary

TRACE_FORMAT = "opaque-trace"
TRACE_VERSION = 1


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def _record(t: Transaction) -> dict:
    rec = {
        "index": t.index,
        "request": base64.b64encode(t.request).decode("ascii"),
        "response": base64.b64encode(t.response).decode("ascii"),
    }
    if t.label is not None:
        if t.label.op_type is not None:
            rec["op_type"] = t.label.op_type
        rec["critical_fields"] = [{"offset": o, "length": n} for o, n in t.label.critical_fields]
    return rec


def dumps_library(lib: TransactionLibrary) -> str:
    lines = [json.dumps({"format": TRACE_FORMAT, "version": TRACE_VERSION,
                         "name": lib.name, "source": lib.source}, sort_keys=True)]
    lines += [json.dumps(_record(t), sort_keys=True) for t in lib]
    return "\n".join(lines) + "\n"


def save_library(lib: TransactionLibrary, path, overwrite: bool = True) -> None:
    if not overwrite and os.path.exists(path):
        raise FileExistsError(f"{path} exists and overwrite is disabled")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_library(lib))


def _b64(value, lineno: int, what: str) -> bytes:
    if not isinstance(value, str):
        raise TraceFormatError(f"{what} must be a base64 string", lineno)
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise TraceFormatError(f"invalid base64 in {what}: {exc}", lineno) from exc


def loads_library(text: str) -> TransactionLibrary:
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise TraceFormatError("empty library")
    header = None
    transactions = []
    seen: set[int] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"malformed record: {exc.msg}", lineno) from exc
        if not isinstance(obj, dict):
            raise TraceFormatError("record is not an object", lineno)
        if header is None:
            if obj.get("format") != TRACE_FORMAT:
                raise TraceFormatError("missing opaque-trace header", lineno)
            if obj.get("version") != TRACE_VERSION:
                raise TraceFormatError(f"unsupported trace version {obj.get('version')}", lineno)
            header = obj
            continue
        idx = obj.get("index")
        if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
            raise TraceFormatError("index must be a non-negative integer", lineno)
        if idx in seen:
            raise TraceFormatError(f"duplicate index {idx}", lineno)
        seen.add(idx)
        req = _b64(obj.get("request"), lineno, "request")
        resp = _b64(obj.get("response"), lineno, "response")
        label = None
        if "op_type" in obj or "critical_fields" in obj:
            crit = []
            for cf in obj.get("critical_fields", []):
                try:
                    off, n = int(cf["offset"]), int(cf["length"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise TraceFormatError("bad critical_fields entry", lineno) from exc
                if off < 0 or n < 0 or off + n > len(resp):
                    raise TraceFormatError("critical field outside response bounds", lineno)
                crit.append((off, n))
            label = Label(obj.get("op_type"), tuple(crit))
        transactions.append(Transaction(idx, req, resp, label))
    if not transactions:
        raise TraceFormatError("empty library")
    return TransactionLibrary(tuple(transactions), header.get("name", ""), header.get("source", ""))


def load_library(path) -> TransactionLibrary:
    with open(path, encoding="utf-8") as fh:
        return loads_library(fh.read())


# --------------------------------------------------------------------------
# synthetic directory protocol

SURNAMES = [
    "Du", "Versteeg", "Schneider", "Han", "Grundy", "Will", "Hine", "Durand",
    "Miao", "Smith", "Nguyen", "Okafor", "Kowalski", "Tanaka", "Rossi", "Garcia",
    "Muller", "Ivanova", "Chen", "Larsen", "Oconnor", "Patel", "Silva", "Dubois",
    "Novak", "Haddad", "Fischer", "Moreau", "Santos", "Yamamoto",
]
GIVEN_NAMES = [
    "Miao", "Steve", "Jun", "John", "Cam", "Jean", "Anna", "Ravi", "Lena", "Omar",
    "Sofia", "Ken", "Ines", "Piotr", "Maya", "Tom", "Aiko", "Luca", "Nina", "Eva",
]

TEXT_OPS = ("S", "A", "M", "D")

# response operation names of the text protocol
RESPONSE_OPS = {"S": "SearchRsp", "A": "AddRsp", "M": "ModifyRsp", "D": "DeleteRsp"}


@dataclass(frozen=True)
class SyntheticProtocolSpec:
    ops: tuple[str, ...] = TEXT_OPS
    count: int = 1000
    seed: int = 0
    variant: str = "text"  # "text" or "binary"
    max_id: int = 9999
    name: str = ""

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not self.ops:
            raise ValueError("at least one operation is required")
        bad = set(self.ops) - set(TEXT_OPS)
        if bad:
            raise ValueError(f"unknown operations {sorted(bad)}; choose from {TEXT_OPS}")
        if self.variant not in ("text", "binary"):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class _Directory:
    """Backing store so that repeated searches return consistent entries."""

    rng: random.Random
    entries: dict[str, tuple[str, str]] = field(default_factory=dict)

    def entry(self, sn: str) -> tuple[str, str]:
        if sn not in self.entries:
            self.entries[sn] = (self.rng.choice(GIVEN_NAMES), self._phone())
        return self.entries[sn]

    def _phone(self) -> str:
        return "".join(self.rng.choice("0123456789") for _ in range(self.rng.randint(6, 8)))


def _text_transaction(index: int, op: str, msg_id: int, rng: random.Random, directory: _Directory):
    sn = rng.choice(SURNAMES)
    gn, mobile = directory.entry(sn)
    head = f"{{id:{msg_id},op:{op}"
    if op == "S":
        req = f"{head},sn:{sn}}}"
        resp = f"{{id:{msg_id},op:SearchRsp,result:Ok,gn:{gn},sn:{sn},mobile:{mobile}}}"
    elif op == "A":
        extra = ""
        if rng.random() < 0.3:
            extra += f",gn:{rng.choice(GIVEN_NAMES)}"
        if rng.random() < 0.3:
            extra += f",postalCode:{rng.randint(1000, 99999)}"
        req = f"{head},sn:{sn},mobile:{directory._phone()}{extra}}}"
        resp = f"{{id:{msg_id},op:AddRsp,result:Ok}}"
    elif op == "M":
        new_mobile = directory._phone()
        req = f"{head},sn:{sn},change:replace;telephone,mobile:{new_mobile}}}"
        resp = f"{{id:{msg_id},op:ModifyRsp,result:Ok,changes:replace;telephone,entryVersion:2}}"
    else:
        req = f"{head},sn:{sn}}}"
        resp = f"{{id:{msg_id},op:DeleteRsp,result:Ok,removedEntries:1,referrals:none}}"
    label = Label(op, ((4, len(str(msg_id))),))
    return Transaction(index, req.encode(), resp.encode(), label)


# binary variant: LDAP-flavoured envelope with single-byte opcodes and
# length-prefixed fields.
#   request  = 0x30 | msg_id u32 BE | opcode | nfields | (tag, len, bytes)*
#   response = 0x30 | msg_id u32 BE | opcode | result | nfields | (tag, len, bytes)*
BIN_REQUEST_OPS = {"S": 0x63, "A": 0x68, "M": 0x66, "D": 0x4A}
BIN_RESPONSE_OPS = {"S": 0x64, "A": 0x69, "M": 0x67, "D": 0x6B}
TAG_SN, TAG_GN, TAG_MOBILE, TAG_DN, TAG_DIAG, TAG_ATTRS = 0x04, 0x05, 0x06, 0x07, 0x08, 0x09


def _tlv(tag: int, value: bytes) -> bytes:
    return bytes([tag, len(value)]) + value


def _bin_message(msg_id: int, opcode: int, body: bytes) -> bytes:
    return b"\x30" + struct.pack(">I", msg_id) + bytes([opcode]) + body


def _binary_transaction(index: int, op: str, msg_id: int, rng: random.Random, directory: _Directory):
    sn = rng.choice(SURNAMES)
    gn, mobile = directory.entry(sn)
    dn = f"cn={sn},ou=people".encode()
    if op == "S":
        fields = [_tlv(TAG_SN, sn.encode())]
        resp_fields = [_tlv(TAG_DN, dn), _tlv(TAG_ATTRS, b"objectClass=inetOrgPerson;person;top"),
                       _tlv(TAG_GN, gn.encode()), _tlv(TAG_SN, sn.encode()), _tlv(TAG_MOBILE, mobile.encode())]
    elif op == "A":
        fields = [_tlv(TAG_SN, sn.encode()), _tlv(TAG_MOBILE, directory._phone().encode())]
        if rng.random() < 0.3:
            fields.append(_tlv(TAG_GN, rng.choice(GIVEN_NAMES).encode()))
        resp_fields = [_tlv(TAG_DIAG, b"")]
    elif op == "M":
        fields = [_tlv(TAG_SN, sn.encode()), _tlv(TAG_MOBILE, directory._phone().encode())]
        resp_fields = [_tlv(TAG_ATTRS, b"mobile;modifyTimestamp"), _tlv(TAG_DIAG, b"modified")]
    else:
        fields = [_tlv(TAG_SN, sn.encode())]
        resp_fields = [_tlv(TAG_DIAG, b"entry removed; subtree intact"), _tlv(TAG_ATTRS, b"\x00\x00\x01")]
    req = _bin_message(msg_id, BIN_REQUEST_OPS[op], bytes([len(fields)]) + b"".join(fields))
    resp = _bin_message(msg_id, BIN_RESPONSE_OPS[op], b"\x00" + bytes([len(resp_fields)]) + b"".join(resp_fields))
    label = Label(op, ((1, 4),))
    return Transaction(index, req, resp, label)


def generate_synthetic(spec: SyntheticProtocolSpec) -> TransactionLibrary:
    """Deterministic directory-service library; labels carry op type and the id field."""
    rng = random.Random(spec.seed)
    directory = _Directory(random.Random(spec.seed + 1))
    make = _text_transaction if spec.variant == "text" else _binary_transaction
    max_id = spec.max_id if spec.variant == "text" else 0x3FFF
    ids = rng.sample(range(1, max_id + 1), spec.count) if spec.count <= max_id else [
        rng.randint(1, max_id) for _ in range(spec.count)]
    txs = []
    for i in range(spec.count):
        op = rng.choice(spec.ops)
        txs.append(make(i, op, ids[i], rng, directory))
    name = spec.name or f"synthetic-{spec.variant}-{spec.count}-seed{spec.seed}"
    return TransactionLibrary(tuple(txs), name, f"generate_synthetic(ops={','.join(spec.ops)}, seed={spec.seed})")


# the running example library (request of #3106 as aligned in the worked example)
WORKED_EXAMPLE = (
    (1, "{id:1,op:S,sn:Du}", "{id:1,op:SearchRsp,result:Ok,gn:Miao,sn:Du,mobile:5362634}"),
    (13, "{id:13,op:S,sn:Versteeg}", "{id:13,op:SearchRsp,result:Ok,gn:Steve,sn:Versteeg,mobile:9374723}"),
    (24, "{id:24,op:A,sn:Schneider,mobile:123456}", "{id:24,op:AddRsp,result:Ok}"),
    (275, "{id:275,op:S,sn:Han}", "{id:275,op:SearchRsp,result:Ok,gn:Jun,sn:Han,mobile:33333333}"),
    (490, "{id:490,op:S,sn:Grundy}", "{id:490,op:SearchRsp,result:Ok,gn:John,sn:Grundy,mobile:44444444}"),
    (2273, "{id:2273,op:S,sn:Schneider}", "{id:2273,op:SearchRsp,result:Ok,sn:Schneider,mobile:123456}"),
    (2487, "{id:2487,op:A,sn:Will}", "{id:2487,op:AddRsp,result:Ok}"),
    (3106, "{id:3106,op:A,sn:Hine,gn:Cameron,postalCode:33589}", "{id:3106,op:AddRsp,result:Ok}"),
)


def worked_example_library() -> TransactionLibrary:
    txs = []
    for idx, req, resp in WORKED_EXAMPLE:
        op = req.split("op:")[1][0]
        id_len = len(resp.split(",")[0]) - len("{id:")
        txs.append(Transaction(idx, req.encode(), resp.encode(), Label(op, ((4, id_len),))))
    return TransactionLibrary(tuple(txs), "directory-example", "running example, 8 transactions")
