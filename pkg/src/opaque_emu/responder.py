"""Response synthesis from a cluster centroid with symmetric-field substitution."""

from __future__ import annotations

import numpy as np

from .align import DEFAULT_SCORING, ScoringConfig, alignment_map
from .cluster import DistanceMatrix
from .model import Cluster, SymmetricField, Transaction, as_octets


def find_centroid(cluster: Cluster, matrix: DistanceMatrix) -> int:
    """Member with the least summed response distance to the others (ties: lowest index)."""
    if not cluster.member_indices:
        raise ValueError("empty cluster")
    members = sorted(cluster.member_indices)
    sub = matrix.sub(members).values
    totals = sub.sum(axis=1)
    return members[int(np.argmin(totals))]  # argmin returns the first minimum


def _longest_common(a: np.ndarray, b: np.ndarray, used_a: np.ndarray, used_b: np.ndarray):
    """Longest common substring over unused positions: (length, start_a, start_b).

    Ties prefer the smallest start in ``a``, then in ``b``.
    """
    best = (0, 0, 0)
    prev = np.zeros(len(b) + 1, dtype=np.int64)
    for i in range(len(a)):
        if used_a[i]:
            prev = np.zeros(len(b) + 1, dtype=np.int64)
            continue
        hit = (b == a[i]) & ~used_b
        cur = np.zeros(len(b) + 1, dtype=np.int64)
        cur[1:] = np.where(hit, prev[:-1] + 1, 0)
        j = int(np.argmax(cur))
        length = int(cur[j])
        if length > best[0]:  # strict: earlier start in a wins ties
            best = (length, i - length + 1, j - length)
        prev = cur
    return best


def find_symmetric_fields(request, response, min_field_len: int = 3) -> list[SymmetricField]:
    """Greedy longest-first common substrings, non-overlapping on both sides."""
    if min_field_len < 1:
        raise ValueError("min_field_len must be >= 1")
    a, b = as_octets(request), as_octets(response)
    used_a = np.zeros(len(a), dtype=bool)
    used_b = np.zeros(len(b), dtype=bool)
    fields = []
    while True:
        length, sa, sb = _longest_common(a, b, used_a, used_b)
        if length < min_field_len:
            break
        used_a[sa:sa + length] = True
        used_b[sb:sb + length] = True
        fields.append(SymmetricField((sa, sa + length), (sb, sb + length), bytes(a[sa:sa + length])))
    fields.sort(key=lambda fld: fld.request_range)
    return fields


def trim_fields(fields, structural) -> list[SymmetricField]:
    """Drop leading and trailing field bytes that sit on structural request positions.

    ``structural[i]`` marks centroid request byte i as constant across the
    cluster. Echoing such bytes is pointless and, when the field spills into
    the response header, corrupts it (an "op:A" field turning "AddRsp" into
    "SddRsp"). Fields with no variable byte are dropped.
    """
    out = []
    for fld in fields:
        (rs, re), (ss, se) = fld.request_range, fld.response_range
        lo, hi = rs, re
        while lo < hi and structural[lo]:
            lo += 1
        while hi > lo and structural[hi - 1]:
            hi -= 1
        if lo == hi:
            continue
        shift = lo - rs
        out.append(SymmetricField((lo, hi), (ss + shift, ss + shift + hi - lo), fld.content[shift:shift + hi - lo]))
    return out


def _live_span(ia: np.ndarray, ib: np.ndarray, start: int, end: int):
    """Live-request slice aligned to centroid-request positions [start, end).

    Live bytes inserted directly before or after the field belong to it
    ("Han" against "Hine").
    """
    cols = np.flatnonzero((ia >= start) & (ia < end))
    if len(cols) == 0:
        return None
    first, last = cols[0], cols[-1]
    while first > 0 and ia[first - 1] < 0:
        first -= 1
    while last + 1 < len(ia) and ia[last + 1] < 0:
        last += 1
    live = ib[first:last + 1]
    live = live[live >= 0]
    if len(live) == 0:
        return None
    return int(live[0]), int(live[-1]) + 1


def generate_response(centroid: Transaction, fields, live_request,
                      cfg: ScoringConfig = DEFAULT_SCORING) -> bytes:
    """Centroid response with each symmetric field replaced by the aligned live bytes.

    A field whose request bytes all align to gaps keeps its recorded bytes.
    """
    fields = sorted(fields, key=lambda fld: fld.response_range)
    if not fields:
        return centroid.response
    live = bytes(live_request)
    ia, ib = alignment_map(centroid.request, live, cfg)
    out = bytearray()
    pos = 0
    resp = centroid.response
    for fld in fields:
        ss, se = fld.response_range
        out += resp[pos:ss]
        span = _live_span(ia, ib, *fld.request_range)
        out += fld.content if span is None else live[span[0]:span[1]]
        pos = se
    out += resp[pos:]
    return bytes(out)
