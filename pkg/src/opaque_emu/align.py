"""Global (Needleman-Wunsch) alignment over octet sequences.

All dynamic programs in the package funnel through two kernels:

* ``_nw_fill`` / ``_nw_traceback`` work on an explicit column-pair score
  matrix plus per-position gap costs, so the same code serves byte/byte,
  profile/profile and prototype/request alignment.
* ``_nw_identity`` is a specialised byte kernel that also counts identical
  columns, used in bulk by the distance-matrix builders.

Traceback tie-break is fixed: diagonal, then up (gap in ``b``), then left
(gap in ``a``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .model import GAP, as_octets


@dataclass(frozen=True)
class ScoringConfig:
    """Match / mismatch / linear-gap scores for plain byte alignment."""

    match: float = 1.0
    mismatch: float = -1.0
    gap: float = -1.0

    def __post_init__(self):
        if not self.match > 0:
            raise ValueError(f"match score must be > 0, got {self.match}")
        if self.mismatch > 0:
            raise ValueError(f"mismatch score must be <= 0, got {self.mismatch}")
        if self.gap > 0:
            raise ValueError(f"gap penalty must be <= 0, got {self.gap}")


DEFAULT_SCORING = ScoringConfig()


@dataclass(frozen=True)
class Alignment:
    aligned_a: np.ndarray  # int16, octets or GAP
    aligned_b: np.ndarray
    score: float

    def __len__(self):
        return len(self.aligned_a)

    @property
    def identities(self) -> int:
        return int(np.sum((self.aligned_a == self.aligned_b) & (self.aligned_a != GAP)))


# --------------------------------------------------------------------------
# generic kernels

@numba.njit(cache=True)
def _nw_fill(sub, gap_a, gap_b):
    n, m = sub.shape
    H = np.empty((n + 1, m + 1), dtype=np.float64)
    H[0, 0] = 0.0
    for i in range(1, n + 1):
        H[i, 0] = H[i - 1, 0] + gap_a[i - 1]
    for j in range(1, m + 1):
        H[0, j] = H[0, j - 1] + gap_b[j - 1]
    for i in range(1, n + 1):
        ga = gap_a[i - 1]
        for j in range(1, m + 1):
            best = H[i - 1, j - 1] + sub[i - 1, j - 1]
            up = H[i - 1, j] + ga
            if up > best:
                best = up
            left = H[i, j - 1] + gap_b[j - 1]
            if left > best:
                best = left
            H[i, j] = best
    return H


@numba.njit(cache=True)
def _nw_traceback(H, sub, gap_a, gap_b):
    """Return (ia, ib) index arrays; -1 marks a gap on that side."""
    n, m = sub.shape
    ia = np.empty(n + m, dtype=np.int64)
    ib = np.empty(n + m, dtype=np.int64)
    k = 0
    i, j = n, m
    while i > 0 or j > 0:
        h = H[i, j]
        if i > 0 and j > 0 and abs(H[i - 1, j - 1] + sub[i - 1, j - 1] - h) <= 1e-9 * (1.0 + abs(h)):
            i -= 1
            j -= 1
            ia[k] = i
            ib[k] = j
        elif i > 0 and abs(H[i - 1, j] + gap_a[i - 1] - h) <= 1e-9 * (1.0 + abs(h)):
            i -= 1
            ia[k] = i
            ib[k] = -1
        else:
            j -= 1
            ia[k] = -1
            ib[k] = j
        k += 1
    return ia[:k][::-1].copy(), ib[:k][::-1].copy()


@numba.njit(cache=True)
def _nw_score_only(sub, gap_a, gap_b):
    n, m = sub.shape
    prev = np.empty(m + 1, dtype=np.float64)
    cur = np.empty(m + 1, dtype=np.float64)
    prev[0] = 0.0
    for j in range(1, m + 1):
        prev[j] = prev[j - 1] + gap_b[j - 1]
    for i in range(1, n + 1):
        cur[0] = prev[0] + gap_a[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1] + sub[i - 1, j - 1]
            up = prev[j] + gap_a[i - 1]
            if up > best:
                best = up
            left = cur[j - 1] + gap_b[j - 1]
            if left > best:
                best = left
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def align_matrix(sub: np.ndarray, gap_a: np.ndarray, gap_b: np.ndarray):
    """Align two abstract sequences given column scores and gap costs.

    Returns ``(score, ia, ib)`` where ``ia``/``ib`` hold source positions per
    alignment column, ``-1`` for a gap.
    """
    sub = np.ascontiguousarray(sub, dtype=np.float64)
    gap_a = np.ascontiguousarray(gap_a, dtype=np.float64)
    gap_b = np.ascontiguousarray(gap_b, dtype=np.float64)
    H = _nw_fill(sub, gap_a, gap_b)
    ia, ib = _nw_traceback(H, sub, gap_a, gap_b)
    return float(H[-1, -1]), ia, ib


def score_matrix(sub: np.ndarray, gap_a: np.ndarray, gap_b: np.ndarray) -> float:
    """Optimal score only, two-row storage."""
    return float(_nw_score_only(
        np.ascontiguousarray(sub, dtype=np.float64),
        np.ascontiguousarray(gap_a, dtype=np.float64),
        np.ascontiguousarray(gap_b, dtype=np.float64),
    ))


# --------------------------------------------------------------------------
# byte alignment

def _byte_problem(a: np.ndarray, b: np.ndarray, cfg: ScoringConfig):
    sub = np.where(a[:, None] == b[None, :], cfg.match, cfg.mismatch).astype(np.float64)
    sub = sub.reshape(len(a), len(b))
    return sub, np.full(len(a), cfg.gap), np.full(len(b), cfg.gap)


def _gapped(seq: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = np.full(len(idx), GAP, dtype=np.int16)
    keep = idx >= 0
    out[keep] = seq[idx[keep]]
    return out


def needleman_wunsch(a, b, cfg: ScoringConfig = DEFAULT_SCORING) -> Alignment:
    """Globally optimal alignment of two octet sequences."""
    a = as_octets(a)
    b = as_octets(b)
    score, ia, ib = align_matrix(*_byte_problem(a, b, cfg))
    return Alignment(_gapped(a, ia), _gapped(b, ib), score)


def alignment_map(a, b, cfg: ScoringConfig = DEFAULT_SCORING):
    """Position map of the optimal alignment: ``(ia, ib)`` with -1 for gaps."""
    a = as_octets(a)
    b = as_octets(b)
    _, ia, ib = align_matrix(*_byte_problem(a, b, cfg))
    return ia, ib


def alignment_score(a, b, cfg: ScoringConfig = DEFAULT_SCORING) -> float:
    a = as_octets(a)
    b = as_octets(b)
    return score_matrix(*_byte_problem(a, b, cfg))


@numba.njit(cache=True)
def _nw_identity(a, b, M, D, G):
    """Byte NW returning (score, identical columns, alignment length)."""
    n = a.shape[0]
    m = b.shape[0]
    H = np.empty((n + 1, m + 1), dtype=np.float64)
    for i in range(n + 1):
        H[i, 0] = i * G
    for j in range(m + 1):
        H[0, j] = j * G
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = H[i - 1, j - 1] + (M if ai == b[j - 1] else D)
            up = H[i - 1, j] + G
            if up > best:
                best = up
            left = H[i, j - 1] + G
            if left > best:
                best = left
            H[i, j] = best
    i, j = n, m
    ident = 0
    length = 0
    while i > 0 or j > 0:
        h = H[i, j]
        if i > 0 and j > 0:
            same = a[i - 1] == b[j - 1]
            if abs(H[i - 1, j - 1] + (M if same else D) - h) <= 1e-9 * (1.0 + abs(h)):
                if same:
                    ident += 1
                i -= 1
                j -= 1
                length += 1
                continue
        if i > 0 and abs(H[i - 1, j] + G - h) <= 1e-9 * (1.0 + abs(h)):
            i -= 1
        else:
            j -= 1
        length += 1
    return H[n, m], ident, length


@numba.njit(cache=True)
def _swap_first(a, b):
    """Canonical argument order (shorter first, then lexicographic) so ratios are symmetric."""
    if a.shape[0] != b.shape[0]:
        return a.shape[0] > b.shape[0]
    for k in range(a.shape[0]):
        if a[k] != b[k]:
            return a[k] > b[k]
    return False


@numba.njit(cache=True)
def _ratio(a, b, M, D, G):
    if a.shape[0] == 0 and b.shape[0] == 0:
        return 1.0
    if _swap_first(a, b):
        a, b = b, a
    _, ident, length = _nw_identity(a, b, M, D, G)
    return ident / length


@numba.njit(cache=True)
def _ratio_pairs(data, offsets, pi, pj, M, D, G):
    out = np.empty(pi.shape[0], dtype=np.float64)
    for k in range(pi.shape[0]):
        i = pi[k]
        j = pj[k]
        out[k] = _ratio(data[offsets[i]:offsets[i + 1]], data[offsets[j]:offsets[j + 1]], M, D, G)
    return out


def similarity_ratio(a, b, cfg: ScoringConfig = DEFAULT_SCORING) -> float:
    """Identical aligned columns divided by alignment length (1.0 for two empties)."""
    return float(_ratio(as_octets(a), as_octets(b), cfg.match, cfg.mismatch, cfg.gap))


def response_distance(t1, t2, cfg: ScoringConfig = DEFAULT_SCORING) -> float:
    return 1.0 - similarity_ratio(t1.response, t2.response, cfg)


def distance_matrix(seqs, cfg: ScoringConfig = DEFAULT_SCORING) -> np.ndarray:
    """Symmetric ``1 - similarity_ratio`` matrix over a list of octet sequences.

    Exactly n(n-1)/2 alignments are computed.
    """
    arrays = [as_octets(s) for s in seqs]
    n = len(arrays)
    out = np.zeros((n, n), dtype=np.float64)
    if n < 2:
        return out
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(x) for x in arrays])
    data = np.concatenate(arrays) if offsets[-1] else np.zeros(0, dtype=np.uint8)
    pi, pj = np.triu_indices(n, k=1)
    ratios = _ratio_pairs(data, offsets, pi.astype(np.int64), pj.astype(np.int64),
                          cfg.match, cfg.mismatch, cfg.gap)
    d = 1.0 - ratios
    out[pi, pj] = d
    out[pj, pi] = d
    return out


@dataclass(frozen=True)
class PackedSequences:
    """Many octet sequences in one buffer, for one-against-many scans."""

    data: np.ndarray
    offsets: np.ndarray

    @classmethod
    def pack(cls, seqs) -> "PackedSequences":
        arrays = [as_octets(s) for s in seqs]
        offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(x) for x in arrays])
        data = np.concatenate(arrays) if offsets[-1] else np.zeros(0, dtype=np.uint8)
        return cls(data, offsets)

    def __len__(self):
        return len(self.offsets) - 1


def similarity_ratios(query, packed: PackedSequences, cfg: ScoringConfig = DEFAULT_SCORING) -> np.ndarray:
    """``similarity_ratio(query, s)`` for every packed sequence ``s``."""
    q = as_octets(query)
    n = len(packed)
    data = np.concatenate([q, packed.data])
    offsets = np.concatenate([[0], packed.offsets + len(q)]).astype(np.int64)
    pi = np.zeros(n, dtype=np.int64)
    pj = np.arange(1, n + 1, dtype=np.int64)
    return _ratio_pairs(data, offsets, pi, pj, cfg.match, cfg.mismatch, cfg.gap)
