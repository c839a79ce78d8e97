"""Progressive multiple sequence alignment of a cluster's requests.

1. all pairs aligned -> similarity-ratio distance matrix
2. neighbour-joining guide tree (lowest index pair wins ties)
3. profiles merged from the leaves to the root

Profile columns are scored average-of-pairs: byte/byte -> M or D,
byte/gap -> G, gap/gap -> 0, summed over cross-profile row pairs and divided
by the product of row counts. Gaps inserted at inner nodes are never revisited.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import DEFAULT_SCORING, ScoringConfig, align_matrix, distance_matrix
from .model import GAP, as_octets, render_symbols

_NSYM = 257  # 256 octets + GAP in the last slot


@dataclass(frozen=True)
class GuideTree:
    """Binary tree node; leaves carry the row number of the input sequence."""

    leaf: int | None = None
    left: "GuideTree | None" = None
    right: "GuideTree | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    def leaves(self) -> list[int]:
        if self.is_leaf:
            return [self.leaf]
        return self.left.leaves() + self.right.leaves()

    def splits(self) -> set[frozenset[int]]:
        """Leaf sets below every internal node."""
        if self.is_leaf:
            return set()
        return {frozenset(self.leaves())} | self.left.splits() | self.right.splits()

    def __str__(self):
        if self.is_leaf:
            return str(self.leaf)
        return f"({self.left},{self.right})"


@dataclass(frozen=True)
class Profile:
    rows: np.ndarray  # (k, L) int16, octets or GAP
    row_origin: tuple[int, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int16)
        if rows.ndim != 2 or rows.shape[0] != len(self.row_origin):
            raise ValueError("profile rows do not match row_origin")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "row_origin", tuple(self.row_origin))

    @classmethod
    def single(cls, seq, origin: int = 0) -> "Profile":
        return cls(as_octets(seq).astype(np.int16)[None, :], (origin,))

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    @property
    def length(self) -> int:
        return self.rows.shape[1]

    def degapped(self, r: int) -> bytes:
        row = self.rows[r]
        return bytes(row[row != GAP].astype(np.uint8))

    def counts(self) -> np.ndarray:
        """(L, 257) symbol counts per column, GAP in the last slot."""
        sym = np.where(self.rows == GAP, _NSYM - 1, self.rows).astype(np.int64)
        out = np.zeros((self.length, _NSYM), dtype=np.int64)
        cols = np.broadcast_to(np.arange(self.length), sym.shape)
        np.add.at(out, (cols.ravel(), sym.ravel()), 1)
        return out

    def render(self) -> str:
        """One line per row; '★' for gaps on printable payloads, hex otherwise."""
        printable = all(s == GAP or 0x20 <= s < 0x7F for s in self.rows.ravel())
        lines = []
        for origin, row in zip(self.row_origin, self.rows):
            if printable:
                body = render_symbols(row)
            else:
                body = " ".join("--" if s == GAP else f"{s:02x}" for s in row)
            lines.append(f"{origin:>8}  {body}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# guide tree

def build_guide_tree(values) -> GuideTree:
    """Neighbour joining on a distance matrix; ties join the lowest index pair.

    Pairs are ranked in row-major order over the active nodes (original
    leaves first, then joined nodes in creation order).
    """
    d = np.array(values, dtype=np.float64)
    n = d.shape[0]
    if n == 0:
        raise ValueError("cannot build a guide tree over zero sequences")
    nodes: list[GuideTree] = [GuideTree(leaf=i) for i in range(n)]
    while len(nodes) > 2:
        r = len(nodes)
        sums = d.sum(axis=1)
        q = (r - 2) * d - sums[:, None] - sums[None, :]
        q[np.tril_indices(r)] = np.inf
        flat = np.flatnonzero(q.ravel() <= q.min() + 1e-12)[0]
        i, j = divmod(int(flat), r)
        du = 0.5 * (d[i] + d[j] - d[i, j])
        keep = np.array([k for k in range(r) if k not in (i, j)])
        joined = GuideTree(left=nodes[i], right=nodes[j])
        nxt = np.zeros((r - 1, r - 1))
        nxt[:-1, :-1] = d[np.ix_(keep, keep)]
        nxt[-1, :-1] = nxt[:-1, -1] = du[keep]
        d = nxt
        nodes = [nodes[k] for k in keep] + [joined]
    if len(nodes) == 1:
        return nodes[0]
    return GuideTree(left=nodes[0], right=nodes[1])


# --------------------------------------------------------------------------
# profile alignment

def _column_scores(c1: np.ndarray, k1: int, c2: np.ndarray, k2: int, cfg: ScoringConfig):
    g1, g2 = c1[:, -1].astype(np.float64), c2[:, -1].astype(np.float64)
    b1, b2 = k1 - g1, k2 - g2
    same = c1[:, :-1].astype(np.float64) @ c2[:, :-1].T.astype(np.float64)
    pairs = np.outer(b1, b2)
    total = (cfg.match * same + cfg.mismatch * (pairs - same)
             + cfg.gap * (np.outer(b1, g2) + np.outer(g1, b2)))
    sub = total / (k1 * k2)
    gap_a = cfg.gap * b1 / k1  # p1 column against an all-gap column
    gap_b = cfg.gap * b2 / k2
    return sub, gap_a, gap_b


def _drop_gap_columns(rows: np.ndarray) -> np.ndarray:
    keep = ~np.all(rows == GAP, axis=0)
    return rows[:, keep]


def align_profiles(p1: Profile, p2: Profile, cfg: ScoringConfig = DEFAULT_SCORING) -> Profile:
    sub, gap_a, gap_b = _column_scores(p1.counts(), p1.k, p2.counts(), p2.k, cfg)
    _, ia, ib = align_matrix(sub, gap_a, gap_b)
    L = len(ia)
    top = np.full((p1.k, L), GAP, dtype=np.int16)
    bottom = np.full((p2.k, L), GAP, dtype=np.int16)
    m1, m2 = ia >= 0, ib >= 0
    top[:, m1] = p1.rows[:, ia[m1]]
    bottom[:, m2] = p2.rows[:, ib[m2]]
    rows = _drop_gap_columns(np.vstack([top, bottom]))
    return Profile(rows, p1.row_origin + p2.row_origin)


def progressive_align(requests, tree: GuideTree | None = None,
                      cfg: ScoringConfig = DEFAULT_SCORING,
                      origins=None) -> Profile:
    """Align all requests following ``tree`` (built here when omitted).

    Rows of the result are in input order.
    """
    seqs = [as_octets(r) for r in requests]
    if not seqs:
        raise ValueError("cannot align an empty cluster")
    origins = tuple(range(len(seqs))) if origins is None else tuple(origins)
    if tree is None:
        tree = build_guide_tree(distance_matrix(seqs, cfg))
    if sorted(tree.leaves()) != list(range(len(seqs))):
        raise ValueError("guide tree leaves do not match the request list")

    def walk(node: GuideTree) -> Profile:
        if node.is_leaf:
            return Profile.single(seqs[node.leaf], node.leaf)
        return align_profiles(walk(node.left), walk(node.right), cfg)

    merged = walk(tree)
    order = np.argsort(merged.row_origin, kind="stable")
    return Profile(merged.rows[order], tuple(origins[merged.row_origin[i]] for i in order))
