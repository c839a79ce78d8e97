"""Transaction clustering by response distance.

VAT only orders the points (Prim-style: start at an endpoint of the largest
distance, then repeatedly take the unvisited point nearest to the visited
set). Clusters are emitted by cutting that order wherever the joining edge
exceeds ``cut_threshold``; the resulting segments are exactly the
single-linkage components at that threshold.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .align import DEFAULT_SCORING, ScoringConfig, distance_matrix
from .model import Cluster, TransactionLibrary


@dataclass(frozen=True)
class DistanceMatrix:
    indices: tuple[int, ...]  # transaction index for each row
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        v = np.asarray(self.values, dtype=np.float64)
        n = len(self.indices)
        if v.shape != (n, n):
            raise ValueError(f"matrix shape {v.shape} does not match {n} indices")
        if not np.allclose(v, v.T) or np.any(np.diag(v) != 0):
            raise ValueError("distance matrix must be symmetric with zero diagonal")
        if n and (v.min() < -1e-12 or v.max() > 1 + 1e-12):
            raise ValueError("distances must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return len(self.indices)

    def position(self, index: int) -> int:
        return self.indices.index(index)

    def sub(self, indices) -> "DistanceMatrix":
        pos = {t: p for p, t in enumerate(self.indices)}
        rows = [pos[i] for i in indices]
        return DistanceMatrix(tuple(indices), self.values[np.ix_(rows, rows)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([""] + list(self.indices))
            for idx, row in zip(self.indices, self.values):
                w.writerow([idx] + [f"{x:.6f}" for x in row])


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple[Cluster, ...]

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        seen: set[int] = set()
        for c in self.clusters:
            if seen & c.member_indices:
                raise ValueError("clusters overlap")
            seen |= c.member_indices

    @property
    def assignment(self) -> dict[int, int]:
        return {i: c.id for c in self.clusters for i in c.member_indices}

    def __len__(self):
        return len(self.clusters)

    def members(self) -> list[list[int]]:
        return [sorted(c.member_indices) for c in self.clusters]


def build_response_distance_matrix(lib: TransactionLibrary,
                                   cfg: ScoringConfig = DEFAULT_SCORING) -> DistanceMatrix:
    if len(lib) == 0:
        raise ValueError("empty library")
    values = distance_matrix([t.response for t in lib], cfg)
    return DistanceMatrix(tuple(t.index for t in lib), values)


def vat_order(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """VAT reordering; returns (order, joining edge length per step)."""
    n = values.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    start = int(np.argmax(values)) // n  # first max, row-major: lowest index wins ties
    order = [start]
    edges = [0.0]
    visited = np.zeros(n, dtype=bool)
    visited[start] = True
    best = values[start].copy()
    for _ in range(n - 1):
        cand = np.where(visited, np.inf, best)
        nxt = int(np.argmin(cand))
        order.append(nxt)
        edges.append(float(cand[nxt]))
        visited[nxt] = True
        best = np.minimum(best, values[nxt])
    return np.asarray(order), np.asarray(edges)


def cluster_transactions(matrix: DistanceMatrix, cut_threshold: float = 0.45) -> ClusterSet:
    """Cut the VAT chain where the joining distance exceeds ``cut_threshold``.

    Cluster ids are assigned in order of each cluster's smallest member index.
    """
    order, edges = vat_order(matrix.values)
    groups: list[list[int]] = []
    for pos, edge in zip(order, edges):
        if not groups or edge > cut_threshold:
            groups.append([])
        groups[-1].append(matrix.indices[pos])
    groups.sort(key=min)
    return ClusterSet(tuple(Cluster(cid, frozenset(g)) for cid, g in enumerate(groups)))


def clusters_from_labels(lib: TransactionLibrary) -> ClusterSet:
    """Ground-truth partition by ``label.op_type`` (evaluation helper)."""
    groups: dict[str, list[int]] = {}
    for t in lib:
        if t.label is None or t.label.op_type is None:
            raise ValueError(f"transaction {t.index} has no op_type label")
        groups.setdefault(t.label.op_type, []).append(t.index)
    ordered = sorted(groups.values(), key=min)
    return ClusterSet(tuple(Cluster(cid, frozenset(g)) for cid, g in enumerate(ordered)))


def inject_noise(clusters: ClusterSet, ratio: float, seed: int) -> ClusterSet:
    """Move ``ceil(ratio * n)`` transactions to a random different cluster.

    Clusters emptied by the moves are dropped so the result stays a partition.
    """
    if not 0 <= ratio <= 1:
        raise ValueError(f"noise ratio must be in [0, 1], got {ratio}")
    if len(clusters) < 2:
        raise ValueError("noise injection needs at least two clusters")
    assignment = clusters.assignment
    everyone = sorted(assignment)
    count = math.ceil(ratio * len(everyone) - 1e-9)
    if count == 0:
        return clusters
    rng = np.random.default_rng(seed)
    ids = [c.id for c in clusters.clusters]
    moved = rng.choice(len(everyone), size=count, replace=False)
    new = dict(assignment)
    for p in sorted(moved):
        idx = everyone[p]
        others = [cid for cid in ids if cid != assignment[idx]]
        new[idx] = others[int(rng.integers(len(others)))]
    groups: dict[int, set[int]] = {cid: set() for cid in ids}
    for idx, cid in new.items():
        groups[cid].add(idx)
    return ClusterSet(tuple(Cluster(cid, frozenset(groups[cid])) for cid in ids if groups[cid]))
