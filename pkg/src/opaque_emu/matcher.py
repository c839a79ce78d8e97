"""Entropy-weighted wildcard matching of requests against prototypes.

Column scores for prototype symbol p_i (weight w_i) against request byte r_j:

    w_i * M   if p_i == r_j
    w_i * D   if p_i != r_j
    w_i * X   if p_i is WILDCARD

A prototype position facing an inserted gap scores ``w_i * G``. A request
byte inserted between prototype positions i-1 and i scores
``max(w_{i-1}, w_i) * G`` by default, so payload that overruns a wildcard
run is cheap while bytes inserted next to structure cost in full. With
``weighted_insertions=False`` every inserted byte costs a flat ``G``.

The relative distance is ``1 - (s - s_min) / (s_max - s_min)``, which is 0
for a perfect match and reproduces the worked-example distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .model import WILDCARD, ClusterModel, ConsensusPrototype, EmulationModel, WeightVector, as_octets


@dataclass(frozen=True)
class WildcardScoringConfig:
    match: float = 1.0      # M
    mismatch: float = -1.0  # D
    wildcard: float = 0.0   # X
    gap: float = -1.0       # G_req
    weighted_insertions: bool = True

    def __post_init__(self):
        if not self.match > 0:
            raise ValueError("match score must be > 0")
        if not self.mismatch < 0:
            raise ValueError("mismatch score must be < 0")


DEFAULT_WILDCARD_SCORING = WildcardScoringConfig()


@dataclass(frozen=True)
class MatchResult:
    cluster_id: int
    score: float
    s_max: float
    s_min: float
    d_rel: float


class DegeneratePrototypeError(ValueError):
    pass


@numba.njit(cache=True)
def _weighted_nw(proto, weights, req, M, D, X, G, weighted_insertions):
    n = proto.shape[0]
    m = req.shape[0]
    ins = np.ones(n + 1, dtype=np.float64)  # insertion weight before position i
    if weighted_insertions and n > 0:
        ins[0] = weights[0]
        ins[n] = weights[n - 1]
        for i in range(1, n):
            ins[i] = max(weights[i - 1], weights[i])
    prev = np.empty(m + 1, dtype=np.float64)
    cur = np.empty(m + 1, dtype=np.float64)
    prev[0] = 0.0
    for j in range(1, m + 1):
        prev[j] = prev[j - 1] + ins[0] * G
    for i in range(1, n + 1):
        p = proto[i - 1]
        w = weights[i - 1]
        g_ins = ins[i] * G
        cur[0] = prev[0] + w * G
        for j in range(1, m + 1):
            if p == -2:
                s = w * X
            elif p == req[j - 1]:
                s = w * M
            else:
                s = w * D
            best = prev[j - 1] + s
            up = prev[j] + w * G
            if up > best:
                best = up
            left = cur[j - 1] + g_ins
            if left > best:
                best = left
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def _check(proto: ConsensusPrototype, weights: WeightVector):
    if len(proto) != len(weights):
        raise ValueError(f"prototype length {len(proto)} != weight length {len(weights)}")


def weighted_alignment_score(proto: ConsensusPrototype, weights: WeightVector, request,
                             cfg: WildcardScoringConfig = DEFAULT_WILDCARD_SCORING) -> float:
    _check(proto, weights)
    req = as_octets(request).astype(np.int64)
    return float(_weighted_nw(proto.array, weights.array, req,
                              cfg.match, cfg.mismatch, cfg.wildcard, cfg.gap,
                              bool(cfg.weighted_insertions)))


def max_score(proto: ConsensusPrototype, weights: WeightVector,
              cfg: WildcardScoringConfig = DEFAULT_WILDCARD_SCORING) -> float:
    _check(proto, weights)
    wild = proto.array == WILDCARD
    w = weights.array
    return float(np.sum(w[~wild]) * cfg.match + np.sum(w[wild]) * cfg.wildcard)


def min_score(proto: ConsensusPrototype, weights: WeightVector,
              cfg: WildcardScoringConfig = DEFAULT_WILDCARD_SCORING) -> float:
    _check(proto, weights)
    wild = proto.array == WILDCARD
    w = weights.array
    return float(np.sum(w[~wild]) * cfg.mismatch + np.sum(w[wild]) * cfg.wildcard)


def relative_distance_from_scores(s: float, s_min: float, s_max: float) -> float:
    span = s_max - s_min
    if span <= 0:
        raise DegeneratePrototypeError("degenerate prototype: maximum and minimum scores coincide")
    return 1.0 - (s - s_min) / span


def printed_relative_distance(s: float, s_min: float, s_max: float) -> float:
    """``1 - (s - s_min) / s_max``: the unnormalized variant, kept for comparison.

    It is not bounded to [0, 1] and does not reproduce the worked-example
    distances, so matching never uses it.
    """
    if s_max == 0:
        raise DegeneratePrototypeError("s_max is zero")
    return 1.0 - (s - s_min) / s_max


def match(proto: ConsensusPrototype, weights: WeightVector, request,
          cfg: WildcardScoringConfig = DEFAULT_WILDCARD_SCORING, cluster_id: int = -1) -> MatchResult:
    s = weighted_alignment_score(proto, weights, request, cfg)
    hi = max_score(proto, weights, cfg)
    lo = min_score(proto, weights, cfg)
    return MatchResult(cluster_id, s, hi, lo, relative_distance_from_scores(s, lo, hi))


def relative_distance(proto: ConsensusPrototype, weights: WeightVector, request,
                      cfg: WildcardScoringConfig = DEFAULT_WILDCARD_SCORING) -> float:
    return match(proto, weights, request, cfg).d_rel


def select_prototype(model: EmulationModel, request, cfg: WildcardScoringConfig | None = None,
                     uniform_weights: bool = False) -> MatchResult:
    """Nearest prototype by relative distance; ties go to the lowest cluster id.

    ``uniform_weights`` ignores the entropy weights (consensus-only matching).
    Degenerate prototypes are skipped unless they are the only candidates.
    """
    if not model.clusters:
        raise ValueError("model has no clusters")
    cfg = cfg or model.params.wildcard_scoring
    best: MatchResult | None = None
    for c in sorted(model.clusters, key=lambda c: c.cluster_id):
        weights = _uniform(c) if uniform_weights else c.weights
        try:
            r = match(c.prototype, weights, request, cfg, c.cluster_id)
        except DegeneratePrototypeError:
            continue
        if best is None or r.d_rel < best.d_rel:
            best = r
    if best is None:
        c = min(model.clusters, key=lambda c: c.cluster_id)
        best = MatchResult(c.cluster_id, 0.0, 0.0, 0.0, 1.0)
    return best


def _uniform(c: ClusterModel) -> WeightVector:
    n = len(c.weights)
    return WeightVector((1.0,) * n, c.weights.entropies)
