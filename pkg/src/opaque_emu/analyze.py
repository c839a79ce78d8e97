"""Offline analysis: library -> EmulationModel.

cluster by response distance, align each cluster's requests, derive the
prototype and weights, pick the centroid, locate its symmetric fields.
Labels are never read here.
"""

from __future__ import annotations

import logging

import numpy as np

from .cluster import ClusterSet, DistanceMatrix, build_response_distance_matrix, cluster_transactions
from .model import GAP, WILDCARD, AnalysisParams, Cluster, ClusterModel, EmulationModel, TransactionLibrary
from .msa import progressive_align
from .prototype import build_prototype
from .responder import find_centroid, find_symmetric_fields, trim_fields

log = logging.getLogger(__name__)


def build_cluster_model(lib: TransactionLibrary, cluster: Cluster, matrix: DistanceMatrix,
                        params: AnalysisParams, profile_cache: dict | None = None) -> ClusterModel:
    """``profile_cache`` lets parameter sweeps reuse alignments of identical member sets."""
    members = sorted(cluster.member_indices)
    by_index = lib.by_index
    key = (tuple(members), params.msa_scoring)
    profile = None if profile_cache is None else profile_cache.get(key)
    if profile is None:
        requests = [by_index[i].request for i in members]
        profile = progressive_align(requests, cfg=params.msa_scoring, origins=members)
        if profile_cache is not None:
            profile_cache[key] = profile
    proto, weights = build_prototype(profile, params.f, params.b, params.c)
    centroid = by_index[find_centroid(cluster, matrix)]
    fields = find_symmetric_fields(centroid.request, centroid.response, params.min_field_len)
    fields = trim_fields(fields, _structural_positions(profile, proto, centroid.index))
    return ClusterModel(cluster.id, tuple(members), proto, weights, centroid.unlabelled(), tuple(fields))


def _structural_positions(profile, proto, origin: int) -> np.ndarray:
    """Per byte of one member's request: does it sit on a kept, non-wildcard column?"""
    row = profile.rows[profile.row_origin.index(origin)]
    fixed = np.zeros(profile.length, dtype=bool)
    cols = np.asarray(proto.source_columns, dtype=np.int64)
    fixed[cols[proto.array != WILDCARD]] = True
    return fixed[row != GAP]


def build_model(lib: TransactionLibrary, clusters: ClusterSet, matrix: DistanceMatrix,
                params: AnalysisParams, profile_cache: dict | None = None) -> EmulationModel:
    """Model for a given partition (used directly for noise experiments)."""
    return EmulationModel(params, tuple(build_cluster_model(lib, c, matrix, params, profile_cache)
                                        for c in clusters.clusters))


def analyze(lib: TransactionLibrary, params: AnalysisParams | None = None,
            matrix: DistanceMatrix | None = None, profile_cache: dict | None = None) -> EmulationModel:
    """Full offline pipeline. ``matrix`` may be a precomputed response-distance
    matrix covering at least the library's transactions."""
    params = params or AnalysisParams()
    if len(lib) == 0:
        raise ValueError("empty library")
    indices = [t.index for t in lib]
    if matrix is None:
        matrix = build_response_distance_matrix(lib, params.scoring)
    elif list(matrix.indices) != indices:
        matrix = matrix.sub(indices)
    clusters = cluster_transactions(matrix, params.cut_threshold)
    if len(lib) > 1 and all(len(c.member_indices) == 1 for c in clusters.clusters):
        log.warning("clustering produced only singleton clusters (%d)", len(clusters))
    return build_model(lib, clusters, matrix, params, profile_cache)
