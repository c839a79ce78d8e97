from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from opaque_emu import AnalysisParams, SyntheticProtocolSpec, analyze, generate_synthetic, select_prototype
from opaque_emu.matcher import (DegeneratePrototypeError, WildcardScoringConfig, match, max_score, min_score,
                                printed_relative_distance, relative_distance, relative_distance_from_scores,
                                weighted_alignment_score)
from opaque_emu.model import WILDCARD, ClusterModel, ConsensusPrototype, EmulationModel, Transaction, WeightVector

DURAND = b"{id:37,op:A,sn:Durand}"
W_ID, W_SN = [1 / 1342, 1 / 4760, 1 / 4760], [1 / 14638, 1 / 14638, 1 / 796, 1 / 4760, 1 / 4760, 1 / 1342, 1 / 4760]


def proto_of(text, weights=None):
    syms = tuple(WILDCARD if ch == "?" else ord(ch) for ch in text)
    w = tuple(weights) if weights is not None else (1.0,) * len(syms)
    return ConsensusPrototype(syms, tuple(range(len(syms)))), WeightVector(w, (0.0,) * len(syms))


def reference_search():
    weights = [1.0] * 4 + W_ID + [1.0] * 9 + W_SN + [1.0]
    return proto_of("{id:???,op:S,sn:???????}", weights)


def test_perfect_match_reaches_max():
    p, w = proto_of("abc", [1.0, 0.5, 2.0])
    assert weighted_alignment_score(p, w, b"abc") == max_score(p, w) == 3.5


def test_all_wildcards_score_zero():
    p, w = proto_of("????", [0.3, 1, 1, 0.2])
    assert weighted_alignment_score(p, w, b"wxyz") == 0 == max_score(p, w) == min_score(p, w)


def test_reference_weights_give_pm14():
    p, w = reference_search()
    assert max_score(p, w) == pytest.approx(14.0)
    assert min_score(p, w) == pytest.approx(-14.0)


def test_durand_alignment_against_reference_search_prototype():
    # "{id:3*7,op:A,sn:*Durand}": 13 matches, the S/A mismatch, gaps opposite an id and a surname wildcard
    p, w = reference_search()
    path = 13 - 1 - W_ID[1] - W_SN[0]
    s = weighted_alignment_score(p, w, DURAND)
    assert s == pytest.approx(path, abs=1e-12)
    assert relative_distance_from_scores(s, -14, 14) == pytest.approx(0.0715, abs=0.001)


def test_empty_request_is_all_gaps():
    p, w = proto_of("ab", [1.0, 0.25])
    assert weighted_alignment_score(p, w, b"") == -1.25


def test_validation():
    with pytest.raises(ValueError):
        WildcardScoringConfig(match=0)
    with pytest.raises(ValueError):
        WildcardScoringConfig(mismatch=0)
    p, _ = proto_of("ab")
    with pytest.raises(ValueError):
        weighted_alignment_score(p, WeightVector((1.0,), (0.0,)), b"ab")


symbol = st.one_of(st.integers(0, 2), st.just(WILDCARD))


@settings(max_examples=250, deadline=None)
@given(st.lists(st.tuples(symbol, st.sampled_from([1.0, 0.5, 1e-3, 2.0])), max_size=5),
       st.lists(st.integers(0, 2), max_size=5), st.booleans())
def test_dp_equals_path_enumeration(proto, req, weighted):
    syms = [s for s, _ in proto]
    ws = [w for _, w in proto]
    p = ConsensusPrototype(tuple(syms), tuple(range(len(syms))))
    w = WeightVector(tuple(ws), (0.0,) * len(ws))
    cfg = WildcardScoringConfig(weighted_insertions=weighted)
    want = oracles.brute_weighted_score(syms, ws, req, weighted_insertions=weighted)
    assert weighted_alignment_score(p, w, bytes(req), cfg) == pytest.approx(want, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(symbol, st.floats(1e-5, 1.0)), min_size=1, max_size=12), st.data())
def test_bounds(proto, data):
    p = ConsensusPrototype(tuple(s for s, _ in proto), tuple(range(len(proto))))
    w = WeightVector(tuple(x for _, x in proto), (0.0,) * len(proto))
    any_req = data.draw(st.binary(max_size=20))
    assert weighted_alignment_score(p, w, any_req) <= max_score(p, w) + 1e-12
    same_len = data.draw(st.binary(min_size=len(proto), max_size=len(proto)))
    assert weighted_alignment_score(p, w, same_len) >= min_score(p, w) - 1e-12


def test_lower_bound_fails_for_long_requests():
    # documented: a long request pays for insertions that min_score does not count
    p, w = proto_of("a")
    s = weighted_alignment_score(p, w, b"bbbbb")
    assert s == -5 < min_score(p, w) == -1


@settings(max_examples=200)
@given(st.floats(-50, 50), st.floats(-50, -0.1), st.floats(0.1, 50), st.floats(1e-3, 1e3))
def test_scaling_identities(s, lo, hi, lam):
    assert relative_distance_from_scores(lam * s, lam * lo, lam * hi) == pytest.approx(
        relative_distance_from_scores(s, lo, hi), rel=1e-9, abs=1e-9)
    assert printed_relative_distance(lam * s, lam * lo, lam * hi) == pytest.approx(1 - (s - lo) / hi, rel=1e-9, abs=1e-9)


def test_printed_formula_on_perfect_match():
    p, w = proto_of("abcd")
    r = match(p, w, b"abcd")
    assert printed_relative_distance(r.score, r.s_min, r.s_max) == 1 - (r.s_max - r.s_min) / r.s_max == -1
    assert r.d_rel == 0


def test_printed_formula_misses_worked_distance(example_model):
    # the unnormalized variant is far from 0.0715 / 0.068, which is why matching normalizes by the span
    c = example_model.clusters[0]
    r = match(c.prototype, c.weights, DURAND)
    assert printed_relative_distance(r.score, r.s_min, r.s_max) < -0.5


def test_degenerate_prototype():
    p, w = proto_of("??")
    with pytest.raises(DegeneratePrototypeError):
        relative_distance(p, w, b"ab")


def _cluster(cid, text, centroid):
    p, w = proto_of(text)
    return ClusterModel(cid, (centroid.index,), p, w, centroid)


def test_selection_skips_degenerate_and_breaks_ties_low():
    t0, t1, t2 = Transaction(0, b"ab", b"x"), Transaction(1, b"ab", b"y"), Transaction(2, b"??", b"z")
    m = EmulationModel(AnalysisParams(), (_cluster(5, "ab", t1), _cluster(3, "ab", t0), _cluster(1, "??", t2)))
    assert select_prototype(m, b"ab").cluster_id == 3


def test_single_cluster_always_selected():
    t = Transaction(0, b"abc", b"r")
    m = EmulationModel(AnalysisParams(), (_cluster(9, "abc", t),))
    assert select_prototype(m, b"completely different").cluster_id == 9


def test_durand_selects_add(example_model):
    r = select_prototype(example_model, DURAND)
    assert set(example_model.cluster(r.cluster_id).member_indices) == {24, 2487, 3106}


def _op_of_cluster(model, lib):
    labels = {t.index: t.label.op_type for t in lib}
    return {c.cluster_id: Counter(labels[i] for i in c.member_indices).most_common(1)[0][0] for c in model.clusters}


def test_training_requests_select_their_own_cluster(small_lib):
    model = analyze(small_lib)
    owner = {i: c.cluster_id for c in model.clusters for i in c.member_indices}
    for t in small_lib:
        assert select_prototype(model, t.request).cluster_id == owner[t.index]


@pytest.mark.parametrize("variant", ["text", "binary"])
def test_structural_dominance_on_novel_payloads(variant):
    train = generate_synthetic(SyntheticProtocolSpec(count=200, seed=1, variant=variant))
    fresh = generate_synthetic(SyntheticProtocolSpec(count=300, seed=99, variant=variant))
    model = analyze(train)
    op = _op_of_cluster(model, train)
    wrong = [t.request for t in fresh if op[select_prototype(model, t.request).cluster_id] != t.label.op_type]
    assert wrong == []


def test_flat_insertions_are_available(example_lib):
    model = analyze(example_lib, AnalysisParams(weighted_insertions=False))
    r = select_prototype(model, DURAND)
    assert set(model.cluster(r.cluster_id).member_indices) == {24, 2487, 3106}
    assert r.d_rel == pytest.approx(0.068, abs=0.02)


def test_uniform_weights_option(example_model):
    a = select_prototype(example_model, DURAND, uniform_weights=True)
    b = select_prototype(example_model, DURAND)
    assert a.s_max != b.s_max
