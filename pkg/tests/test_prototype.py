import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_entropy
from opaque_emu.model import GAP, WILDCARD
from opaque_emu.msa import Profile
from opaque_emu.prototype import (build_prototype, column_entropies, derive_consensus, derive_weights,
                                  occurrence_table, render_weights)

# search-cluster reference alignment, '*' marking gaps
REFERENCE_SEARCH_PROFILE = [
    "{id:**1*,op:S,sn:*******Du}",
    "{id:**13,op:S,sn:*Versteeg}",
    "{id:2273,op:S,sn:Schneider}",
    "{id:275*,op:S,sn:*Han*****}",
    "{id:490*,op:S,sn:Grundy***}",
]


def profile_from_text(rows, gap="*"):
    arr = np.array([[GAP if ch == gap else ord(ch) for ch in r] for r in rows], dtype=np.int16)
    return Profile(arr, tuple(range(len(rows))))


def column(*symbols):
    return profile_from_text(["".join(symbols[i]) for i in range(len(symbols))])


def test_reference_profile_gives_expected_prototype():
    proto, _ = build_prototype(profile_from_text(REFERENCE_SEARCH_PROFILE), f=0.8)
    assert proto.render() == "{id:???,op:S,sn:???????}"


def test_reference_profile_weights():
    _, w = build_prototype(profile_from_text(REFERENCE_SEARCH_PROFILE), 0.8, 1, 10)
    wild = [round(e, 2) for e in w.entropies if e > 0]
    assert wild == [1.05, 1.33, 1.33, 1.61, 1.61, 0.95, 1.33, 1.33, 1.05, 1.33]
    inv = sorted({round(1 / x) for x in w.weights})
    assert inv[0] == 1 and all(abs(a / b - 1) < 0.05 for a, b in zip(inv[1:], [796, 1342, 4760, 14638]))


def test_consensus_rules():
    prof = profile_from_text(["aab*b", "aab*b", "aab*c", "aac*d", "ab*ae"])
    proto = derive_consensus(occurrence_table(prof), f=0.8)
    # unanimous, 4/5 kept, 3/5 wildcard, 4/5 gaps truncated, 2/5 wildcard
    assert proto.symbols == (ord("a"), ord("a"), WILDCARD, WILDCARD)
    assert proto.source_columns == (0, 1, 2, 4)


def test_gap_majority_truncates_and_byte_wins_ties():
    prof = profile_from_text(["a*", "a*", "ab", "bb"])
    table = occurrence_table(prof)
    proto = derive_consensus(table, f=0.5)
    # column 1: gap 2/4 ties with 'b' 2/4; the byte wins the tie and is kept at f=0.5
    assert proto.symbols == (ord("a"), ord("b"))
    prof = profile_from_text(["a*", "a*", "a*", "bb"])
    assert derive_consensus(occurrence_table(prof), f=0.5).symbols == (ord("a"),)


def test_threshold_boundary_is_inclusive():
    prof = profile_from_text(["a", "a", "a", "a", "b"])
    assert derive_consensus(occurrence_table(prof), 0.8).symbols == (ord("a"),)
    assert derive_consensus(occurrence_table(prof), 0.81).symbols == (WILDCARD,)


def test_f_out_of_range():
    table = occurrence_table(profile_from_text(["a"]))
    for f in (0, -0.1, 1.01):
        with pytest.raises(ValueError):
            derive_consensus(table, f)


def test_weights_formula_and_validation():
    w = derive_weights([0.0, math.log(2), 1.0], (0, 1, 2), b=1, c=10)
    assert w.weights[0] == 1.0
    assert w.weights[1] == pytest.approx(1 / (1 + math.log(2)) ** 10)
    assert w.weights[2] == pytest.approx(2.0 ** -10)
    with pytest.raises(ValueError):
        derive_weights([0.0], (0,), b=0)
    with pytest.raises(ValueError):
        derive_weights([0.0], (0,), c=-1)


def test_truncated_columns_dropped_from_weights():
    prof = profile_from_text(["ab*", "ab*", "abc"])
    proto, w = build_prototype(prof)
    assert len(proto) == len(w) == 2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-1, 5), min_size=1, max_size=30))
def test_entropy_matches_direct_count(col):
    prof = Profile(np.asarray(col, dtype=np.int16).reshape(-1, 1), tuple(range(len(col))))
    assert column_entropies(occurrence_table(prof))[0] == pytest.approx(brute_entropy(col), abs=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3, 7, 16])
def test_uniform_column_entropy_is_log_k(k):
    prof = Profile(np.arange(k, dtype=np.int16).reshape(k, 1), tuple(range(k)))
    assert column_entropies(occurrence_table(prof))[0] == pytest.approx(math.log(k), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text("abc*", min_size=6, max_size=6), min_size=1, max_size=8), st.floats(0.05, 1.0))
def test_prototype_invariants(rows, f):
    prof = profile_from_text(rows)
    proto, w = build_prototype(prof, f)
    assert len(proto) == len(w) <= prof.length
    for sym, wt, e in zip(proto.symbols, w.weights, w.entropies):
        assert 0 < wt <= 1
        if sym != WILDCARD:
            assert e < 1e-12 or f < 1  # a kept byte at f=1 means a unanimous column
    if f == 1.0:
        assert all(s == WILDCARD or e == 0 for s, e in zip(proto.symbols, w.entropies))


def test_render_weights_two_rows():
    proto, w = build_prototype(profile_from_text(["ab", "ac"]))
    text = render_weights(proto, w)
    assert len(text.splitlines()) == 2 and "?" in text.splitlines()[0]
