"""Consensus prototypes and entropy weights from an alignment profile."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .model import GAP, WILDCARD, ConsensusPrototype, WeightVector
from .msa import Profile


@dataclass(frozen=True)
class OccurrenceTable:
    columns: tuple[dict[int, int], ...]  # symbol (octet or GAP) -> count
    k: int

    def __len__(self):
        return len(self.columns)


def occurrence_table(profile: Profile) -> OccurrenceTable:
    cols = []
    for col in profile.rows.T:
        cols.append(dict(Counter(int(s) for s in col)))
    return OccurrenceTable(tuple(cols), profile.k)


def _consensus_symbol(column: dict[int, int]) -> tuple[int, int]:
    # most common; ties -> lowest octet, GAP ranks after every octet
    return min(column.items(), key=lambda kv: (-kv[1], kv[0] == GAP, kv[0]))


def derive_consensus(table: OccurrenceTable, f: float = 0.8) -> ConsensusPrototype:
    if not 0 < f <= 1:
        raise ValueError(f"f must be in (0, 1], got {f}")
    symbols, kept = [], []
    for i, column in enumerate(table.columns):
        sym, count = _consensus_symbol(column)
        q = count / table.k
        if sym == GAP and q >= 0.5:
            continue  # truncated
        if sym != GAP and q >= f:
            symbols.append(sym)
        else:
            symbols.append(WILDCARD)
        kept.append(i)
    return ConsensusPrototype(tuple(symbols), tuple(kept))


def column_entropies(table: OccurrenceTable) -> list[float]:
    """Shannon index per column, natural log, GAP counted as a symbol."""
    out = []
    for column in table.columns:
        e = 0.0
        for count in column.values():
            q = count / table.k
            e -= q * math.log(q)
        out.append(abs(e))  # unanimous columns give -0.0
    return out


def derive_weights(entropies, kept_columns, b: float = 1.0, c: float = 10.0) -> WeightVector:
    if b <= 0 or c <= 0:
        raise ValueError("b and c must be positive")
    e = np.asarray([entropies[i] for i in kept_columns], dtype=np.float64)
    w = 1.0 / (1.0 + b * e) ** c
    return WeightVector(tuple(w), tuple(e))


def build_prototype(profile: Profile, f: float = 0.8, b: float = 1.0, c: float = 10.0):
    """Profile -> (prototype, weights)."""
    table = occurrence_table(profile)
    proto = derive_consensus(table, f)
    weights = derive_weights(column_entropies(table), proto.source_columns, b, c)
    return proto, weights


def render_weights(proto: ConsensusPrototype, weights: WeightVector) -> str:
    """Two-row diagnostic table: symbol over weight."""
    syms = ["?" if s == WILDCARD else (chr(s) if 0x20 <= s < 0x7F else f"{s:02x}") for s in proto.symbols]
    ws = [f"{w:.2e}" for w in weights.weights]
    width = max([len(x) for x in ws] + [1])
    return (" ".join(s.rjust(width) for s in syms) + "\n"
            + " ".join(x.rjust(width) for x in ws))
