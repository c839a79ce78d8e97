"""Cross-validation, response classification, baselines and noise sweeps."""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Protocol

import numpy as np

from .align import PackedSequences, similarity_ratios
from .analyze import analyze, build_model
from .cluster import DistanceMatrix, build_response_distance_matrix, clusters_from_labels, inject_noise
from .matcher import select_prototype
from .model import AnalysisParams, EmulationModel, Label, Transaction, TransactionLibrary
from .responder import find_symmetric_fields, generate_response
from .traces import BIN_RESPONSE_OPS, RESPONSE_OPS


# --------------------------------------------------------------------------
# classification

class AccuracyCategory(str, Enum):
    IDENTICAL = "identical"
    CONSISTENT = "consistent"
    CONFORMANT = "conformant"
    WELL_FORMED = "well-formed"
    MALFORMED = "malformed"

    @property
    def valid(self) -> bool:
        return self in (AccuracyCategory.IDENTICAL, AccuracyCategory.CONSISTENT, AccuracyCategory.CONFORMANT)


CATEGORIES = tuple(AccuracyCategory)


class ProtocolChecker(Protocol):
    name: str

    def op_type(self, response: bytes) -> str | None:
        """Operation type (in label vocabulary) of a response, or None."""

    def well_formed(self, response: bytes) -> bool:
        ...


class DirectoryTextChecker:
    name = "directory-text"
    _op = re.compile(rb"^\{id:\d+,op:([A-Za-z]+)")
    _grammar = re.compile(
        rb"^\{id:\d+,op:(SearchRsp|AddRsp|ModifyRsp|DeleteRsp),result:[A-Za-z]+"
        rb"(,[A-Za-z]+:[^,{}]*)*\}$")
    _ops = {v.encode(): k for k, v in RESPONSE_OPS.items()}

    def op_type(self, response: bytes) -> str | None:
        m = self._op.match(response)
        return self._ops.get(m.group(1)) if m else None

    def well_formed(self, response: bytes) -> bool:
        return self._grammar.match(response) is not None


class DirectoryBinaryChecker:
    name = "directory-binary"
    _ops = {v: k for k, v in BIN_RESPONSE_OPS.items()}

    def op_type(self, response: bytes) -> str | None:
        if len(response) < 6 or response[0] != 0x30:
            return None
        return self._ops.get(response[5])

    def well_formed(self, response: bytes) -> bool:
        if len(response) < 8 or response[0] != 0x30 or response[5] not in self._ops:
            return False
        nfields, pos = response[7], 8
        for _ in range(nfields):
            if pos + 2 > len(response):
                return False
            pos += 2 + response[pos + 1]
        return pos == len(response)


def checker_for(lib: TransactionLibrary) -> ProtocolChecker:
    """Pick the built-in checker matching the library's payloads."""
    sample = lib[0].response if len(lib) else b""
    return DirectoryBinaryChecker() if sample[:1] == b"\x30" else DirectoryTextChecker()


def _replicated(generated: bytes, expected: bytes, offset: int, length: int) -> bool:
    # the byte following the field must agree too, so "37" does not match "375"
    end = offset + length
    if generated[offset:end] != expected[offset:end]:
        return False
    return end >= len(expected) or generated[end:end + 1] == expected[end:end + 1]


def classify_response(generated: bytes, expected: bytes, label: Label,
                      checker: ProtocolChecker) -> AccuracyCategory:
    if generated == expected:
        return AccuracyCategory.IDENTICAL
    try:
        op_ok = label.op_type is not None and checker.op_type(generated) == label.op_type
        if op_ok and all(_replicated(generated, expected, o, n) for o, n in label.critical_fields):
            return AccuracyCategory.CONSISTENT
        if op_ok:
            return AccuracyCategory.CONFORMANT
        if checker.well_formed(generated):
            return AccuracyCategory.WELL_FORMED
    except Exception:  # noqa: BLE001 - a crashing checker counts against the response
        pass
    return AccuracyCategory.MALFORMED


# --------------------------------------------------------------------------
# strategies

class Strategy(str, Enum):
    WHOLE_LIBRARY = "whole-library"
    CLUSTER_CENTROID = "cluster-centroid"
    CONSENSUS_ONLY = "consensus-only"
    CONSENSUS_WEIGHTING = "consensus-weighting"


@dataclass(frozen=True)
class StrategyResult:
    response: bytes
    selected: int  # cluster id, or transaction index for WholeLibrary
    match_s: float
    substitution_s: float

    @property
    def total_s(self) -> float:
        return self.match_s + self.substitution_s


class Emulator:
    """Responds to requests with one strategy over a trained model."""

    def __init__(self, strategy: Strategy, model: EmulationModel, library: TransactionLibrary):
        self.strategy = Strategy(strategy)
        self.model = model
        self.scoring = model.params.scoring
        self._fields: dict[int, tuple] = {}
        self._clusters = sorted(model.clusters, key=lambda c: c.cluster_id)
        if self.strategy is Strategy.WHOLE_LIBRARY:
            self._library = [t.unlabelled() for t in library]
            self._packed = PackedSequences.pack([t.request for t in self._library])
        elif self.strategy is Strategy.CLUSTER_CENTROID:
            self._packed = PackedSequences.pack([c.centroid.request for c in self._clusters])

    def _transaction_fields(self, t: Transaction):
        if t.index not in self._fields:
            self._fields[t.index] = tuple(find_symmetric_fields(t.request, t.response,
                                                                self.model.params.min_field_len))
        return self._fields[t.index]

    def respond(self, request: bytes) -> StrategyResult:
        t0 = time.perf_counter()
        if self.strategy is Strategy.WHOLE_LIBRARY:
            ratios = similarity_ratios(request, self._packed, self.scoring)
            template = self._library[int(np.argmax(ratios))]
            selected = template.index
        elif self.strategy is Strategy.CLUSTER_CENTROID:
            ratios = similarity_ratios(request, self._packed, self.scoring)
            cluster = self._clusters[int(np.argmax(ratios))]
            template, selected = cluster.centroid, cluster.cluster_id
        else:
            uniform = self.strategy is Strategy.CONSENSUS_ONLY
            result = select_prototype(self.model, request, uniform_weights=uniform)
            cluster = self.model.cluster(result.cluster_id)
            template, selected = cluster.centroid, cluster.cluster_id
        t1 = time.perf_counter()
        if self.strategy is Strategy.WHOLE_LIBRARY:
            fields = self._transaction_fields(template)
        else:
            fields = cluster.fields
        response = generate_response(template, fields, request, self.scoring)
        t2 = time.perf_counter()
        return StrategyResult(response, selected, t1 - t0, t2 - t1)


def run_strategy(emulator: Emulator, request: bytes) -> StrategyResult:
    return emulator.respond(request)


# --------------------------------------------------------------------------
# reports

@dataclass
class FoldResult:
    fold: int
    counts: dict[str, int] = field(default_factory=lambda: {c.value: 0 for c in CATEGORIES})
    match_s: float = 0.0
    substitution_s: float = 0.0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def valid(self) -> int:
        return sum(self.counts[c.value] for c in CATEGORIES if c.valid)

    @property
    def accuracy(self) -> float:
        return self.valid / self.total if self.total else 0.0

    def add(self, category: AccuracyCategory, result: StrategyResult) -> None:
        self.counts[category.value] += 1
        self.match_s += result.match_s
        self.substitution_s += result.substitution_s

    def timing(self) -> dict[str, float]:
        n = max(self.total, 1)
        return {"mean_match_ms": 1e3 * self.match_s / n,
                "mean_substitution_ms": 1e3 * self.substitution_s / n,
                "mean_total_ms": 1e3 * (self.match_s + self.substitution_s) / n}


@dataclass
class EvaluationReport:
    config: dict
    folds: list[FoldResult]

    @property
    def aggregate(self) -> FoldResult:
        agg = FoldResult(-1)
        for f in self.folds:
            for k, v in f.counts.items():
                agg.counts[k] += v
            agg.match_s += f.match_s
            agg.substitution_s += f.substitution_s
        return agg

    @property
    def accuracy(self) -> float:
        return self.aggregate.accuracy

    @property
    def mean_match_ms(self) -> float:
        return self.aggregate.timing()["mean_match_ms"]

    def _row(self, f: FoldResult, timing: bool) -> dict:
        row = {"fold": "all" if f.fold < 0 else f.fold, "total": f.total, **f.counts,
               "accuracy": round(f.accuracy, 6)}
        if timing:
            row.update({k: round(v, 4) for k, v in f.timing().items()})
        return row

    def to_dict(self, timing: bool = True) -> dict:
        return {"config": self.config,
                "folds": [self._row(f, timing) for f in self.folds],
                "aggregate": self._row(self.aggregate, timing)}

    def to_json(self, timing: bool = False) -> str:
        """Machine-readable form; timings are opt-in because they vary run to run."""
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    def to_text(self, timing: bool = True) -> str:
        cols = ["fold", "total"] + [c.value for c in CATEGORIES] + ["accuracy"]
        if timing:
            cols += ["mean_match_ms", "mean_substitution_ms", "mean_total_ms"]
        rows = [self._row(f, timing) for f in self.folds] + [self._row(self.aggregate, timing)]
        cells = [[str(r[c]) if not isinstance(r[c], float) else f"{r[c]:.4f}" for c in cols] for r in rows]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
        head = "  ".join(c.rjust(w) for c, w in zip(cols, widths))
        cfg = ", ".join(f"{k}={v}" for k, v in self.config.items())
        lines = [cfg, head, "-" * len(head)]
        lines += ["  ".join(x.rjust(w) for x, w in zip(row, widths)) for row in cells]
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# cross-validation

def fold_partition(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Random partition of positions 0..n-1 into ``folds`` groups of near-equal size."""
    if folds < 2:
        raise ValueError("cross-validation needs at least 2 folds")
    if n < folds:
        raise ValueError(f"library of {n} transactions cannot be split into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(p) for p in np.array_split(perm, folds)]


def _require_labels(lib: TransactionLibrary) -> None:
    if not lib.labelled:
        raise ValueError("library has unlabelled transactions; classification needs op_type labels")


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _config(lib, params, folds, seed, noise, strategy) -> dict:
    return {"library": lib.name, "transactions": len(lib), "folds": folds, "seed": seed,
            "strategy": Strategy(strategy).value, "noise": noise,
            **{k: v for k, v in params.as_dict().items()}}


def evaluate_strategies(lib: TransactionLibrary, params: AnalysisParams | None = None, *,
                        strategies=(Strategy.CONSENSUS_WEIGHTING,), folds: int = 10, seed: int = 0,
                        noise: float = 0.0, matrix: DistanceMatrix | None = None,
                        checker: ProtocolChecker | None = None,
                        profile_cache: dict | None = None) -> dict[Strategy, EvaluationReport]:
    """k-fold cross-validation; every strategy is scored against the same fold models.

    With ``noise > 0`` the training partition is the ground-truth operation
    partition with that fraction of members moved to other clusters.
    """
    params = params or AnalysisParams()
    strategies = [Strategy(s) for s in strategies]
    _require_labels(lib)
    parts = fold_partition(len(lib), folds, seed)
    checker = checker or checker_for(lib)
    if matrix is None:
        matrix = build_response_distance_matrix(lib, params.scoring)
    reports = {s: EvaluationReport(_config(lib, params, folds, seed, noise, s), []) for s in strategies}
    everything = np.arange(len(lib))
    for k, held in enumerate(parts):
        train = lib.subset(np.setdiff1d(everything, held))
        sub = matrix.sub([t.index for t in train])
        if noise > 0:
            noisy = inject_noise(clusters_from_labels(train), noise, _fold_seed(seed, k))
            model = build_model(train, noisy, sub, params, profile_cache)
        else:
            model = analyze(train, params, sub, profile_cache)
        for s in strategies:
            emu = Emulator(s, model, train)
            result = FoldResult(k)
            for p in held:
                t = lib[int(p)]
                r = emu.respond(t.request)
                result.add(classify_response(r.response, t.response, t.label, checker), r)
            reports[s].folds.append(result)
    return reports


def cross_validate(lib: TransactionLibrary, params: AnalysisParams | None = None, *,
                   strategy: Strategy = Strategy.CONSENSUS_WEIGHTING, folds: int = 10, seed: int = 0,
                   noise: float = 0.0, matrix: DistanceMatrix | None = None,
                   checker: ProtocolChecker | None = None) -> EvaluationReport:
    return evaluate_strategies(lib, params, strategies=(strategy,), folds=folds, seed=seed,
                               noise=noise, matrix=matrix, checker=checker)[Strategy(strategy)]


@dataclass
class RobustnessGrid:
    noise_ratios: tuple[float, ...]
    f_values: tuple[float, ...]
    accuracy: dict[tuple[float, float], float]
    config: dict

    def to_dict(self) -> dict:
        return {"config": self.config,
                "grid": [{"noise": n, "f": f, "accuracy": round(self.accuracy[n, f], 6)}
                         for n in self.noise_ratios for f in self.f_values]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        head = "noise \\ f".ljust(10) + "".join(f"{f:>10g}" for f in self.f_values)
        lines = [head, "-" * len(head)]
        for n in self.noise_ratios:
            lines.append(f"{n:<10g}" + "".join(f"{self.accuracy[n, f]:>10.4f}" for f in self.f_values))
        return "\n".join(lines) + "\n"


def robustness_sweep(lib: TransactionLibrary, noise_ratios, f_values, seed: int = 0, *,
                     params: AnalysisParams | None = None, folds: int = 10,
                     matrix: DistanceMatrix | None = None) -> RobustnessGrid:
    """Accuracy ratio of Consensus+Weighting for each (noise ratio, f)."""
    params = params or AnalysisParams()
    _require_labels(lib)
    if matrix is None:
        matrix = build_response_distance_matrix(lib, params.scoring)
    cache: dict = {}
    grid = {}
    for n in noise_ratios:
        for f in f_values:
            rep = evaluate_strategies(lib, replace(params, f=f), folds=folds, seed=seed,
                                      noise=n, matrix=matrix, profile_cache=cache)
            grid[n, f] = rep[Strategy.CONSENSUS_WEIGHTING].accuracy
    config = {"library": lib.name, "transactions": len(lib), "folds": folds, "seed": seed,
              **{k: v for k, v in params.as_dict().items() if k != "f"}}
    return RobustnessGrid(tuple(noise_ratios), tuple(f_values), grid, config)
