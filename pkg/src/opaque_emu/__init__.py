"""Opaque service emulation from recorded request/response traces."""

from .analyze import analyze, build_model
from .matcher import MatchResult, WildcardScoringConfig, select_prototype
from .model import (GAP, WILDCARD, AnalysisParams, EmulationModel, Transaction, TransactionLibrary,
                    load_model, save_model)
from .responder import generate_response
from .traces import SyntheticProtocolSpec, generate_synthetic, load_library, save_library, worked_example_library

__all__ = [
    "GAP", "WILDCARD", "AnalysisParams", "EmulationModel", "MatchResult", "SyntheticProtocolSpec",
    "Transaction", "TransactionLibrary", "WildcardScoringConfig", "analyze", "build_model",
    "generate_response", "generate_synthetic", "load_library", "load_model", "save_library",
    "save_model", "select_prototype", "worked_example_library",
]
