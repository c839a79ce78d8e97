"""10-fold cross-validation of every strategy on the synthetic text and binary libraries.

Writes results/cross_validation.json (accuracies and category counts) and
results/cross_validation_timing.json (per-fold match and substitution times).
"""

import argparse
import json
from pathlib import Path

from opaque_emu import AnalysisParams, SyntheticProtocolSpec, generate_synthetic
from opaque_emu.evaluate import Strategy, evaluate_strategies


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--flat-insertions", action="store_true")
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()

    params = AnalysisParams(weighted_insertions=not args.flat_insertions)
    out, timing = {}, {}
    for variant in ("text", "binary"):
        lib = generate_synthetic(SyntheticProtocolSpec(count=args.count, seed=args.seed, variant=variant))
        reports = evaluate_strategies(lib, params, strategies=list(Strategy), folds=args.folds, seed=0)
        print(f"\n{variant} library, {len(lib)} transactions, {args.folds} folds")
        print(f"{'strategy':<22} {'accuracy':>8}  {'match ms':>9}  {'subst ms':>9}  categories")
        for s, rep in reports.items():
            t = rep.aggregate.timing()
            print(f"{s.value:<22} {rep.accuracy:>8.4f}  {t['mean_match_ms']:>9.4f}  "
                  f"{t['mean_substitution_ms']:>9.4f}  {rep.aggregate.counts}")
        out[variant] = {s.value: rep.to_dict(timing=False) for s, rep in reports.items()}
        timing[variant] = {s.value: rep.to_dict(timing=True) for s, rep in reports.items()}

    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "cross_validation.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    (d / "cross_validation_timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
