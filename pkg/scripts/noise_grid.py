"""Consensus+weighting accuracy under injected clustering noise, for several consensus thresholds."""

import argparse
from pathlib import Path

from opaque_emu import AnalysisParams, SyntheticProtocolSpec, generate_synthetic
from opaque_emu.evaluate import robustness_sweep


def _floats(text):
    return [float(x) for x in text.split(",")]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--variant", choices=("text", "binary"), default="text")
    ap.add_argument("--noise", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    ap.add_argument("--f", type=_floats, default=[0.3, 0.5, 0.7, 0.9])
    ap.add_argument("--out", default="results/noise_grid.json")
    args = ap.parse_args()

    lib = generate_synthetic(SyntheticProtocolSpec(count=args.count, seed=args.seed, variant=args.variant))
    grid = robustness_sweep(lib, args.noise, args.f, seed=0, params=AnalysisParams(), folds=args.folds)
    print(grid.to_text(), end="")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(grid.to_json())


if __name__ == "__main__":
    main()
