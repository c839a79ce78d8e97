"""Per-request matching cost of each strategy as the library grows."""

import argparse
import statistics

from opaque_emu import AnalysisParams, SyntheticProtocolSpec, analyze, generate_synthetic
from opaque_emu.evaluate import Emulator, Strategy


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="250,500,1000,2000")
    ap.add_argument("--requests", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    sizes = [int(x) for x in args.sizes.split(",")]
    print(f"{'library':>8}  " + "  ".join(f"{s.value:>20}" for s in Strategy) + "   (mean match ms)")
    for n in sizes:
        lib = generate_synthetic(SyntheticProtocolSpec(count=n, seed=args.seed))
        model = analyze(lib, AnalysisParams())
        probe = generate_synthetic(SyntheticProtocolSpec(count=args.requests, seed=args.seed + 1000))
        row = []
        for s in Strategy:
            emu = Emulator(s, model, lib)
            emu.respond(probe[0].request)
            row.append(statistics.fmean(emu.respond(t.request).match_s for t in probe) * 1e3)
        print(f"{n:>8}  " + "  ".join(f"{v:>20.4f}" for v in row))


if __name__ == "__main__":
    main()
