"""Command line entry point: gen, analyze, serve, eval, bench."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import signal
import statistics
import sys

from .model import AnalysisParams, ModelFormatError, load_model, save_model
from .traces import (TEXT_OPS, SyntheticProtocolSpec, TraceFormatError, generate_synthetic, load_library,
                     save_library, worked_example_library)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("opaque_emu")

# flag dest -> AnalysisParams field
_PARAM_FLAGS = {"f": "f", "b": "b", "c": "c", "M": "match", "D": "mismatch", "X": "wildcard",
                "G": "gap", "msa_gap": "msa_gap", "cut_threshold": "cut_threshold",
                "min_field_len": "min_field_len", "weighted_insertions": "weighted_insertions"}


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _add_params(p: argparse.ArgumentParser, f_list: bool = False) -> None:
    d = AnalysisParams()
    g = p.add_argument_group("analysis parameters")
    if f_list:
        g.add_argument("--f", type=_float_list, default=[d.f], help="consensus threshold(s), comma separated")
    else:
        g.add_argument("--f", type=float, default=d.f, help="consensus frequency threshold")
    g.add_argument("--b", type=float, default=d.b, help="entropy weight scale")
    g.add_argument("--c", type=float, default=d.c, help="entropy weight exponent")
    g.add_argument("--M", type=float, default=d.match, help="match score")
    g.add_argument("--D", type=float, default=d.mismatch, help="mismatch score")
    g.add_argument("--X", type=float, default=d.wildcard, help="wildcard score")
    g.add_argument("--G", type=float, default=d.gap, help="gap penalty (pairwise, clustering, matching)")
    g.add_argument("--msa-gap", type=float, default=d.msa_gap, help="gap penalty inside multiple alignment")
    g.add_argument("--cut-threshold", type=float, default=d.cut_threshold, help="VAT chain cut distance")
    g.add_argument("--min-field-len", type=int, default=d.min_field_len, help="shortest symmetric field")
    g.add_argument("--flat-insertions", dest="weighted_insertions", action="store_false",
                   help="charge every inserted request byte the full gap penalty")


def _params(args, f: float | None = None) -> AnalysisParams:
    values = {field: getattr(args, flag) for flag, field in _PARAM_FLAGS.items()}
    if f is not None:
        values["f"] = f
    try:
        return AnalysisParams(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opaque-emu", description="Trace-driven opaque service emulation.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag defaults for the subcommand")
    common.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic directory-protocol library")
    p.add_argument("--ops", default=",".join(TEXT_OPS))
    p.add_argument("--count", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=("text", "binary"), default="text")
    p.add_argument("--out", required=True)
    p.add_argument("--no-overwrite", action="store_true", help="fail if the output exists")
    p.add_argument("--worked-example", action="store_true",
                   help="write the 8-transaction running example instead of a generated library")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("analyze", parents=[common], help="build an emulation model from a library")
    p.add_argument("library")
    p.add_argument("--out", required=True)
    p.add_argument("--matrix-csv", help="also dump the response distance matrix")
    _add_params(p)
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("serve", parents=[common], help="run the emulation service")
    p.add_argument("model")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=10389)
    p.add_argument("--framing", default="delim:\\n", help="delim:<bytes> | len:<1|2|4>:<big|little>[:incl] | idle:<ms>")
    p.add_argument("--delay-ms", type=float, default=0.0)
    p.add_argument("--max-connections", type=_positive_int, default=256)
    p.add_argument("--max-message-size", type=_positive_int, default=65536)
    p.add_argument("--no-append-delimiter", action="store_true")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("eval", parents=[common], help="cross-validate, compare strategies or sweep noise")
    p.add_argument("library")
    p.add_argument("--strategy", default="consensus-weighting",
                   help="whole-library | cluster-centroid | consensus-only | consensus-weighting | all")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=_float_list, default=None, help="noise ratios for a robustness grid")
    p.add_argument("--out", help="machine-readable report (JSON, no timings)")
    p.add_argument("--timing-out", help="JSON file with per-fold timings")
    p.add_argument("--min-accuracy", type=float, help="exit 1 if any accuracy falls below this")
    _add_params(p, f_list=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="time every strategy on replayed requests")
    p.add_argument("library")
    p.add_argument("--requests", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=0)
    _add_params(p)
    p.set_defaults(handler=cmd_bench)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(cfg, dict):
        parser.error("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions}
    unknown = set(cfg) - known
    if unknown:
        parser.error(f"unknown config keys for {args.command}: {sorted(unknown)}")
    # flags given on the command line still win: they are re-parsed over the new defaults
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    if args.worked_example:
        lib = worked_example_library()
        save_library(lib, args.out, overwrite=not args.no_overwrite)
        print(f"wrote {len(lib)} transactions to {args.out} (worked example)")
        return EXIT_OK
    ops = tuple(o.strip() for o in args.ops.split(",") if o.strip())
    try:
        spec = SyntheticProtocolSpec(ops=ops, count=args.count, seed=args.seed, variant=args.variant)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lib = generate_synthetic(spec)
    save_library(lib, args.out, overwrite=not args.no_overwrite)
    counts = {op: sum(1 for t in lib if t.label.op_type == op) for op in ops}
    print(f"wrote {len(lib)} transactions to {args.out} (variant={args.variant}, seed={args.seed}, ops={counts})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .analyze import analyze
    from .cluster import build_response_distance_matrix
    from .prototype import render_weights

    params = _params(args)
    lib = load_library(args.library)
    matrix = build_response_distance_matrix(lib, params.scoring)
    if args.matrix_csv:
        matrix.to_csv(args.matrix_csv)
    model = analyze(lib, params, matrix)
    save_model(model, args.out)
    print(f"{len(model.clusters)} clusters from {len(lib)} transactions -> {args.out}")
    for c in model.clusters:
        fields = ", ".join(repr(f.content) for f in c.fields) or "none"
        print(f"cluster {c.cluster_id}: {len(c.member_indices)} members, centroid #{c.centroid.index}")
        print(f"  prototype: {c.prototype.render()}")
        print(f"  symmetric fields: {fields}")
        if logging.getLogger().isEnabledFor(logging.DEBUG):
            print(render_weights(c.prototype, c.weights))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import ServiceConfig, parse_framing, serve

    try:
        framing = parse_framing(args.framing)
        config = ServiceConfig(host=args.host, port=args.port, framing=framing, model_path=args.model,
                               delay_ms=args.delay_ms, max_connections=args.max_connections,
                               max_message_size=args.max_message_size,
                               append_delimiter=not args.no_append_delimiter)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model = load_model(args.model)

    async def run() -> None:
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, stop.set)
            except (NotImplementedError, RuntimeError):
                pass
        await serve(config, model, stop)

    try:
        asyncio.run(run())
    except OSError as exc:
        print(f"error: cannot listen on {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _write(path: str | None, text: str) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_eval(args) -> int:
    from .cluster import build_response_distance_matrix
    from .evaluate import Strategy, evaluate_strategies, robustness_sweep

    lib = load_library(args.library)
    if not lib.labelled:
        print("error: library has unlabelled transactions; evaluation needs op_type labels", file=sys.stderr)
        return EXIT_FAILURE
    if args.folds < 2:
        raise UsageError("cross-validation needs at least 2 folds")
    params = _params(args, f=args.f[0])
    for f in args.f:
        _params(args, f=f)
    matrix = build_response_distance_matrix(lib, params.scoring)
    accuracies = []
    if args.noise is not None:
        grid = robustness_sweep(lib, args.noise, args.f, args.seed, params=params, folds=args.folds, matrix=matrix)
        print(grid.to_text(), end="")
        _write(args.out, grid.to_json())
        accuracies = list(grid.accuracy.values())
    else:
        if len(args.f) != 1:
            raise UsageError("several --f values need --noise (robustness grid)")
        if args.strategy == "all":
            strategies = list(Strategy)
        else:
            try:
                strategies = [Strategy(args.strategy)]
            except ValueError as exc:
                raise UsageError(f"unknown strategy {args.strategy!r}") from exc
        reports = evaluate_strategies(lib, params, strategies=strategies, folds=args.folds,
                                      seed=args.seed, matrix=matrix)
        for s, rep in reports.items():
            print(f"== {s.value}")
            print(rep.to_text(), end="")
        if len(strategies) > 1:
            print("\nstrategy               accuracy  mean_match_ms  mean_substitution_ms")
            for s, rep in reports.items():
                t = rep.aggregate.timing()
                print(f"{s.value:<22} {rep.accuracy:>8.4f}  {t['mean_match_ms']:>13.4f}  "
                      f"{t['mean_substitution_ms']:>20.4f}")
        payload = {s.value: rep.to_dict(timing=False) for s, rep in reports.items()}
        _write(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        timing = {s.value: rep.to_dict(timing=True) for s, rep in reports.items()}
        _write(args.timing_out, json.dumps(timing, indent=2, sort_keys=True) + "\n")
        accuracies = [rep.accuracy for rep in reports.values()]
    if args.min_accuracy is not None and min(accuracies) < args.min_accuracy:
        print(f"accuracy {min(accuracies):.4f} below threshold {args.min_accuracy}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_bench(args) -> int:
    import numpy as np

    from .analyze import analyze
    from .evaluate import Emulator, Strategy

    params = _params(args)
    lib = load_library(args.library)
    model = analyze(lib, params)
    rng = np.random.default_rng(args.seed)
    picks = rng.choice(len(lib), size=min(args.requests, len(lib)), replace=False)
    print(f"{len(picks)} replayed requests, library of {len(lib)}, {len(model.clusters)} clusters")
    print("strategy               mean_match_ms  mean_substitution_ms")
    for s in Strategy:
        emu = Emulator(s, model, lib)
        emu.respond(lib[int(picks[0])].request)  # warm-up (JIT, caches)
        results = [emu.respond(lib[int(p)].request) for p in picks]
        m = statistics.fmean(r.match_s for r in results) * 1e3
        sub = statistics.fmean(r.substitution_s for r in results) * 1e3
        print(f"{s.value:<22} {m:>13.4f}  {sub:>20.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s %(message)s")
    try:
        return args.handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"opaque-emu: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceFormatError, ModelFormatError, FileExistsError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
