"""``samm-lab`` command line interface.

Exit codes: 0 success, 1 I/O or usage error, 2 infeasible parameters or a
failed verification.  Data goes to standard output (or ``--out``); log
messages go to standard error.  ``--config FILE`` reads a JSON object whose
keys are option names (dashes or underscores); explicit flags win.  The
``SAMM_LAB_SEED`` environment variable sets the default seed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import fees, game, properties, replay, risk, throughput, trace
from .amm import MarketPrices, ShardState
from .errors import InfeasibleError, SammError
from .strategy import SystemState

log = logging.getLogger("samm_lab")

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get("SAMM_LAB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"SAMM_LAB_SEED must be an integer, got {raw!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _fee_from_args(args, allow_cpmm: bool = False):
    if allow_cpmm and getattr(args, "cpmm", False):
        return fees.CpmmFee(args.gamma)
    if getattr(args, "params_file", None):
        return fees.load_params(args.params_file)
    return fees.solve_params_for_c(args.c, getattr(args, "ratio", 5.0))


# -- subcommands -------------------------------------------------------------------

def cmd_params(args) -> int:
    if args.beta1 is not None or args.rmin is not None or args.rmax is not None:
        if None in (args.beta1, args.rmin, args.rmax, args.c):
            raise _UsageError("validation mode needs --beta1, --rmin, --rmax and --c")
        params = fees.FeeParams.samm(args.beta1, args.rmin, args.rmax)
    else:
        if args.c is None:
            raise _UsageError("give --c to solve, or --beta1/--rmin/--rmax/--c to validate")
        try:
            params = fees.solve_params_for_c(args.c, args.ratio)
        except InfeasibleError as exc:
            _emit(_dump({"c": args.c, "feasible": False, "error": str(exc)}), None)
            return EXIT_FAIL
    report = fees.feasibility_report(params, args.c)
    if report.feasible:
        params = params.with_c(args.c)
    if args.params_out:
        fees.save_params(params, args.params_out)
        log.info("wrote %s", args.params_out)
    _emit(_dump({"report": report.to_dict(), "params": params.to_dict()}), args.out)
    return EXIT_OK if report.feasible else EXIT_FAIL


def cmd_verify(args) -> int:
    fee = _fee_from_args(args, allow_cpmm=True)
    c = fee.c if fee.c > 0 else args.c
    checks = []
    if args.samples > 0:
        for check in (properties.check_non_splitting, properties.check_smaller_better):
            checks.append(check(fee, c, samples=args.samples, seed=args.seed).to_dict())
        if 2 <= args.shards <= 4:
            state = SystemState.from_reserves([1e6] * args.shards, MarketPrices(1.0, 1.0))
            rep = game.verify_trader_spne(state, 0.5 * c * 1e6, fee, grid=args.grid)
            checks.append({"name": "trader_spne", "passed": rep.passed, "margin": rep.margin,
                           "actions_checked": rep.actions_checked})
    ok = all(ch["passed"] for ch in checks)
    _emit(_dump({"c": c, "fee": "cpmm" if args.cpmm else "samm", "passed": ok, "checks": checks}), args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_replay(args) -> int:
    if args.trace:
        records = trace.load_trace(args.trace)
    else:
        model = trace.TraceModel(reference_reserve_a=args.reserve_a, reference_reserve_b=args.reserve_b)
        records = trace.synthesize_trace(model, seed=args.trace_seed, count=args.count)
    caps = {args.shards: math.inf, 1: math.inf} if args.no_cap else None
    cfg = replay.ReplayConfig(
        n_shards=args.shards, fee=_fee_from_args(args), reference_reserve_a=args.reserve_a,
        reference_reserve_b=args.reserve_b, throughput_caps=caps, warmup_seconds=args.warmup,
        measure_seconds=args.measure if args.measure > 0 else None, start_index=args.start,
        repetitions=args.reps, seed=args.seed, volume_capacity=not args.no_volume_capacity)
    log.info("replaying %d trades on %d shards, %d repetitions", len(records), args.shards, args.reps)
    report = replay.run_replay(records, cfg)
    _emit(report.to_csv() if args.format == "csv" else report.to_json(), args.out)
    return EXIT_OK


def cmd_throughput(args) -> int:
    if args.fit:
        params, r2 = throughput.fit_p(throughput.load_observations(args.fit))
        result = {"t_single": params.t_single, "p_parallel": params.p_parallel, "r_squared": r2,
                  "asymptotic_bound": throughput.asymptotic_bound(params)}
    elif args.predict:
        t_single, p, n = args.predict
        params = throughput.AmdahlParams(t_single, p)
        result = {"t_single": t_single, "p_parallel": p, "n": n,
                  "speedup": throughput.speedup(params, n),
                  "throughput": throughput.throughput(params, n, args.hard_cap),
                  "asymptotic_bound": throughput.asymptotic_bound(params)}
    else:
        raise _UsageError("give --fit CSV or --predict T_SINGLE P N")
    _emit(json.dumps(result, indent=2, default=str) + "\n", args.out)
    return EXIT_OK


def cmd_risk(args) -> int:
    pool = ShardState(args.reserve_a, args.reserve_b)
    prices = MarketPrices(args.reserve_b / args.reserve_a, 1.0)
    if args.cpmm_counterexample:
        result = risk.cpmm_counterexample(args.c, pool, args.gamma).to_dict()
    else:
        if args.min_output is not None:
            sc = risk.SandwichScenario(args.input, pool, prices, args.min_output)
        else:
            sc = risk.SandwichScenario.from_tolerance(args.input, args.tolerance, pool, prices)
        result = risk.sandwich_report(sc, args.sizes or ())
    _emit(_dump(result), args.out)
    return EXIT_OK


def _dist(spec: str) -> game.Distribution:
    kind, _, rest = spec.partition(":")
    try:
        values = [float(v) for v in rest.split(",") if v]
    except ValueError:
        raise _UsageError(f"bad distribution {spec!r}") from None
    return game.Distribution(kind, tuple(values))


def cmd_game(args) -> int:
    fee = _fee_from_args(args)
    state = SystemState.from_reserves(args.reserves, MarketPrices(1.0, 1.0))
    cfg = game.SchedulerConfig(args.p_lp, args.p_ab, args.p_ba, _dist(args.endowment),
                               _dist(args.demand_ab), _dist(args.demand_ba), args.seed)
    result = game.run_game(state, cfg, args.steps, fee)
    if args.trace_out:
        result.write_jsonl(args.trace_out)
        log.info("wrote %s", args.trace_out)
    summary = {
        "steps": len(result.steps),
        "skipped": sum(s.skipped is not None for s in result.steps),
        "final_reserves_a": result.final.reserves_a.tolist(),
        "final_reserve_ratio": game.reserve_ratio(result.final),
    }
    _emit(_dump(summary), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _fee_options(p, cpmm: bool = False) -> None:
    p.add_argument("--params-file", help="fee parameters in key = value form")
    p.add_argument("--c", type=float, default=0.01, help="certified fraction (solved when no file is given)")
    p.add_argument("--ratio", type=float, default=5.0, help="r_max / r_min used when solving")
    if cpmm:
        p.add_argument("--cpmm", action="store_true", help="use a constant-ratio CPMM fee instead")
        p.add_argument("--gamma", type=float, default=0.997)


def build_parser(seed: int) -> tuple[_Parser, dict]:
    parser = _Parser(prog="samm-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    subs = {}

    p = subs["params"] = sub.add_parser("params", help="solve or validate fee parameters")
    p.add_argument("--c", type=float)
    p.add_argument("--ratio", type=float, default=5.0)
    p.add_argument("--beta1", type=float)
    p.add_argument("--rmin", type=float)
    p.add_argument("--rmax", type=float)
    p.add_argument("--params-out", help="write the parameters in key = value form")
    p.set_defaults(func=cmd_params)

    p = subs["verify"] = sub.add_parser("verify", help="sampled property and equilibrium checks")
    _fee_options(p, cpmm=True)
    p.add_argument("--shards", type=int, default=2)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_verify)

    p = subs["replay"] = sub.add_parser("replay", help="replay a trace against SAMM and a CPMM baseline")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--trace", help="trace CSV")
    src.add_argument("--synthetic", action="store_true", help="use a synthetic trace (default)")
    p.add_argument("--count", type=int, default=100_000)
    p.add_argument("--trace-seed", type=int, default=seed)
    _fee_options(p)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--measure", type=int, default=1, help="seconds measured; 0 for the whole trace")
    p.add_argument("--no-cap", action="store_true", help="disable throughput caps")
    p.add_argument("--no-volume-capacity", action="store_true")
    p.add_argument("--reserve-a", type=float, default=1e6)
    p.add_argument("--reserve-b", type=float, default=2e6)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_replay)

    p = subs["throughput"] = sub.add_parser("throughput", help="Amdahl-law fit or prediction")
    p.add_argument("--fit", help="CSV with columns n,throughput")
    p.add_argument("--predict", type=float, nargs=3, metavar=("T_SINGLE", "P", "N"))
    p.add_argument("--hard-cap", type=float)
    p.set_defaults(func=cmd_throughput)

    p = subs["risk"] = sub.add_parser("risk", help="sandwich revenue or CPMM counterexample")
    p.add_argument("--cpmm-counterexample", action="store_true")
    p.add_argument("--sandwich", action="store_true", help="sandwich analysis (default)")
    p.add_argument("--input", type=float, default=100.0, help="victim input of token A")
    p.add_argument("--tolerance", type=float, default=0.01)
    p.add_argument("--min-output", type=float)
    p.add_argument("--sizes", type=float, nargs="*", help="pool sizes (token A) for the sweep")
    p.add_argument("--reserve-a", type=float, default=1e4)
    p.add_argument("--reserve-b", type=float, default=1e4)
    p.add_argument("--c", type=float, default=0.01)
    p.add_argument("--gamma", type=float, default=0.997)
    p.set_defaults(func=cmd_risk)

    p = subs["game"] = sub.add_parser("game", help="run the sequential trader/provider game")
    _fee_options(p)
    p.add_argument("--reserves", type=float, nargs="+", default=[1000.0, 1000.0])
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--p-lp", type=float, default=0.2)
    p.add_argument("--p-ab", type=float, default=0.4)
    p.add_argument("--p-ba", type=float, default=0.4)
    p.add_argument("--endowment", default="uniform:0,100", help="kind:params, e.g. constant:10")
    p.add_argument("--demand-ab", default="uniform:0,5")
    p.add_argument("--demand-ba", default="uniform:0,5")
    p.add_argument("--trace-out", help="write the step trace as JSON lines")
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_game)

    for p in subs.values():
        p.add_argument("--out", help="write the result here instead of standard output")
    return parser, subs


def _apply_config(argv, parser, subs) -> None:
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        config = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise _UsageError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(config, dict):
        raise _UsageError("config must be a JSON object")
    command = next((a for a in rest if a in subs), None)
    if command is None:
        return
    valid = {a.dest for a in subs[command]._actions}
    defaults = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest in valid:
            defaults[dest] = value
        else:
            log.warning("ignoring unknown config key %r for %s", key, command)
    subs[command].set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        parser, subs = build_parser(_default_seed())
        _apply_config(argv, parser, subs)
        args = parser.parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.INFO)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (SammError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
