"""Command-line entry point: ``acpmbr {decode,complete,bench,tune}``.

Exit codes: 0 success, 2 usage/config/parse error, 3 external-metric
transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import formats
from .decoding import (
    STRATEGIES,
    CandidateSet,
    decode_ac_pmbr,
    decode_mbr,
    decode_pmbr,
    select_map,
    select_oracle,
)
from .evaluation import (
    BENCH_COLUMNS,
    CostModel,
    bench,
    rows_to_csv,
    synthetic_instance,
    tune_gamma,
)
from .factorization import FactorizerConfig, ac_als_fit, als_fit, complete
from .metrics import Metric, MetricTransportError, make_metric
from .sampling import derive_seed
from .synth import SynthSpec

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRANSPORT = 3

DEFAULT_GAMMA_GRID = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"

_logger = logging.getLogger("acpmbr")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _add_factor_flags(p: argparse.ArgumentParser, gamma_default: float | None = 0.1) -> None:
    g = p.add_argument_group("factorizer")
    g.add_argument("--rank", type=int, default=8)
    g.add_argument("--lambda", dest="lam", type=float, default=0.1)
    if gamma_default is not None:
        g.add_argument("--gamma", type=float, default=gamma_default)
    g.add_argument("--max-iters", type=int, default=30)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--init-scale", type=float, default=0.1)
    g.add_argument("--restarts", type=int, default=1, help="independent fits; the lowest objective is kept")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--coverage", action=argparse.BooleanOptionalAction, default=True)


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic matrices")
    g.add_argument("--n", type=int, default=256, help="rows (candidates)")
    g.add_argument("--m", type=int, default=None, help="columns (pseudo-references); defaults to --n")
    g.add_argument("--true-rank", type=int, default=8)
    g.add_argument("--noise", type=float, default=0.0, help="ground-truth noise sigma")
    g.add_argument("--rho", type=float, default=0.9, help="distilled/target correlation weight")
    g.add_argument("--sigma-d", type=float, default=0.0, help="distilled noise sigma")
    g.add_argument("--value-range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    g.add_argument("--n-seeds", type=int, default=10, help="number of synthetic instances")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acpmbr",
        description="MBR decoding with low-rank completion of partially scored utility matrices.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="select one candidate per input record")
    p.add_argument("input", help="JSONL corpus, '-' for stdin")
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--target-metric", default="chrf")
    p.add_argument("--distilled-metric", default=None)
    p.add_argument("--metric-cmd", default=None, help="command line of the external target scorer")
    p.add_argument("--distilled-metric-cmd", default=None, help="command line of the external distilled scorer")
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--r-prime", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-")
    _add_factor_flags(p)

    p = sub.add_parser("complete", help="complete a partial score matrix")
    p.add_argument("matrix", help="partial-matrix file (target)")
    p.add_argument("--mode", choices=("als", "ac-als"), default="als")
    p.add_argument("--distilled", default=None, help="partial-matrix file of the distilled metric")
    p.add_argument("--init-factors", default=None, help="resume target factors from a factor file")
    p.add_argument("--init-distilled-factors", default=None)
    p.add_argument("--out", required=True, help="dense output path")
    p.add_argument("--factors-out", default=None)
    p.add_argument("--distilled-factors-out", default=None)
    _add_factor_flags(p)

    p = sub.add_parser("bench", help="ALS vs AC-ALS completion MSE on synthetic matrices")
    p.add_argument(
        "--cell",
        action="append",
        default=None,
        metavar="R_ALS:R:R_PRIME",
        help="reduction rates for plain ALS and AC-ALS (target, distilled); repeatable",
    )
    p.add_argument("--target-params", type=float, default=579.0)
    p.add_argument("--distilled-params", type=float, default=30.0)
    p.add_argument("--out", default="-")
    _add_factor_flags(p, gamma_default=1.0)
    _add_synth_flags(p)

    p = sub.add_parser("tune", help="sweep the agreement weight on dev instances")
    p.add_argument("--grid", default=DEFAULT_GAMMA_GRID, help="comma-separated gamma values")
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--r-prime", type=int, required=True)
    p.add_argument(
        "--pair",
        action="append",
        nargs=2,
        default=None,
        metavar=("TRUTH", "DISTILLED"),
        help="dense ground-truth / distilled matrix files; repeatable (default: synthetic)",
    )
    p.add_argument("--n-dev", type=int, default=3, help="synthetic dev instances")
    p.add_argument("--out", default="-")
    _add_factor_flags(p, gamma_default=None)
    _add_synth_flags(p)
    p.set_defaults(n_seeds=3)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _factor_cfg(args) -> FactorizerConfig:
    try:
        return FactorizerConfig(
            rank=args.rank,
            lam=args.lam,
            gamma=getattr(args, "gamma", 0.0) or 0.0,
            max_iters=args.max_iters,
            tol=args.tol,
            seed=args.seed,
            init_scale=args.init_scale,
            restarts=args.restarts,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _synth_spec(args) -> SynthSpec:
    try:
        return SynthSpec(
            n_rows=args.n,
            n_cols=args.m or args.n,
            true_rank=args.true_rank,
            noise_sigma=args.noise,
            correlation=args.rho,
            value_range=tuple(args.value_range),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        formats.write_text(path, text)


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return formats.read_text(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def parse_corpus(text: str) -> list[CandidateSet]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            cands = rec["candidates"]
            if not isinstance(cands, list) or not all(isinstance(c, str) for c in cands):
                raise ValueError("'candidates' must be a list of strings")
            refs = rec.get("pseudo_refs")
            if refs is not None and (not isinstance(refs, list) or not all(isinstance(c, str) for c in refs)):
                raise ValueError("'pseudo_refs' must be a list of strings")
            out.append(
                CandidateSet(
                    source=rec.get("source", ""),
                    candidates=cands,
                    pseudo_refs=refs,
                    model_scores=rec.get("model_scores"),
                    reference=rec.get("reference"),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"line {lineno}: {exc}") from None
    return out


def _build_metric(spec: str | None, cmd: str | None, what: str) -> Metric:
    try:
        return make_metric(spec, cmd)
    except ValueError as exc:
        raise UsageError(f"{what} metric: {exc}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_decode(args) -> int:
    strategy = args.strategy
    if strategy == "ac-pmbr" and not args.distilled_metric:
        raise UsageError("ac-pmbr needs --distilled-metric")
    if strategy in ("pmbr", "ac-pmbr") and args.r is None:
        raise UsageError(f"{strategy} needs --r")
    if strategy == "ac-pmbr" and args.r_prime is None:
        raise UsageError("ac-pmbr needs --r-prime")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    cfg = _factor_cfg(args)
    corpus = parse_corpus(_read_input(args.input))

    target = distilled = None
    if strategy != "map":
        target = _build_metric(args.target_metric, args.metric_cmd, "target")
    if strategy == "ac-pmbr":
        distilled = _build_metric(args.distilled_metric, args.distilled_metric_cmd, "distilled")

    for k, cs in enumerate(corpus):
        N, M = cs.shape
        if strategy == "map" and cs.model_scores is None:
            raise UsageError(f"record {k + 1}: map needs model_scores")
        if strategy == "oracle" and cs.reference is None:
            raise UsageError(f"record {k + 1}: oracle needs a reference")
        for rate in (args.r, args.r_prime if strategy == "ac-pmbr" else None):
            if strategy in ("pmbr", "ac-pmbr") and rate is not None and (rate < 1 or N * M // rate < 1):
                raise UsageError(f"record {k + 1}: reduction rate {rate} leaves no observed cells")

    def run(item):
        k, cs = item
        # per-instance streams: target mask, distilled mask, factor init
        mask_t, mask_d, init = (derive_seed(args.seed, k, s) for s in range(3))
        if strategy == "map":
            return select_map(cs)
        if strategy == "oracle":
            return select_oracle(cs, target)
        if strategy == "mbr":
            return decode_mbr(cs, target)
        if strategy == "pmbr":
            return decode_pmbr(cs, target, args.r, cfg.with_(seed=init), mask_t, args.coverage)
        return decode_ac_pmbr(
            cs, target, distilled, args.r, args.r_prime, cfg.with_(seed=init), (mask_t, mask_d), args.coverage
        )

    try:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            selections = list(pool.map(run, enumerate(corpus)))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    finally:
        for m in (target, distilled):
            if m is not None:
                m.close()

    lines = []
    for cs, sel in zip(corpus, selections):
        rec = {
            "source": cs.source,
            "candidates": cs.candidates,
            "strategy": sel.strategy,
            "index": sel.index,
            "selection": cs.candidates[sel.index],
            "expected_utilities": sel.expected_utilities,
            "metric_calls_target": sel.metric_calls_target,
            "metric_calls_distilled": sel.metric_calls_distilled,
        }
        lines.append(json.dumps(rec, ensure_ascii=False))
    _emit(args.out, "\n".join(lines) + ("\n" if lines else ""))
    return EXIT_OK


def _load_partial(path: str):
    try:
        return formats.parse_partial(formats.read_text(path))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load_factors(path: str | None):
    if path is None:
        return None
    try:
        return formats.parse_factors(formats.read_text(path))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_complete(args) -> int:
    if args.mode == "ac-als" and not args.distilled:
        raise UsageError("--mode ac-als needs --distilled")
    cfg = _factor_cfg(args)
    P = _load_partial(args.matrix)
    init_t = _load_factors(args.init_factors)
    try:
        if args.mode == "als":
            F, report = als_fit(P, cfg, init=init_t)
            Fd = None
        else:
            Pd = _load_partial(args.distilled)
            init_d = _load_factors(args.init_distilled_factors)
            init = None
            if init_t is not None or init_d is not None:
                if init_t is None or init_d is None:
                    raise UsageError("resuming ac-als needs both --init-factors and --init-distilled-factors")
                init = (init_t, init_d)
            F, Fd, report = ac_als_fit(P, Pd, cfg, init=init)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    formats.write_text(args.out, formats.dump_dense(complete(F)))
    if args.factors_out:
        formats.write_text(args.factors_out, formats.dump_factors(F))
    if args.distilled_factors_out and Fd is not None:
        formats.write_text(args.distilled_factors_out, formats.dump_factors(Fd))
    print(
        f"{args.mode}: iterations={report.iterations_run} converged={report.converged} "
        f"final_loss={report.final_loss!r}",
        file=sys.stderr,
    )
    return EXIT_OK


def _parse_cells(cells: list[str] | None) -> list[tuple[int, int, int]]:
    out = []
    for text in cells or ["512:1024:64"]:
        parts = text.split(":")
        try:
            vals = tuple(int(p) for p in parts)
        except ValueError:
            raise UsageError(f"bad grid cell {text!r}") from None
        if len(vals) != 3 or min(vals) < 1:
            raise UsageError(f"grid cell {text!r} must be three positive integers R_ALS:R:R_PRIME")
        out.append(vals)
    return out


def cmd_bench(args) -> int:
    cells = _parse_cells(args.cell)
    spec = _synth_spec(args)
    if args.n_seeds < 1:
        raise UsageError("--n-seeds must be >= 1")
    for cell in cells:
        if min(spec.n_rows * spec.n_cols // r for r in cell) < 1:
            raise UsageError(f"grid cell {cell} leaves no observed cells")
    cfg = _factor_cfg(args)
    try:
        cost_model = CostModel(args.target_params, args.distilled_params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seeds = [derive_seed(args.seed, s) for s in range(args.n_seeds)]
    rows = bench(spec, args.sigma_d, cells, args.gamma, seeds, cfg, cost_model, args.coverage)
    _emit(args.out, rows_to_csv(rows, BENCH_COLUMNS))
    return EXIT_OK


def cmd_tune(args) -> int:
    try:
        grid = [float(g) for g in args.grid.split(",") if g.strip()]
    except ValueError:
        raise UsageError(f"bad gamma grid {args.grid!r}") from None
    if not grid or min(grid) < 0:
        raise UsageError("gamma grid must hold non-negative values")
    if args.r < 1 or args.r_prime < 1 or args.n_seeds < 1:
        raise UsageError("reduction rates and --n-seeds must be >= 1")
    cfg = _factor_cfg(args)
    if args.pair:
        dev = []
        for truth_path, dist_path in args.pair:
            try:
                dev.append((formats.parse_dense(formats.read_text(truth_path)), formats.parse_dense(formats.read_text(dist_path))))
            except (OSError, ValueError) as exc:
                raise UsageError(str(exc)) from None
    else:
        spec = _synth_spec(args)
        dev = [synthetic_instance(spec, args.sigma_d, derive_seed(args.seed, 1000 + k)) for k in range(args.n_dev)]
    seeds = list(range(args.n_seeds))
    try:
        result = tune_gamma(dev, grid, cfg, args.r, args.r_prime, seeds, args.coverage)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(args.out, result.to_csv())
    print(f"best_gamma={result.best_gamma!r} mse={result.mse_per_point[result.best_point]!r}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"decode": cmd_decode, "complete": cmd_complete, "bench": cmd_bench, "tune": cmd_tune}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"acpmbr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MetricTransportError as exc:
        print(f"acpmbr {args.command}: metric transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
