"""Command-line front end: enumerate, train-embedding, solve, eval, compare.

Every CSV or text artifact starts with a ``#`` header line recording the
tool version, a hash of the game configuration and the seed. Wall-clock
timings go to separate ``*_timing.txt`` files so that reruns with the same
inputs produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import os
import sys
import time
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from .abstraction_baseline import BucketMap, default_budgets, ehs_bucket_map
from .best_response import exploitability
from .cards import GameConfig, load_config, preset
from .embed_net import (
    ConfigurationError,
    NetworkProvider,
    TrainConfig,
    default_m,
    load_params,
    round_dataset,
    save_params,
    train_round,
)
from .embedding_cfr import EmbeddingCFR
from .hand_strength import count_isomorphism_classes
from .public_tree import public_tree
from .solver_core import TabularCFR

SOLVERS = ("vanilla", "embedding", "bucketed")
METRICS_COLUMNS = "iteration,b1,b2,epsilon,epsilon_mbg"
# abstraction sizes used for full-scale Numeral211 unless overridden
NUMERAL211_BUDGETS = {1: 225, 2: 396}
FULL_SCALE_CLASSES = 10_000


class CommandError(Exception):
    """A user-facing error; printed without a traceback."""


# ---------------------------------------------------------------------------
# shared plumbing


def config_hash(config: GameConfig) -> str:
    return hashlib.sha256(config.to_text().encode("utf-8")).hexdigest()[:16]


def header_line(config: GameConfig, seed: int) -> str:
    return f"# ecfr {__version__} config={config_hash(config)} seed={seed}\n"


def resolve_game(args) -> tuple[str, GameConfig]:
    if args.config:
        return Path(args.config).stem, load_config(args.config)
    try:
        return args.game, preset(args.game)
    except ValueError as exc:
        raise CommandError(str(exc)) from None


def output_dir(args, game: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get("ECFR_DATA_DIR", "ecfr_data")) / game
    out.mkdir(parents=True, exist_ok=True)
    return out


def is_full_scale(config: GameConfig) -> bool:
    return count_isomorphism_classes(config, config.num_rounds - 1) > FULL_SCALE_CLASSES


def require_scale(args, config: GameConfig) -> None:
    if is_full_scale(config) and not args.full:
        raise CommandError(
            "this game is full scale (runs take days and large memory); pass --full to acknowledge"
        )


def parse_sizes(text: str | None, config: GameConfig, name: str) -> dict[int, int] | None:
    """Per-round sizes for rounds 2..R: a comma list of counts, or one fraction of the class counts."""
    if text is None:
        return None
    R = config.num_rounds
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) == 1 and "." in parts[0]:
        frac = float(parts[0])
        if not 0 < frac <= 1:
            raise CommandError(f"--{name} fraction must be in (0, 1], got {frac}")
        return {r: max(2, int(round(frac * count_isomorphism_classes(config, r)))) for r in range(1, R)}
    try:
        sizes = [int(p) for p in parts]
    except ValueError:
        raise CommandError(f"--{name} expects comma-separated integers or one fraction, got {text!r}") from None
    if len(sizes) != R - 1:
        raise CommandError(f"--{name} needs {R - 1} values (rounds 2..{R}), got {len(sizes)}")
    if min(sizes) < 2:
        raise CommandError(f"--{name} values must be at least 2")
    return {r: s for r, s in zip(range(1, R), sizes)}


def default_sizes(config: GameConfig, game: str) -> dict[int, int]:
    if game == "numeral211":
        return dict(NUMERAL211_BUDGETS)
    return {r: default_m(count_isomorphism_classes(config, r)) for r in range(1, config.num_rounds)}


def net_path(out: Path, round_index: int) -> Path:
    return out / f"embedding_r{round_index + 1}.ecfrnet"


def load_provider(out: Path, config: GameConfig, rounds) -> NetworkProvider:
    params = {}
    for r in rounds:
        path = net_path(out, r)
        if not path.exists():
            raise CommandError(f"missing embedding network {path}; run train-embedding first")
        params[r] = load_params(path)
    return NetworkProvider(config, params)


def trend(values) -> tuple[float, float, float]:
    """(Spearman rho against iteration, smoothed first, smoothed last); smoothing is a width-3 mean."""
    v = np.asarray(values, dtype=float)
    rho = float(spearmanr(np.arange(len(v)), v)[0]) if len(v) > 1 else float("nan")
    w = min(3, len(v))
    return rho, float(v[:w].mean()), float(v[-w:].mean())


# ---------------------------------------------------------------------------
# commands


def cmd_enumerate(args) -> int:
    game, config = resolve_game(args)
    out = io.StringIO()
    out.write(header_line(config, args.seed))
    out.write("round,player_hands,canonical_classes\n")
    rounds = range(config.num_rounds) if args.round is None else [args.round - 1]
    for r in rounds:
        out.write(f"{r + 1},{config.count_player_hands(r)},{count_isomorphism_classes(config, r)}\n")
    text = out.getvalue()
    sys.stdout.write(text)
    if args.out:
        (output_dir(args, game) / "enumerate.csv").write_text(text)
    return 0


def cmd_train_embedding(args) -> int:
    game, config = resolve_game(args)
    require_scale(args, config)
    out = output_dir(args, game)
    sizes = parse_sizes(args.m, config, "m") or default_sizes(config, game)
    log = io.StringIO()
    log.write(header_line(config, args.seed))
    log.write("round,epoch,mse,baseline_mse\n")
    timing = []
    for r, m in sorted(sizes.items()):
        t0 = time.perf_counter()
        X, Y, W = round_dataset(config, r)
        cfg = TrainConfig(m=m, seed=args.seed + r, epochs=args.epochs)
        res = train_round(cfg, X, Y, W)
        save_params(net_path(out, r), res.params)
        for e, loss in enumerate(res.epoch_losses, 1):
            log.write(f"{r + 1},{e},{loss:.10g},{res.baseline_mse:.10g}\n")
        timing.append(f"round {r + 1}: {time.perf_counter() - t0:.2f} s\n")
        print(f"round {r + 1}: m={m} mse={res.final_mse:.6g} baseline={res.baseline_mse:.6g} -> {net_path(out, r)}")
    (out / "embedding_loss.csv").write_text(log.getvalue())
    (out / "embedding_timing.txt").write_text("".join(timing))
    return 0


def _bucket_map(args, config: GameConfig, game: str, out: Path) -> BucketMap:
    if args.bucket_map:
        return BucketMap.load(args.bucket_map, config)
    sizes = parse_sizes(args.buckets, config, "buckets") or default_sizes(config, game)
    bm = ehs_bucket_map(config, sizes, seed=args.seed, all_rounds=args.features == "all-rows")
    bm.save(out / "buckets.csv")
    return bm


def build_solver(args, config: GameConfig, game: str, out: Path, solver: str):
    if solver == "vanilla":
        return TabularCFR(config)
    if solver == "bucketed":
        return TabularCFR(config, buckets=_bucket_map(args, config, game, out).rounds)
    rounds = range(1, config.num_rounds)
    provider = load_provider(out, config, rounds)
    budget = None if args.budget in (None, "all") else int(args.budget)
    try:
        return EmbeddingCFR(config, provider, budget=budget, full=args.budget == "all", seed=args.seed)
    except ConfigurationError as exc:
        raise CommandError(str(exc)) from None


def settings_line(args, solver: str) -> str:
    return (f"# solver={solver} iters={args.iters} eval_every={args.eval_every} m={args.m} "
            f"buckets={args.buckets} budget={args.budget} features={args.features}\n")


def run_solve(args, solver: str) -> Path:
    game, config = resolve_game(args)
    require_scale(args, config)
    out = output_dir(args, game)
    t0 = time.perf_counter()
    cfr = build_solver(args, config, game, out, solver)
    tree = public_tree(config)
    lines = [header_line(config, args.seed), settings_line(args, solver), METRICS_COLUMNS + "\n"]
    for t in range(1, args.iters + 1):
        cfr.iterate()
        if t % args.eval_every == 0 or t == args.iters:
            rep = exploitability(config, cfr.average_strategy(), tree)
            lines.append(f"{t},{rep.csv_row()}\n")
            if not args.quiet:
                print(f"{solver} T={t} exploitability={rep.epsilon_mbg:.4f} mb/g", flush=True)
    cfr.save(out / f"{solver}.ckpt")
    metrics = out / f"{solver}_metrics.csv"
    metrics.write_text("".join(lines))
    (out / f"{solver}_timing.txt").write_text(f"{time.perf_counter() - t0:.2f} s for {args.iters} iterations\n")
    return metrics


def cmd_solve(args) -> int:
    path = run_solve(args, args.solver)
    print(f"metrics -> {path}")
    return 0


def cmd_eval(args) -> int:
    game, config = resolve_game(args)
    require_scale(args, config)
    out = output_dir(args, game)
    ckpt = out / f"{args.solver}.ckpt"
    if not ckpt.exists():
        raise CommandError(f"missing checkpoint {ckpt}; run solve --solver {args.solver} first")
    if args.solver == "embedding":
        provider = load_provider(out, config, range(1, config.num_rounds))
        cfr = EmbeddingCFR.load(ckpt, config, provider)
    else:
        buckets = None
        if args.solver == "bucketed":
            path = Path(args.bucket_map) if args.bucket_map else out / "buckets.csv"
            if not path.exists():
                raise CommandError(f"missing bucket map {path}")
            buckets = BucketMap.load(path, config).rounds
        cfr = TabularCFR.load(ckpt, config, buckets)
    rep = exploitability(config, cfr.average_strategy())
    text = header_line(config, args.seed) + f"# solver={args.solver} iteration={cfr.T}\n" + rep.to_text()
    sys.stdout.write(text)
    (out / f"{args.solver}_eval.txt").write_text(text)
    return 0


def read_metrics(path: Path) -> tuple[list[str], dict[int, float]]:
    comments, rows = [], {}
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            comments.append(line + "\n")
        elif line and not line.startswith("iteration"):
            fields = line.split(",")
            rows[int(fields[0])] = float(fields[4])
    return comments, rows


def cmd_compare(args) -> int:
    game, config = resolve_game(args)
    require_scale(args, config)
    out = output_dir(args, game)
    solvers = [s.strip() for s in args.solver.split(",")] if args.solver else list(SOLVERS)
    for s in solvers:
        if s not in SOLVERS:
            raise CommandError(f"unknown solver {s!r}; choose from {', '.join(SOLVERS)}")
    curves = {}
    for s in solvers:
        path = out / f"{s}_metrics.csv"
        expected = [header_line(config, args.seed), settings_line(args, s)]
        if not path.exists() or read_metrics(path)[0] != expected:
            path = run_solve(args, s)
        curves[s] = read_metrics(path)[1]
    grid = sorted(set().union(*[c.keys() for c in curves.values()]))
    table = io.StringIO()
    table.write(header_line(config, args.seed))
    table.write("iteration," + ",".join(f"{s}_mbg" for s in solvers) + "\n")
    for t in grid:
        table.write(f"{t}," + ",".join(f"{curves[s][t]:.12g}" if t in curves[s] else "" for s in solvers) + "\n")
    (out / "compare.csv").write_text(table.getvalue())

    summary = io.StringIO()
    summary.write(header_line(config, args.seed))
    summary.write(f"{'solver':<10} {'final mb/g':>12} {'spearman':>9} {'first(sm)':>12} {'last(sm)':>12}\n")
    for s in solvers:
        vals = [curves[s][t] for t in sorted(curves[s])]
        rho, first, last = trend(vals)
        summary.write(f"{s:<10} {vals[-1]:>12.4f} {rho:>9.3f} {first:>12.4f} {last:>12.4f}\n")
    order = sorted(solvers, key=lambda s: curves[s][max(curves[s])])
    summary.write("ordering by final exploitability (lowest first): " + " < ".join(order) + "\n")
    (out / "compare_summary.txt").write_text(summary.getvalue())
    sys.stdout.write(summary.getvalue())
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--game", default="kuhn", help="game preset name")
    common.add_argument("--config", help="game configuration file (overrides --game)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="artifact directory (default $ECFR_DATA_DIR/<game>)")
    common.add_argument("--workers", type=int, default=1,
                        help="accepted for compatibility; numerical work runs in one process")
    common.add_argument("--full", action="store_true", help="acknowledge a full-scale run")

    solve = argparse.ArgumentParser(add_help=False)
    solve.add_argument("--m", help="advisors per round for rounds 2..R (comma list or one fraction)")
    solve.add_argument("--buckets", help="bucket counts for rounds 2..R (comma list or one fraction)")
    solve.add_argument("--bucket-map", help="CSV bucket map to use instead of clustering")
    solve.add_argument("--features", choices=("ehs", "all-rows"), default="ehs",
                       help="clustering features: current-round EHS or every strength row")
    solve.add_argument("--iters", type=int, default=100)
    solve.add_argument("--budget", help="deals sampled per embedding iteration, or 'all'")
    solve.add_argument("--eval-every", type=int, default=8)
    solve.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="ecfr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ecfr {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enumerate", parents=[common], help="per-round hand and class counts")
    e.add_argument("--round", type=int, help="only this round (1-based)")
    e.set_defaults(func=cmd_enumerate)

    t = sub.add_parser("train-embedding", parents=[common], help="train one embedding network per abstracted round")
    t.add_argument("--m", help="advisors per round for rounds 2..R (comma list or one fraction)")
    t.add_argument("--epochs", type=int, default=200)
    t.set_defaults(func=cmd_train_embedding)

    s = sub.add_parser("solve", parents=[common, solve], help="run a solver and record exploitability")
    s.add_argument("--solver", choices=SOLVERS, default="vanilla")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("eval", parents=[common], help="exploitability of a saved checkpoint")
    v.add_argument("--solver", choices=SOLVERS, default="vanilla")
    v.add_argument("--bucket-map", help="bucket map used by the bucketed checkpoint")
    v.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", parents=[common, solve], help="solve several solvers and merge their curves")
    c.add_argument("--solver", help="comma-separated solvers (default: all three)")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "eval_every", 1) < 1 or getattr(args, "iters", 1) < 1:
        print("ecfr: error: --iters and --eval-every must be positive", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (CommandError, ConfigurationError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"ecfr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
