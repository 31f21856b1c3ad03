"""Command-line front end.  Exit codes: 0 success, 1 invalid input, 2 solver failure."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from typing import Iterable, Sequence

import numpy as np

from . import acceptance, bigmatch, core, matgame, mdp, mertens_neyman, pathology, shapley
from .gamefile import GameFileError, load_game

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which is reserved for solver failures
        raise UsageError(f"{self.prog}: {message}")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(c) if isinstance(c, (float, np.floating)) else c for c in row])


def parse_lambdas(spec: str) -> list[float]:
    """``geometric:start,ratio,count`` or comma-separated literals."""
    try:
        if spec.startswith("geometric:"):
            start, ratio, count = spec[len("geometric:"):].split(",")
            n = int(count)
            if n < 1:
                raise ValueError
            return [float(start) * float(ratio) ** i for i in range(n)]
        return [float(s) for s in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad lambda list {spec!r}") from None


def _table(header: Sequence[str], rows: Iterable[Sequence], out) -> None:
    rows = [[fmt(c) if isinstance(c, (float, np.floating)) else str(c) for c in r] for r in rows]
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)), file=out)
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)), file=out)


# --------------------------------------------------------------------------- commands

def cmd_value(a, out):
    game = load_game(a.game)
    if a.discount is not None:
        sol = shapley.discounted_value(game, a.discount, a.tol)
        print(f"discount {fmt(a.discount)}  residual {sol.residual:.3e}  error bound {sol.error_bound:.3e}", file=out)
        rows = [(s, sol.v[k]) for k, s in enumerate(game.states)]
    else:
        sol = shapley.n_stage_values(game, a.horizon, keep_strategies=False)
        print(f"horizon {a.horizon}", file=out)
        rows = [(s, sol.v[k]) for k, s in enumerate(game.states)]
    _table(("state", "value"), rows, out)
    if a.csv:
        write_csv(a.csv, ("state", "value"), rows)


def cmd_sweep(a, out):
    game = load_game(a.game)
    table = shapley.lambda_sweep(game, parse_lambdas(a.lambdas), a.tol)
    header = ["lambda"] + [f"v_{s}" for s in game.states]
    rows = [[lam, *v.tolist()] for lam, v in table]
    _table(header, rows, out)
    write_csv(a.csv, header, rows)


def cmd_limit(a, out):
    game = load_game(a.game)
    mid, gap = shapley.estimate_limit(game, a.n, a.lam, a.tol)
    print(f"n = {a.n}, lambda = {fmt(a.lam)}, ||v_n - v_lambda|| = {gap:.3e}", file=out)
    _table(("state", "estimate"), [(s, mid[k]) for k, s in enumerate(game.states)], out)


def cmd_puiseux(a, out):
    game = load_game(a.game)
    grid = parse_lambdas(a.grid) if a.grid else None
    fit = shapley.fit_puiseux(game, a.state, grid)
    print(f"limit {fmt(fit.limit)}", file=out)
    if fit.exponent is None:
        print(f"exponent none ({fit.note})", file=out)
    else:
        print(f"exponent {fmt(fit.exponent)}\ncoefficient {fmt(fit.coefficient)}", file=out)


def cmd_blackwell(a, out):
    game = load_game(a.game)
    res = mdp.blackwell_policy(game, parse_lambdas(a.lambdas) if a.lambdas else None)
    names = [game.actions1[k][i] for k, i in enumerate(res.policy)]
    print(f"policy {res.policy} ({', '.join(f'{s}:{n}' for s, n in zip(game.states, names))})", file=out)
    print(f"lambda0 {fmt(res.lam0) if res.lam0 is not None else 'none on grid'}", file=out)
    _table(("lambda", "winner", "deficit", "optimal"),
           [(lam, "".join(map(str, w)), d, o) for lam, w, d, o in res.table()], out)


def cmd_bigmatch(a, out):
    wc = bigmatch.worst_case_average(a.M, a.T)
    print(f"M {a.M}  T {a.T}", file=out)
    print(f"worst-case average {fmt(wc.value)}", file=out)
    print(f"bound M/(2(M+1)) - M/(2T) {fmt(wc.bound)}", file=out)
    print(f"minimising sequence {wc.witness_str}", file=out)
    if a.simulate:
        opp = bigmatch.Opponent.parse(a.opponent or wc.witness_str, a.T)
        res = bigmatch.simulate(a.M, a.T, opp, a.seed, a.simulate)
        se = "n/a" if math.isnan(res.se) else fmt(res.se)
        print(f"simulated average {fmt(res.mean)}  SE {se}  ({a.simulate} plays, seed {a.seed})", file=out)


def _mn_opponent(game, spec: str):
    if spec.startswith("discounted:"):
        try:
            lam = float(spec.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad opponent spec {spec!r}") from None
        return mertens_neyman.discounted_opponent(game, lam)
    return core.parse_opponent(game, spec)


def cmd_mn(a, out):
    game = load_game(a.game)
    opp = _mn_opponent(game, a.opponent)
    cfg = mertens_neyman.calibrate(game, a.eps, initial_state=a.state)
    res = mertens_neyman.simulate_batch(game, a.eps, a.T, opp, a.seed, a.reps, cfg)
    print(f"calibration: C {cfg.C:.6g}  M {cfg.M}  lambda0 {cfg.lam0:.6g}  lambda1 {cfg.lam1:.6g}  d1 {cfg.d1:.6g}", file=out)
    print("(C and M are fitted on a discount grid and extrapolated below it)", file=out)
    print(f"limit value estimate {fmt(cfg.to_original(cfg.v_limit))}", file=out)
    print(f"guarantee v - 8 eps = {fmt(cfg.to_original(cfg.v_limit - 8 * a.eps))} (original units)", file=out)
    print(f"horizon threshold T* {cfg.t_threshold:.6g}" + ("" if a.T >= cfg.t_threshold else " (T is below it)"), file=out)
    se = "n/a" if math.isnan(res.se) else fmt(res.se)
    print(f"average payoff {fmt(res.mean)}  SE {se}  ({a.reps} plays, seed {a.seed})", file=out)
    if a.check:
        g_scaled = mertens_neyman.rescale_game(game)[0]
        oracle = mertens_neyman.ValueOracle(g_scaled, cfg)
        bad = 0
        for rec in res.records:
            rep = mertens_neyman.check_submartingale(game, rec, cfg, oracle=oracle)
            bad += len(rep.violations) + sum(len(v) for v in rep.update_checks.values())
        print(f"submartingale and update-bound violations: {bad}", file=out)
    if a.csv:
        rec = res.records[0]
        T = rec.horizon
        rows = [(t + 1, game.states[rec.states[t]], int(rec.actions1[t]), int(rec.actions2[t]),
                 float(rec.payoffs[t]), float(rec.lam[t]), float(rec.d[t]), float(rec.z[t])) for t in range(T)]
        write_csv(a.csv, ("t", "state", "action1", "action2", "payoff", "lambda", "d", "z"), rows)


def cmd_pathology(a, out):
    rows = pathology.sequence_sweep(a.sequence, a.n_from, a.n_to, a.n_max, literal=a.literal)
    header = ("n", "lambda", "x", "y", "alpha", "beta", "hypothesis")
    data = [(r.n, r.lam, r.x, r.y, r.alpha, r.beta, int(r.hypothesis)) for r in rows]
    _table(header, data, out)
    if a.csv:
        write_csv(a.csv, header, data)


def cmd_selftest(a, out):
    only = None
    if a.only:
        try:
            only = [int(s) for s in a.only.split(",")]
        except ValueError:
            raise UsageError(f"bad criterion list {a.only!r}") from None
        known = {c[0] for c in acceptance.CRITERIA}
        if not set(only) <= known:
            raise UsageError(f"criteria must be among {sorted(known)}")
    ok = True
    for num in only or [c[0] for c in acceptance.CRITERIA]:
        res = acceptance.run_one(num)
        print(res.line(), file=out, flush=True)
        ok &= res.passed
    return EXIT_OK if ok else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stochgames", description="Solvers for finite zero-sum stochastic games.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    game_help = "game document path or builtin:NAME (example1, example2, bigmatch, pathology(N))"

    s = sub.add_parser("value", help="discounted or n-stage values")
    s.add_argument("--game", required=True, help=game_help)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--discount", type=float)
    g.add_argument("--horizon", type=int)
    s.add_argument("--tol", type=float, default=shapley.DEFAULT_TOL)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_value)

    s = sub.add_parser("sweep", help="discounted values over a list of discount factors")
    s.add_argument("--game", required=True, help=game_help)
    s.add_argument("--lambdas", required=True, help="geometric:start,ratio,count or a comma-separated list")
    s.add_argument("--csv", required=True)
    s.add_argument("--tol", type=float, default=shapley.DEFAULT_TOL)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("limit", help="estimate the limit value from v_n and v_lambda")
    s.add_argument("--game", required=True, help=game_help)
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--lam", type=float, default=1e-4)
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_limit)

    s = sub.add_parser("puiseux", help="fit v_lambda(state) ~ v0 + c lambda^p")
    s.add_argument("--game", required=True, help=game_help)
    s.add_argument("--state", required=True)
    s.add_argument("--grid", help="discount grid, same syntax as --lambdas")
    s.set_defaults(func=cmd_puiseux)

    s = sub.add_parser("mdp-blackwell", help="Blackwell-optimal pure stationary policy of a one-player game")
    s.add_argument("--game", required=True, help=game_help)
    s.add_argument("--lambdas", help="discount grid (default 2^-1 .. 2^-20)")
    s.set_defaults(func=cmd_blackwell)

    s = sub.add_parser("bigmatch", help="exact worst case of the counter strategy in the Big Match")
    s.add_argument("--M", type=int, required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--simulate", type=int, metavar="REPS")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--opponent", help="L, R, stationary:p or an L/R string (default: the minimising sequence)")
    s.set_defaults(func=cmd_bigmatch)

    s = sub.add_parser("mn", help="play the epsilon-optimal strategy against an opponent")
    s.add_argument("--game", required=True, help=game_help)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--opponent", required=True,
                   help="uniform, myopic, pure:J, stationary:p1,p2,... or discounted:LAMBDA")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--state", default="0", help="initial state label or index")
    s.add_argument("--check", action="store_true", help="verify the submartingale property on every play")
    s.add_argument("--csv", help="write the first play stage by stage")
    s.set_defaults(func=cmd_mn)

    s = sub.add_parser("pathology", help="discounted values of the oscillating game along a sequence")
    s.add_argument("--sequence", choices=("even", "odd"), required=True)
    s.add_argument("--n-from", type=int, required=True)
    s.add_argument("--n-to", type=int, required=True)
    s.add_argument("--n-max", type=int)
    s.add_argument("--literal", action="store_true", help="use lambda = 2^-2n / 2^-(2n+1) instead of the sqrt reading")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_pathology)

    s = sub.add_parser("selftest", help="run the acceptance battery")
    s.add_argument("--only", help="comma-separated criterion numbers")
    s.set_defaults(func=cmd_selftest)
    return p


def _state_arg(a):
    if getattr(a, "state", None) is not None and a.command == "mn":
        a.state = int(a.state) if a.state.isdigit() else a.state


SOLVER_ERRORS = (ArithmeticError, matgame.LPError, np.linalg.LinAlgError)


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        a = build_parser().parse_args(argv)
        _state_arg(a)
        code = a.func(a, out)
        return EXIT_OK if code is None else code
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (UsageError, GameFileError, core.GameError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
