"""The Mertens-Neyman epsilon-optimal strategy for finite stochastic games.

Payoffs are mapped affinely into [0, 1].  With psi(s) = C s^(1/M - 1):

    D(y)      = (12/eps) int_y^lam0 psi(s)/s ds + y^(-1/2)
    phi(lam)  = int_0^lam D - lam D(lam) = sqrt(lam) + (12 C M / eps) lam^(1/M)
    d_{t+1}   = max(d1, d_t + g_t - v_{lam_t}(k_{t+1}) + 4 eps),  lam_{t+1} = D^-1(d_{t+1})
    Z_t       = v_{lam_t}(k_t) - phi(lam_t)

and player 1 plays an optimal stationary action of the lam_t-discounted game.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Sequence

import numpy as np

from . import shapley
from .core import Opponent, PlayRecord, StochasticGame, sup_norm

C_FLOOR = 1e-9
HEADROOM = 1.2
GRID_PER_DECADE = 100
LAM1_FLOOR = 1e-12


class CalibrationError(ArithmeticError):
    pass


@dataclass
class MNConfig:
    eps: float
    C: float
    M: int
    lam0: float
    lam1: float
    d1: float
    offset: float
    scale: float
    initial_state: int = 0
    v_limit: float = 0.0          # rescaled limit estimate at the initial state
    v_lam1: float = 0.0           # rescaled v_{lam1}(k1)
    notes: dict = field(default_factory=dict)

    def to_original(self, g: float) -> float:
        return self.offset + self.scale * g

    @property
    def t_threshold(self) -> float:
        """Horizon beyond which the leftover terms d1/T + 1/(eps lam1 T) fall below eps."""
        return (self.d1 + 1.0 / (self.eps * self.lam1)) / self.eps


# --------------------------------------------------------------------------- D, phi

def _check_cfg_params(eps: float, C: float, M: int, lam0: float) -> None:
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if C <= 0 or M < 1 or not 0.0 < lam0 <= 1.0:
        raise ValueError("need C > 0, M >= 1 and lam0 in (0, 1]")


def _D(y: float, eps: float, C: float, M: int, lam0: float) -> float:
    a = 12.0 * C / eps
    if M == 1:
        integral = a * math.log(lam0 / y)
    else:
        b = (M - 1) / M
        integral = a * (M / (M - 1)) * (y**-b - lam0**-b)
    return integral + y**-0.5


def D_fn(y: float, cfg: MNConfig) -> float:
    """D in closed form; the formula also extends past lam0."""
    if y <= 0:
        raise ValueError("D is defined for y > 0")
    return _D(y, cfg.eps, cfg.C, cfg.M, cfg.lam0)


def phi_fn(lam: float, cfg: MNConfig) -> float:
    if not 0.0 <= lam <= cfg.lam0:
        raise ValueError(f"phi is defined on [0, lam0], got {lam}")
    return math.sqrt(lam) + 12.0 * cfg.C * cfg.M / cfg.eps * lam ** (1.0 / cfg.M)


def _D_inv(d: float, eps: float, C: float, M: int, lam0: float, hint: float | None = None) -> float:
    # D is convex and decreasing in u = ln y, so safeguarded Newton converges from anywhere.
    a = 12.0 * C / eps
    hi = math.log(lam0)
    lo = -2.0 * math.log(d) if d > 1.0 else hi - 50.0
    lo = min(lo, hi)
    u = hi if hint is None else min(max(math.log(hint), lo), hi)
    b = (M - 1) / M
    k = a * M / (M - 1) if M > 1 else 0.0
    base = lam0**-b if M > 1 else 0.0
    for _ in range(200):
        e_half = math.exp(-0.5 * u)
        if M == 1:
            f = a * (hi - u) + e_half - d
            fp = -a - 0.5 * e_half
        else:
            e_b = math.exp(-b * u)
            f = k * (e_b - base) + e_half - d
            fp = -k * b * e_b - 0.5 * e_half
        step = f / fp
        u_new = min(max(u - step, lo), hi)
        if abs(u_new - u) <= 1e-15 * max(1.0, abs(u)):
            u = u_new
            break
        u = u_new
    return math.exp(u)


def D_inv(d: float, cfg: MNConfig, hint: float | None = None) -> float:
    """Inverse of D on (0, lam0]; ``hint`` is a starting point for Newton."""
    if d == cfg.d1:
        return cfg.lam1
    if d < _D(cfg.lam0, cfg.eps, cfg.C, cfg.M, cfg.lam0):
        raise ValueError(f"d = {d} is below D(lam0)")
    return _D_inv(d, cfg.eps, cfg.C, cfg.M, cfg.lam0, hint)


def step(cfg: MNConfig, d_t: float, g_t: float, v_next: float, hint: float | None = None) -> tuple[float, float]:
    """One update of (d, lam) from the rescaled payoff and ``v_{lam_t}(k_{t+1})``."""
    d_next = max(cfg.d1, d_t + g_t - v_next + 4.0 * cfg.eps)
    return d_next, D_inv(d_next, cfg, hint)


# --------------------------------------------------------------------------- oracle

class ValueOracle:
    """Memoised discounted solutions for the rescaled game, shareable across threads.

    With ``M = 1`` the discount factor is snapped to a geometric lattice
    through lam1 with ratio ``1 + min(eps/24, eps/(5C))``; snapping moves
    v by at most ``C |lam - lam_q| <= eps lam / 10``.  For ``M > 1`` no such
    bound exists near 0, so every requested lam is solved as is, warm
    started from the nearest solved neighbour.
    """

    def __init__(self, game: StochasticGame, cfg: MNConfig):
        self.game = game
        self.cfg = cfg
        self.lattice = cfg.M == 1
        self.log_ratio = math.log1p(min(cfg.eps / 24.0, cfg.eps / (5.0 * cfg.C)))
        self._lock = threading.Lock()
        self._memo: dict = {}
        self._keys: list[float] = []
        self.max_budget_ratio = 0.0  # worst certified error relative to eps * lam / 10

    def snap(self, lam: float) -> float:
        if not self.lattice:
            return lam
        n = round(math.log(lam / self.cfg.lam1) / self.log_ratio)
        return self.cfg.lam1 * math.exp(n * self.log_ratio) if n else self.cfg.lam1

    def get(self, lam: float):
        """``(v, x, cumulative x per state, error bound)`` for the snapped discount factor."""
        lq = self.snap(lam)
        hit = self._memo.get(lq)
        if hit is not None:
            return hit
        with self._lock:
            hit = self._memo.get(lq)
            if hit is not None:
                return hit
            v0 = None
            if self._keys:
                i = bisect.bisect_left(self._keys, lq)
                near = [self._keys[j] for j in (i - 1, i) if 0 <= j < len(self._keys)]
                v0 = self._memo[min(near, key=lambda s: abs(s - lq))][0]
            tol = max(self.cfg.eps * lq / 20.0, 1e-15)
            sol = shapley.discounted_value(self.game, lq, tol, v0=v0)
            err = sol.error_bound + (abs(lam - lq) * self.cfg.C if self.lattice else 0.0)
            self.max_budget_ratio = max(self.max_budget_ratio, err / (self.cfg.eps * lam / 10.0))
            cum = [list(accumulate(x.tolist())) for x in sol.x]
            entry = (sol.v.tolist(), sol.x, cum, sol.error_bound)
            self._memo[lq] = entry
            bisect.insort(self._keys, lq)
            return entry


def act(game: StochasticGame, k: int, lam: float, tol: float = 1e-10, v0=None) -> np.ndarray:
    """Player 1's optimal stationary mixed action at state ``k`` of the lam-discounted game."""
    return shapley.discounted_value(game, lam, tol, v0=v0).x[game.state_index(k)]


# --------------------------------------------------------------------------- calibration

def rescale_game(game: StochasticGame) -> tuple[StochasticGame, float, float]:
    lo, hi = game.payoff_bounds
    scale = hi - lo if hi > lo else 1.0
    return game.rescaled(lo, scale), lo, scale


def default_grid() -> np.ndarray:
    return 10.0 ** -np.arange(1.0, 7.01, 0.5)


def condition_iii(y: float, eps: float, C: float, M: int, lam0: float) -> float:
    """Smaller of the two D-increments around y (must exceed 6)."""
    Dy = _D(y, eps, C, M, lam0)
    return min(_D(y * (1.0 - eps / 6.0), eps, C, M, lam0) - Dy, Dy - _D(y * (1.0 + eps / 6.0), eps, C, M, lam0))


def calibrate(game: StochasticGame, eps: float, lam_grid: Sequence[float] | None = None, initial_state=0) -> MNConfig:
    """Estimate (C, M, lam0) from discounted values on a grid, then search lam1.

    M comes from the fitted Puiseux exponents (rounded 1/exponent, at least
    1).  C is 20% above the largest ``||v_a - v_b|| / (M (a^(1/M) - b^(1/M)))``
    over adjacent grid pairs at or below 0.1, each difference reduced by
    the solver's certified error.  lam0 is the largest grid point from
    which the bound holds on every adjacent pair below it.  lam1 is found by
    a decreasing search (20 points per decade) for conditions (i)-(iii).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    lams = np.asarray(default_grid() if lam_grid is None else lam_grid, dtype=float)
    if lams.size < 8 or np.any(np.diff(lams) >= 0) or np.any(lams <= 0) or np.any(lams > 1):
        raise ValueError("grid must have at least 8 strictly decreasing points in (0, 1]")
    ratios = lams[1:] / lams[:-1]
    if np.ptp(ratios) > 1e-6 * ratios.mean():
        raise ValueError("grid must be geometric")
    k1 = game.state_index(initial_state)
    g, offset, scale = rescale_game(game)
    sols = [shapley.discounted_value(g, lam, 1e-12) for lam in lams]
    vals = np.array([s.v for s in sols])
    errs = np.array([s.error_bound for s in sols])

    small = lams <= 0.1
    if small.sum() < 4:
        raise CalibrationError("need at least 4 grid points at or below 0.1")
    fits = {}
    M = 1
    for k in range(g.n_states):
        fit = shapley.fit_puiseux(g, k, lams[small])
        fits[g.states[k]] = fit
        if fit.exponent is not None and fit.exponent > 0:
            M = max(M, int(round(1.0 / fit.exponent)))
    limit = fits[g.states[k1]].limit

    def pair_ratio(i: int) -> float:
        a, b = lams[i], lams[i + 1]
        dv = max(0.0, sup_norm(vals[i] - vals[i + 1]) - errs[i] - errs[i + 1])
        return dv / (M * (a ** (1.0 / M) - b ** (1.0 / M)))

    pairs = [i for i in range(lams.size - 1) if small[i]]
    C = max(HEADROOM * max(pair_ratio(i) for i in pairs), C_FLOOR)
    lam0 = float(lams[pairs[0]])
    for i in range(pairs[0] - 1, -1, -1):
        if pair_ratio(i) > C:
            break
        lam0 = float(lams[i])

    def cond_i(lam):
        v1 = shapley.discounted_value(g, lam, 1e-12).v[k1]
        return v1 >= limit - eps, v1

    lam1, v1, checks = None, None, {}
    step_ratio = 10.0 ** (-1.0 / 20.0)
    cand = lam0
    while cand >= LAM1_FLOOR:
        phi = math.sqrt(cand) + 12.0 * C * M / eps * cand ** (1.0 / M)
        iii = condition_iii(cand, eps, C, M, lam0)
        if phi < eps and iii > 6.0:
            ok, v_c = cond_i(cand)
            if ok:
                lam1, v1 = cand, v_c
                checks = {"phi_lam1": phi, "iii_at_lam1": iii}
                break
        cand *= step_ratio
    if lam1 is None:
        raise CalibrationError(
            f"no lambda1 >= {LAM1_FLOOR:g} satisfies the three conditions (C={C:.3g}, M={M}, lam0={lam0:.3g})"
        )
    # condition (iii) is monotone in y; corroborate on a dense log grid below lam1
    ys = lam1 * 10.0 ** -np.linspace(0.0, 6.0, 6 * GRID_PER_DECADE + 1)
    worst = min(condition_iii(float(y), eps, C, M, lam0) for y in ys)
    if worst <= 6.0:
        raise CalibrationError(f"condition (iii) fails below lambda1 (min increment {worst:.3g})")
    checks["iii_min_on_grid"] = worst
    cfg = MNConfig(eps, C, M, lam0, lam1, 0.0, offset, scale, k1, float(limit), float(v1),
                   notes={"fits": fits, "grid": lams, **checks})
    cfg.d1 = D_fn(lam1, cfg)
    return cfg


# --------------------------------------------------------------------------- play

def _kernel_tables(game: StochasticGame):
    cum_q = [[[list(accumulate(game.transition[k][i, j].tolist())) for j in range(game.shape(k)[1])]
              for i in range(game.shape(k)[0])] for k in range(game.n_states)]
    pay = [game.payoff[k].tolist() for k in range(game.n_states)]
    return cum_q, pay


def _draw(cum: list[float], u: float) -> int:
    i = bisect.bisect_right(cum, u * cum[-1])
    return min(i, len(cum) - 1)


def simulate(game: StochasticGame, eps: float, T: int, opponent: Opponent, seed,
             cfg: MNConfig | None = None, oracle: ValueOracle | None = None) -> PlayRecord:
    """Play the strategy for T stages from the configured initial state.

    The record keeps original payoffs; ``lam``, ``d`` and ``z`` (rescaled
    units) have T + 1 entries, ``mixed1``/``mixed2`` the stage mixed actions.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if cfg is None:
        cfg = calibrate(game, eps)
    g, _, _ = rescale_game(game)
    oracle = oracle or ValueOracle(g, cfg)
    rng = np.random.default_rng(seed)
    u = rng.random((T, 3)).tolist()
    cum_q, pay = _kernel_tables(g)
    A1 = max(len(a) for a in game.actions1)
    A2 = max(len(a) for a in game.actions2)
    states = np.empty(T + 1, dtype=np.int64)
    a1 = np.empty(T, dtype=np.int64)
    a2 = np.empty(T, dtype=np.int64)
    lam_arr = np.empty(T + 1)
    d_arr = np.empty(T + 1)
    z_arr = np.empty(T + 1)
    mixed1 = np.zeros((T, A1))
    mixed2 = np.zeros((T, A2))
    k, d, lam = cfg.initial_state, cfg.d1, cfg.lam1
    eps4 = 4.0 * eps
    for t in range(T):
        v, xs, cum_x, _ = oracle.get(lam)
        states[t], lam_arr[t], d_arr[t] = k, lam, d
        z_arr[t] = v[k] - phi_fn(lam, cfg)
        x = xs[k]
        y = np.asarray(opponent(t + 1, k, x), dtype=float)
        ut = u[t]
        i = _draw(cum_x[k], ut[0])
        j = _draw(list(accumulate(y.tolist())), ut[1])
        k_next = _draw(cum_q[k][i][j], ut[2])
        mixed1[t, :x.size] = x
        mixed2[t, :y.size] = y
        a1[t], a2[t] = i, j
        d_next = d + pay[k][i][j] - v[k_next] + eps4
        if d_next <= cfg.d1:
            d, lam = cfg.d1, cfg.lam1
        else:
            d, lam = d_next, _D_inv(d_next, cfg.eps, cfg.C, cfg.M, cfg.lam0, lam)
        k = k_next
    v, _, _, _ = oracle.get(lam)
    states[T], lam_arr[T], d_arr[T] = k, lam, d
    z_arr[T] = v[k] - phi_fn(lam, cfg)
    payoffs = np.array([game.payoff[states[t]][a1[t], a2[t]] for t in range(T)])
    meta = {
        "eps": eps, "C": cfg.C, "M": cfg.M, "lam0": cfg.lam0, "lam1": cfg.lam1, "d1": cfg.d1,
        "T_threshold": cfg.t_threshold, "v_limit": cfg.to_original(cfg.v_limit),
        "oracle_budget_ratio": oracle.max_budget_ratio,
    }
    return PlayRecord(cfg.initial_state, states, a1, a2, payoffs, seed=seed, lam=lam_arr, d=d_arr, z=z_arr,
                      mixed1=mixed1, mixed2=mixed2, meta=meta)


# --------------------------------------------------------------------------- verification

@dataclass
class SubmartingaleReport:
    increments: np.ndarray       # E(Z_{t+1} | H_t) - Z_t
    required: np.ndarray         # 2 eps lam_t
    violations: list[int]        # stages (1-based) with increment < required - tol
    # stages violating: a |d'-d| <= 6, b |lam'-lam| <= eps lam/6,
    # c |v_lam'(k') - v_lam(k')| <= eps lam, d d'-d <= g - v_lam(k') + 4 eps + 1{floor}
    update_checks: dict[str, list[int]]
    consistency: float           # worst mismatch between recorded and recomputed internals
    tol: float

    @property
    def ok(self) -> bool:
        return not self.violations and not any(self.update_checks.values())

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.increments - self.required)) if self.increments.size else math.inf


def check_submartingale(game: StochasticGame, record: PlayRecord, cfg: MNConfig, tol: float = 1e-7,
                        oracle: ValueOracle | None = None) -> SubmartingaleReport:
    """Exact one-step conditional expectations of Z along a recorded play.

    For each stage every outcome (i, j, k') of the recorded mixed actions
    and the kernel is pushed through the update law; outcomes sharing the
    same payoff and next state share the same Z, so they are grouped.
    """
    if record.mixed1 is None or record.mixed2 is None or record.lam is None or record.d is None:
        raise ValueError("record lacks stored mixed actions or internals")
    g, _, _ = rescale_game(game)
    oracle = oracle or ValueOracle(g, cfg)
    T = record.horizon
    eps = cfg.eps
    inc = np.empty(T)
    req = 2.0 * eps * record.lam[:T]
    update_checks = {"a": [], "b": [], "c": [], "d": []}
    consistency = 0.0
    for t in range(T):
        k = int(record.states[t])
        lam, d = float(record.lam[t]), float(record.d[t])
        v, _, _, err_t = oracle.get(lam)
        z_t = v[k] - phi_fn(lam, cfg)
        consistency = max(consistency, abs(z_t - record.z[t]))
        m1, m2 = g.shape(k)
        x, y = record.mixed1[t, :m1], record.mixed2[t, :m2]
        groups: dict[tuple[float, int], float] = {}
        for i in np.nonzero(x > 0)[0]:
            for j in np.nonzero(y > 0)[0]:
                pij = x[i] * y[j]
                gij = float(g.payoff[k][i, j])
                row = g.transition[k][i, j]
                for kn in np.nonzero(row > 0)[0]:
                    key = (gij, int(kn))
                    groups[key] = groups.get(key, 0.0) + pij * row[kn]
        expect = 0.0
        for (gij, kn), p in groups.items():
            dn = max(cfg.d1, d + gij - v[kn] + 4.0 * eps)
            ln = cfg.lam1 if dn == cfg.d1 else _D_inv(dn, eps, cfg.C, cfg.M, cfg.lam0, lam)
            expect += p * (oracle.get(ln)[0][kn] - phi_fn(ln, cfg))
        inc[t] = expect - z_t
        # realised transition
        kn = int(record.states[t + 1])
        gt = float(g.payoff[k][record.actions1[t], record.actions2[t]])
        dn, ln = float(record.d[t + 1]), float(record.lam[t + 1])
        stage = t + 1
        if abs(dn - d) > 6.0:
            update_checks["a"].append(stage)
        if abs(ln - lam) > eps * lam / 6.0 * (1.0 + 1e-12):
            update_checks["b"].append(stage)
        v_next, _, _, err_n = oracle.get(ln)
        if abs(v[kn] - v_next[kn]) > eps * lam + err_t + err_n:
            update_checks["c"].append(stage)
        floor_hit = 1.0 if ln == cfg.lam1 else 0.0
        if dn - d > gt - v[kn] + 4.0 * eps + floor_hit + 8e-16 * max(1.0, abs(d)):
            update_checks["d"].append(stage)
        expected_dn = max(cfg.d1, d + gt - v[kn] + 4.0 * eps)
        consistency = max(consistency, abs(expected_dn - dn))
    violations = [t + 1 for t in range(T) if inc[t] < req[t] - tol]
    return SubmartingaleReport(inc, req, violations, update_checks, consistency, tol)


def trajectory_stats(record: PlayRecord, cfg: MNConfig) -> dict:
    """Discount budget, floor hits and average payoff of one play."""
    lam = record.lam[:record.horizon]
    return {
        "sum_lambda": float(lam.sum()),
        "floor_hits": int(np.count_nonzero(lam == cfg.lam1)),
        "mean_payoff": record.mean_payoff(),
    }


def discounted_opponent(game: StochasticGame, lam: float) -> Opponent:
    """Player 2's optimal stationary strategy of the lam-discounted game."""
    ys = shapley.discounted_value(game, lam, 1e-12).y

    def play(t: int, k: int, x: np.ndarray) -> np.ndarray:
        return ys[k]

    return play


@dataclass
class BatchResult:
    records: list[PlayRecord]
    averages: np.ndarray
    mean: float
    se: float


def simulate_batch(game: StochasticGame, eps: float, T: int, opponent: Opponent, seed: int, reps: int,
                   cfg: MNConfig | None = None, workers: int = 1) -> BatchResult:
    """``reps`` plays sharing one calibration and one oracle; play r uses seed ``[seed, r]``."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if cfg is None:
        cfg = calibrate(game, eps)
    oracle = ValueOracle(rescale_game(game)[0], cfg)

    def one(r: int) -> PlayRecord:
        return simulate(game, eps, T, opponent, [seed, r], cfg, oracle)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            records = list(pool.map(one, range(reps)))
    else:
        records = [one(r) for r in range(reps)]
    avg = np.array([rec.mean_payoff() for rec in records])
    se = float(avg.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return BatchResult(records, avg, float(avg.mean()), se)
