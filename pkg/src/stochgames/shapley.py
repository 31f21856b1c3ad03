"""Shapley operator, n-stage and discounted values, limit diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import matgame
from .core import StochasticGame, sup_norm

DEFAULT_TOL = 1e-9


class ConvergenceError(ArithmeticError):
    """A fixed-point iteration stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass
class DiscountedSolution:
    lam: float
    v: np.ndarray
    x: list[np.ndarray]
    y: list[np.ndarray]
    residual: float
    iterations: int
    method: str
    error_bound: float
    history: list[float] = field(default_factory=list, repr=False)


@dataclass
class NStageSolution:
    n: int
    values: np.ndarray  # shape (n + 1, K); row m is v_m, row 0 is zero
    x: list[list[np.ndarray]] | None  # x[t - 1][k]: player 1 at stage t of the n-stage game
    y: list[list[np.ndarray]] | None

    @property
    def v(self) -> np.ndarray:
        return self.values[-1]


@dataclass
class PuiseuxFit:
    limit: float
    exponent: float | None
    coefficient: float
    note: str = ""


def _check_v(game: StochasticGame, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (game.n_states,):
        raise ValueError(f"value vector has shape {v.shape}, expected ({game.n_states},)")
    return v


def _step(game: StochasticGame, v: np.ndarray, stage_weight: float, cont_weight: float, tol: float, shift=None):
    """Per-state values and strategies of ``stage_weight*g + cont_weight*Q v - shift``."""
    out = np.empty(game.n_states)
    xs, ys = [], []
    for k in range(game.n_states):
        mat = stage_weight * game.payoff[k] + cont_weight * (game.transition[k] @ v)
        if shift is not None:
            mat = mat - shift[k]
        out[k], x, y = matgame.solve(mat, tol)
        xs.append(x)
        ys.append(y)
    return out, xs, ys


def apply_operator(game: StochasticGame, v, tol: float = matgame.DEFAULT_TOL) -> np.ndarray:
    """Shapley operator: per state, the value of ``g(k,i,j) + sum_k' q(k'|k,i,j) v(k')``."""
    return _step(game, _check_v(game, v), 1.0, 1.0, tol)[0]


def discounted_operator(game: StochasticGame, v, lam: float, tol: float = matgame.DEFAULT_TOL):
    """``lam * Psi((1 - lam) / lam * v)`` evaluated as ``Val(lam g + (1 - lam) Q v)``.

    Returns the image together with the per-state optimal strategies.
    """
    v = _check_v(game, v)
    defect, xs, ys = _step(game, v, lam, 1.0 - lam, tol, shift=v)
    return v + defect, xs, ys


def _defect(game: StochasticGame, v: np.ndarray, lam: float):
    """``Psi_lam(v) - v`` evaluated on shifted matrices, so that small
    residuals are not swamped by rounding of O(1) entries."""
    return _step(game, v, lam, 1.0 - lam, matgame.DEFAULT_TOL, shift=v)


def n_stage_values(
    game: StochasticGame, n: int, tol: float = matgame.DEFAULT_TOL, keep_strategies: bool = True
) -> NStageSolution:
    """Values v_0..v_n of the n-stage games via ``(m+1) v_{m+1} = Psi(m v_m)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    K = game.n_states
    values = np.zeros((n + 1, K))
    total = np.zeros(K)
    xs_rev: list[list[np.ndarray]] = []
    ys_rev: list[list[np.ndarray]] = []
    for m in range(n):
        total, x, y = _step(game, total, 1.0, 1.0, tol)
        values[m + 1] = total / (m + 1)
        if keep_strategies:
            xs_rev.append(x)
            ys_rev.append(y)
    if not keep_strategies:
        return NStageSolution(n, values, None, None)
    # the m-th application drives stage n - m of the n-stage game
    return NStageSolution(n, values, xs_rev[::-1], ys_rev[::-1])


# --------------------------------------------------------------------------- discounted

def _policy_iteration(cost: list[np.ndarray], trans: list[np.ndarray], minimise: bool, start: list[int]):
    """Exact value of a discounted MDP given as per-state cost vectors and
    sub-stochastic transition matrices (discount already folded in)."""
    K = len(cost)
    sign = 1.0 if minimise else -1.0
    policy = list(start)
    eye = np.eye(K)
    for _ in range(200 + 10 * sum(len(c) for c in cost)):
        P = np.array([trans[k][policy[k]] for k in range(K)])
        c = np.array([cost[k][policy[k]] for k in range(K)])
        w = np.linalg.solve(eye - P, c)
        changed = False
        for k in range(K):
            q = sign * (cost[k] + trans[k] @ w)
            cur = q[policy[k]]
            best = int(np.argmin(q))
            if q[best] < cur - 1e-13 * (1.0 + abs(cur)):
                policy[k] = best
                changed = True
        if not changed:
            return w, policy
    raise ConvergenceError("policy iteration did not stabilise", float("nan"))


def _response_value(game: StochasticGame, lam: float, strat: list[np.ndarray], responder: int, v_hint: np.ndarray):
    """Value of a stationary strategy of one player against the other's best reply."""
    cost, trans, start = [], [], []
    for k in range(game.n_states):
        s = strat[k]
        if responder == 2:
            c = lam * (s @ game.payoff[k])
            P = (1.0 - lam) * np.einsum("i,ijk->jk", s, game.transition[k])
        else:
            c = lam * (game.payoff[k] @ s)
            P = (1.0 - lam) * np.einsum("j,ijk->ik", s, game.transition[k])
        q = c + P @ v_hint
        cost.append(c)
        trans.append(P)
        start.append(int(np.argmin(q) if responder == 2 else np.argmax(q)))
    w, _ = _policy_iteration(cost, trans, minimise=(responder == 2), start=start)
    return w


def _solve_iterate(game, lam, tol, v, max_iter):
    history: list[float] = []
    stop = tol * lam / (1.0 - lam) if lam < 1.0 else math.inf
    for it in range(1, max_iter + 1):
        defect, _, _ = _defect(game, v, lam)
        change = sup_norm(defect)
        history.append(change)
        v = v + defect
        if change <= stop:
            return v, it, history
    raise ConvergenceError(f"value iteration hit the cap of {max_iter} iterations", history[-1])


def _pair_value(game: StochasticGame, lam: float, xs, ys) -> np.ndarray:
    """Exact discounted value of a pair of stationary strategies."""
    K = game.n_states
    P = np.empty((K, K))
    c = np.empty(K)
    for k in range(K):
        c[k] = lam * (xs[k] @ game.payoff[k] @ ys[k])
        P[k] = (1.0 - lam) * np.einsum("i,j,ijk->k", xs[k], ys[k], game.transition[k])
    return np.linalg.solve(np.eye(K) - P, c)


def _rounding_floor(v: np.ndarray, lam: float) -> float:
    # the linear solves have condition number ~1/lam
    return 4.0 * np.finfo(float).eps * max(1.0, sup_norm(v)) / lam


def _solve_strategy(game, lam, tol, v, max_iter):
    """Newton iteration on the discounted Shapley equation inside a certified bracket.

    At each iterate the greedy strategies' values against best replies give
    ``lo <= v_lam <= hi``.  The Newton step evaluates the greedy pair
    exactly; when it fails to halve the bracket width the next iterate is
    ``lo`` itself, a Hoffman-Karp step, which is monotone and convergent.
    """
    history: list[float] = []
    K = game.n_states
    lo, hi = np.full(K, -np.inf), np.full(K, np.inf)
    width = np.inf
    newton = True
    flat = 0
    for it in range(1, max_iter + 1):
        defect, xs, ys = _defect(game, v, lam)
        res = sup_norm(defect)
        history.append(res)
        if res <= tol * lam:
            return v, it, history, res / lam
        lo = np.maximum(lo, _response_value(game, lam, xs, 2, v))
        hi = np.minimum(hi, _response_value(game, lam, ys, 1, v))
        bound = float(np.max(np.maximum(hi - v, v - lo)))
        if bound <= tol:
            return v, it, history, bound
        new_width = sup_norm(hi - lo)
        newton = new_width <= 0.5 * width
        flat = flat + 1 if new_width >= width * (1.0 - 1e-3) else 0
        if flat >= 3:
            if bound <= 100.0 * _rounding_floor(v, lam):
                return v, it, history, bound
            raise ConvergenceError(f"discounted solver stalled with bracket width {new_width:.3e}", res)
        width = new_width
        v = _pair_value(game, lam, xs, ys) if newton else lo.copy()
    raise ConvergenceError(f"discounted solver hit the cap of {max_iter} iterations", history[-1])


def discounted_value(
    game: StochasticGame,
    lam: float,
    tol: float = DEFAULT_TOL,
    *,
    method: str = "strategy",
    v0=None,
    max_iter: int | None = None,
) -> DiscountedSolution:
    """Value of the lam-discounted game with stationary optimal strategies.

    ``method="iterate"`` runs the fixed-point iteration ``v <- Val(lam g +
    (1 - lam) Q v)`` and stops once the successive change is below
    ``tol * lam / (1 - lam)``.  ``method="strategy"`` (default) runs a
    Newton iteration on greedy strategy pairs inside a certified bracket,
    whose cost does not grow like 1/lam; it stops once the Shapley residual is below ``tol * lam``, or, when the
    residual is stuck at rounding level, once the values of the greedy
    strategies against best replies bracket the solution within ``tol``.
    Either way ``error_bound`` bounds ``||v - v_lam||``; it never drops
    below the rounding floor ``~eps / lam``, so tolerances under that floor
    cannot be certified.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"discount factor must lie in (0, 1], got {lam}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.zeros(game.n_states) if v0 is None else _check_v(game, v0).copy()
    if method == "iterate":
        v, it, history = _solve_iterate(game, lam, tol, v, max_iter or 10**7)
        bound = None
    elif method == "strategy":
        v, it, history, bound = _solve_strategy(game, lam, tol, v, max_iter or 500)
    else:
        raise ValueError(f"unknown method {method!r}")
    defect, xs, ys = _defect(game, v, lam)
    residual = sup_norm(defect)
    if bound is None:
        bound = residual / lam
    bound = max(bound, _rounding_floor(v, lam))
    return DiscountedSolution(lam, v, xs, ys, residual, it, method, bound, history)


def shapley_residual(game: StochasticGame, v, lam: float) -> float:
    """``||v - lam * Psi((1 - lam)/lam * v)||`` computed through :func:`apply_operator`."""
    v = _check_v(game, v)
    return sup_norm(v - lam * apply_operator(game, (1.0 - lam) / lam * v))


def lambda_sweep(game: StochasticGame, lams: Sequence[float], tol: float = DEFAULT_TOL, **kw) -> list[tuple[float, np.ndarray]]:
    """Discounted values for each discount factor, in the given order.

    Each point is solved from scratch so the table does not depend on order.
    """
    for lam in lams:
        if not 0.0 < lam <= 1.0:
            raise ValueError(f"discount factor must lie in (0, 1], got {lam}")
    return [(float(lam), discounted_value(game, lam, tol, **kw).v) for lam in lams]


def estimate_limit(game: StochasticGame, n_big: int, lam_small: float, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, float]:
    """Midpoint of v_n and v_lam, and their sup-norm discrepancy."""
    if n_big < 1:
        raise ValueError("n_big must be at least 1")
    vn = n_stage_values(game, n_big, keep_strategies=False).v
    vl = discounted_value(game, lam_small, tol).v
    return (vn + vl) / 2.0, sup_norm(vn - vl)


def variation_sum(game: StochasticGame, lams: Sequence[float], tol: float = DEFAULT_TOL) -> np.ndarray:
    """Partial sums of ``||v_{lam_{i+1}} - v_{lam_i}||`` along the sequence."""
    vals = [v for _, v in lambda_sweep(game, lams, tol)]
    steps = [sup_norm(b - a) for a, b in zip(vals, vals[1:])]
    return np.cumsum(steps)


# --------------------------------------------------------------------------- Puiseux

def _richardson(lam_a: float, va: float, lam_b: float, vb: float, p: float) -> float:
    r = (lam_b / lam_a) ** p
    return (va * r - vb) / (r - 1.0)


def _log_fit(lams: np.ndarray, vals: np.ndarray, v0: float):
    dev = np.abs(vals - v0)
    keep = dev > 0
    if keep.sum() < 2:
        return None
    slope, intercept = np.polyfit(np.log(lams[keep]), np.log(dev[keep]), 1)
    return float(slope), float(intercept)


def default_puiseux_grid() -> np.ndarray:
    return 10.0 ** -np.arange(3.0, 7.01, 0.5)


def fit_puiseux(
    game: StochasticGame, state, lam_grid: Sequence[float] | None = None, tol: float = 1e-12,
    refinements: int = 10,
) -> PuiseuxFit:
    """Fit ``v_lam(state) ~ v_0 + c * lam**p`` on a decreasing geometric grid.

    ``v_0`` is first extrapolated from the two smallest grid points assuming
    ``p = 1/2``, then re-extrapolated with the fitted slope until the slope
    settles (at most ``refinements`` passes; 1 gives a single refinement).  Returns
    ``exponent=None`` with note "no correction term" when ``v_lam`` is
    constant on the grid up to the solver's certified error.
    """
    k = game.state_index(state)
    lams = np.asarray(default_puiseux_grid() if lam_grid is None else lam_grid, dtype=float)
    if lams.size < 4:
        raise ValueError("Puiseux fit needs at least 4 grid points")
    if np.any(lams <= 0) or np.any(lams > 0.1) or np.any(np.diff(lams) >= 0):
        raise ValueError("grid must be strictly decreasing inside (0, 0.1]")
    ratios = lams[1:] / lams[:-1]
    if np.ptp(ratios) > 1e-6 * ratios.mean():
        raise ValueError("grid must be geometric")
    sols = [discounted_value(game, lam, tol) for lam in lams]
    vals = np.array([s.v[k] for s in sols])
    noise = max(s.error_bound for s in sols)
    if np.ptp(vals) <= 4.0 * noise + 1e-12:
        return PuiseuxFit(float(vals[-1]), None, 0.0, "no correction term")
    v0 = _richardson(lams[-1], vals[-1], lams[-2], vals[-2], 0.5)
    fit = _log_fit(lams, vals, v0)
    if fit is None:
        return PuiseuxFit(float(v0), None, 0.0, "no correction term")
    for _ in range(refinements):
        if fit[0] <= 0:
            break
        v0_new = _richardson(lams[-1], vals[-1], lams[-2], vals[-2], fit[0])
        refit = _log_fit(lams, vals, v0_new)
        if refit is None:
            break
        done = abs(refit[0] - fit[0]) < 1e-6
        v0, fit = v0_new, refit
        if done:
            break
    slope, intercept = fit
    sign = 1.0 if vals[0] >= v0 else -1.0
    return PuiseuxFit(float(v0), slope, sign * math.exp(intercept))

