"""One-player problems: policy evaluation, Blackwell search, evaluations and v*."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GameError, StochasticGame

MAX_POLICIES = 10**6
EVALUATION_TOL = 1e-12
TAIL_TOL = 1e-9


def check_mdp(game: StochasticGame) -> None:
    if not game.is_one_player:
        raise GameError("expected a one-player problem (every player-2 action set a singleton)")


def deterministic_mdp(rewards: Sequence[float], successors: Sequence[Sequence[int]], labels=None, name="mdp") -> StochasticGame:
    """Deterministic problem with state rewards; action ``a`` in ``z`` moves to ``successors[z][a]``."""
    n = len(rewards)
    if len(successors) != n:
        raise GameError("one successor list per state required")
    labels = tuple(labels) if labels is not None else tuple(f"z{k}" for k in range(n))
    acts, pay, tra = [], [], []
    for z in range(n):
        if not successors[z]:
            raise GameError(f"state {labels[z]} has no successor")
        acts.append(tuple(f"to:{labels[s]}" for s in successors[z]))
        pay.append([[float(rewards[z])] for _ in successors[z]])
        tra.append([[np.eye(n)[s]] for s in successors[z]])
    return StochasticGame(labels, tuple(acts), (("-",),) * n, tuple(pay), tuple(tra), name)


def _padded(game: StochasticGame):
    """Rewards (K, A) with -inf padding and transitions (K, A, K)."""
    K = game.n_states
    A = max(len(a) for a in game.actions1)
    R = np.full((K, A), -np.inf)
    P = np.zeros((K, A, K))
    for k in range(K):
        m = len(game.actions1[k])
        R[k, :m] = game.payoff[k][:, 0]
        P[k, :m] = game.transition[k][:, 0, :]
    return R, P


def _check_policy(game: StochasticGame, f: Sequence[int]) -> tuple[int, ...]:
    f = tuple(int(a) for a in f)
    if len(f) != game.n_states:
        raise GameError(f"policy has {len(f)} entries for {game.n_states} states")
    for k, a in enumerate(f):
        if not 0 <= a < len(game.actions1[k]):
            raise GameError(f"policy action {a} illegal in state {game.states[k]}")
    return f


def policy_system(game: StochasticGame, f: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix A and reward vector alpha of a pure stationary policy."""
    check_mdp(game)
    f = _check_policy(game, f)
    A = np.array([game.transition[k][f[k], 0] for k in range(game.n_states)])
    alpha = np.array([game.payoff[k][f[k], 0] for k in range(game.n_states)])
    return A, alpha


def evaluate_policy(game: StochasticGame, f: Sequence[int], lam: float) -> np.ndarray:
    """Solve ``(I - (1 - lam) A) v = lam * alpha`` by a dense direct solve."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"discount factor must lie in (0, 1], got {lam}")
    A, alpha = policy_system(game, f)
    M = np.eye(game.n_states) - (1.0 - lam) * A
    try:
        v = np.linalg.solve(M, lam * alpha)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"policy system is singular: {exc}") from None
    res = float(np.max(np.abs(M @ v - lam * alpha)))
    if res > EVALUATION_TOL:
        raise ArithmeticError(f"policy evaluation residual {res:.3e} exceeds {EVALUATION_TOL:g}")
    return v


def policy_count(game: StochasticGame) -> int:
    return math.prod(len(a) for a in game.actions1)


def iter_policies(game: StochasticGame):
    """All pure stationary policies, state 0 varying slowest."""
    return itertools.product(*(range(len(a)) for a in game.actions1))


@dataclass
class BlackwellResult:
    policy: tuple[int, ...]
    lam0: float | None
    lams: np.ndarray
    winners: list[tuple[int, ...]]   # lowest-index optimal policy at each grid point
    deficits: np.ndarray            # max shortfall of ``policy`` against the best at each grid point
    optimal: np.ndarray             # ``policy`` optimal at that grid point

    def table(self) -> list[tuple[float, tuple[int, ...], float, bool]]:
        return list(zip(self.lams.tolist(), self.winners, self.deficits.tolist(), self.optimal.tolist()))


def default_blackwell_grid(k_max: int = 20) -> np.ndarray:
    return 2.0 ** -np.arange(1, k_max + 1)


def _batched_values(game: StochasticGame, policies: np.ndarray, lam: float) -> np.ndarray:
    R, P = _padded(game)
    K = game.n_states
    ks = np.arange(K)
    A = P[ks, policies]                 # (N, K, K)
    alpha = R[ks, policies]             # (N, K)
    M = np.eye(K) - (1.0 - lam) * A
    return np.linalg.solve(M, (lam * alpha)[..., None])[..., 0]


def blackwell_policy(game: StochasticGame, lam_grid: Sequence[float] | None = None, tol: float = 1e-12, chunk: int = 1 << 15) -> BlackwellResult:
    """Enumerate pure stationary policies and find one optimal on the small-lambda end of the grid.

    The returned policy is the lowest-index policy whose value vector is
    coordinate-wise maximal (within ``tol``, widened to the rounding floor
    of the solve) at the smallest grid point.  ``lam0`` is the largest grid
    point from which that policy stays optimal at every smaller grid point.
    This is grid evidence, not a proof.
    """
    check_mdp(game)
    lams = np.asarray(default_blackwell_grid() if lam_grid is None else lam_grid, dtype=float)
    if lams.size == 0 or np.any(lams <= 0) or np.any(lams > 1) or np.any(np.diff(lams) >= 0):
        raise ValueError("grid must be strictly decreasing inside (0, 1]")
    count = policy_count(game)
    if count > MAX_POLICIES:
        raise GameError(f"{count} pure policies exceed the enumeration cap {MAX_POLICIES}; use a smaller instance")
    policies = np.array(list(iter_policies(game)), dtype=np.intp).reshape(count, game.n_states)
    vals = np.empty((lams.size, count, game.n_states))
    for start in range(0, count, chunk):
        block = policies[start:start + chunk]
        for i, lam in enumerate(lams):
            vals[i, start:start + chunk] = _batched_values(game, block, lam)
    winners, winner_idx = [], []
    deficits = np.empty(lams.size)
    for i, lam in enumerate(lams):
        best = vals[i].max(axis=0)
        eff = max(tol, 8.0 * np.finfo(float).eps * max(1.0, float(np.abs(best).max())) / lam)
        ok = np.all(vals[i] >= best - eff, axis=1)
        if not ok.any():
            raise ArithmeticError(f"no policy is coordinate-wise optimal at lambda={lam:g}")
        w = int(np.argmax(ok))
        winner_idx.append((w, eff))
        winners.append(tuple(int(a) for a in policies[w]))
    f_idx = winner_idx[-1][0]
    optimal = np.empty(lams.size, dtype=bool)
    for i in range(lams.size):
        best = vals[i].max(axis=0)
        deficits[i] = float(np.max(best - vals[i, f_idx]))
        optimal[i] = deficits[i] <= winner_idx[i][1]
    lam0 = None
    for i in range(lams.size - 1, -1, -1):
        if not optimal[i]:
            break
        lam0 = float(lams[i])
    return BlackwellResult(tuple(int(a) for a in policies[f_idx]), lam0, lams, winners, deficits, optimal)


def rational_fit(xs: Sequence[float], ys: Sequence[float], p: int, q: int):
    """Fit ``y = P(x) / Q(x)`` with deg P <= p, deg Q <= q and Q(0) = 1 by least squares.

    Returns a callable evaluating the fitted rational function.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    cols = [x**i for i in range(p + 1)] + [-y * x**j for j in range(1, q + 1)]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), y, rcond=None)
    num, den = coef[:p + 1], np.concatenate([[1.0], coef[p + 1:]])

    def r(t):
        t = np.asarray(t, dtype=float)
        return np.polyval(num[::-1], t) / np.polyval(den[::-1], t)

    return r


# --------------------------------------------------------------------------- evaluations

@dataclass(frozen=True)
class Evaluation:
    """Stage weights: finitely supported ``weights`` or geometric with parameter ``lam``."""

    kind: str
    weights: tuple[float, ...] = ()
    lam: float = 0.0

    def __post_init__(self):
        if self.kind == "finite":
            w = np.asarray(self.weights, dtype=float)
            if w.size < 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("finite evaluation needs nonnegative weights summing to 1")
        elif self.kind == "geometric":
            if not 0.0 < self.lam <= 1.0:
                raise ValueError("geometric evaluation needs lam in (0, 1]")
        else:
            raise ValueError(f"unknown evaluation kind {self.kind!r}")

    @classmethod
    def uniform(cls, n: int) -> Evaluation:
        return cls("finite", (1.0 / n,) * n)

    @classmethod
    def geometric(cls, lam: float) -> Evaluation:
        return cls("geometric", lam=float(lam))

    @classmethod
    def dirac(cls, t: int = 1) -> Evaluation:
        if t < 1:
            raise ValueError("stages are numbered from 1")
        return cls("finite", (0.0,) * (t - 1) + (1.0,))

    @classmethod
    def finite(cls, weights: Sequence[float]) -> Evaluation:
        return cls("finite", tuple(float(w) for w in weights))

    def horizon(self, truncation: int | None = None) -> int:
        """Number of stages kept; geometric tails must fall below the tolerance."""
        if self.kind == "finite":
            return len(self.weights) if truncation is None else min(truncation, len(self.weights))
        if truncation is None:
            if self.lam == 1.0:
                return 1
            return max(1, math.ceil(math.log(TAIL_TOL) / math.log1p(-self.lam)))
        return truncation

    def tail(self, T: int) -> float:
        if self.kind == "finite":
            return float(sum(self.weights[T:]))
        return (1.0 - self.lam) ** T

    def truncated(self, truncation: int | None = None) -> np.ndarray:
        T = self.horizon(truncation)
        tail = self.tail(T)
        if tail > TAIL_TOL:
            raise ValueError(f"truncation at {T} stages leaves tail mass {tail:.3e} > {TAIL_TOL:g}")
        if self.kind == "finite":
            return np.asarray(self.weights[:T], dtype=float)
        return self.lam * (1.0 - self.lam) ** np.arange(T)


def total_variation(theta: Evaluation) -> float:
    """``sum_t |theta_{t+1} - theta_t|`` with zero weight after a finite support."""
    if theta.kind == "geometric":
        return theta.lam
    w = np.asarray(theta.weights, dtype=float)
    return float(np.abs(np.diff(np.append(w, 0.0))).sum())


def _greedy_step(R: np.ndarray, P: np.ndarray, w: float, v: np.ndarray) -> np.ndarray:
    return np.max(w * R + P @ v, axis=1) if w else np.max(np.where(np.isfinite(R), P @ v, -np.inf), axis=1)


def theta_value(game: StochasticGame, theta: Evaluation, truncation: int | None = None) -> np.ndarray:
    """Backward induction ``u_t(z) = max_a [theta_t r(z,a) + E u_{t+1}]`` over the kept horizon."""
    check_mdp(game)
    weights = theta.truncated(truncation)
    R, P = _padded(game)
    u = np.zeros(game.n_states)
    for w in weights[::-1]:
        u = _greedy_step(R, P, w, u)
    return u


def shifted_value(game: StochasticGame, theta: Evaluation, m: int, truncation: int | None = None) -> np.ndarray:
    """Value under the evaluation that puts weight ``theta_t`` on stage ``m + t``."""
    if m < 0:
        raise ValueError("shift m must be nonnegative")
    u = theta_value(game, theta, truncation)
    R, P = _padded(game)
    for _ in range(m):
        u = _greedy_step(R, P, 0.0, u)
    return u


@dataclass
class VStarEstimate:
    values: np.ndarray
    m_max: int
    family_size: int
    caveat: str = (
        "approximation: the infimum runs over the supplied family only and the "
        "supremum over shifts is truncated at m_max"
    )


def v_star_upper(game: StochasticGame, family: Sequence[Evaluation], m_max: int, truncation: int | None = None) -> VStarEstimate:
    """``min_theta max_{m <= m_max} v_{m,theta}`` over a finite family."""
    if not family:
        raise ValueError("evaluation family is empty")
    if m_max < 0:
        raise ValueError("m_max must be nonnegative")
    R, P = _padded(game)
    out = np.full(game.n_states, np.inf)
    for theta in family:
        u = theta_value(game, theta, truncation)
        best = u.copy()
        for _ in range(m_max):
            u = _greedy_step(R, P, 0.0, u)
            best = np.maximum(best, u)
        out = np.minimum(out, best)
    return VStarEstimate(out, m_max, len(family))


def stay_actions(game: StochasticGame) -> list[list[int]]:
    return [[i for i in range(len(game.actions1[k])) if abs(game.transition[k][i, 0, k] - 1.0) <= 1e-12]
            for k in range(game.n_states)]


def leavable_v_star(game: StochasticGame, max_sweeps: int = 10**6) -> np.ndarray:
    """Smallest excessive majorant of the stay-put reward.

    Fixpoint of ``w = max(r, max_a E[w(next) | a])`` from ``w = r``, where
    ``r(z)`` is the best payoff among stay-put actions.  With deterministic
    moves this terminates within |Z| sweeps.
    """
    check_mdp(game)
    stays = stay_actions(game)
    missing = [game.states[k] for k, s in enumerate(stays) if not s]
    if missing:
        raise GameError(f"not leavable: no stay-put action in {', '.join(missing)}")
    r = np.array([max(game.payoff[k][i, 0] for i in stays[k]) for k in range(game.n_states)])
    _, P = _padded(game)
    valid = np.isfinite(_padded(game)[0])
    w = r.copy()
    for _ in range(max_sweeps):
        nxt = np.maximum(r, np.max(np.where(valid, P @ w, -np.inf), axis=1))
        if np.array_equal(nxt, w) or np.max(np.abs(nxt - w)) <= 1e-15:
            return nxt
        w = nxt
    raise ArithmeticError("excessive-majorant iteration did not settle")
