"""Player 1's counter strategy in the Big Match, its exact worst case, and Monte Carlo play.

Conventions: player 1 rows are T (index 0) and B (index 1), player 2 columns
L (0) and R (1).  (T, L) absorbs at 1, (T, R) absorbs at 0, B pays 1 against
R and 0 against L.  ``m`` is the number of R's minus the number of L's seen
so far.  Since ``m`` only depends on player 2's own past choices, any rule
of player 2 based on (t, m) unrolls into a fixed sequence, and the backward
recursions below minimise over all such sequences.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import PlayRecord

MAX_T = 2000
L, R = 0, 1


def sigma_m_prob(m: int, M: int) -> float:
    """Probability of T at counter ``m``: ``1 / (m + M + 1)^2``."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    if m < -M:
        raise ValueError(f"counter {m} is below -M = {-M}: unreachable before absorption")
    return 1.0 / (m + M + 1) ** 2


def _grid(M: int, top: int):
    ms = np.arange(-M, top + 1)
    return ms, 1.0 / (ms + M + 1.0) ** 2


def _down(a):  # a(m - 1), padded where the coefficient (1 - p) vanishes
    return np.concatenate(([0.0], a[:-1]))


def _up(a):  # a(m + 1); the top entry is out of reach of the start state
    return np.concatenate((a[1:], a[-1:]))


def _check_mt(M: int, T: int) -> None:
    if M < 0:
        raise ValueError("M must be nonnegative")
    if T < 1:
        raise ValueError("T must be at least 1")
    if T > MAX_T:
        raise ValueError(f"T = {T} exceeds the DP limit {MAX_T}")


def _payoff_to_go(M: int, T: int) -> list[np.ndarray]:
    """``W[k][m]``: minimal expected payoff sum over the last ``k`` stages at counter ``m``."""
    ms, p = _grid(M, T + 1)
    W = [np.zeros(ms.size)]
    for k in range(1, T + 1):
        prev = W[-1]
        left = p * k + (1.0 - p) * _down(prev)
        right = (1.0 - p) * (1.0 + _up(prev))
        W.append(np.minimum(left, right))
    return W


def worst_case_table(M: int, T_max: int) -> np.ndarray:
    """Worst expected average for every horizon ``T = 1..T_max`` (entry ``T - 1``)."""
    _check_mt(M, T_max)
    W = _payoff_to_go(M, T_max)
    return np.array([W[T][M] / T for T in range(1, T_max + 1)])


def guarantee_bound(M: int, T: int) -> float:
    return M / (2.0 * (M + 1)) - M / (2.0 * T)


@dataclass
class WorstCase:
    M: int
    T: int
    value: float
    bound: float
    witness: tuple[int, ...]  # 0 = L, 1 = R

    @property
    def witness_str(self) -> str:
        return "".join("LR"[j] for j in self.witness)


def worst_case_average(M: int, T: int) -> WorstCase:
    """Exact ``min_y E[(1/T) sum g_t]`` over pure opponent sequences, with a minimising sequence."""
    _check_mt(M, T)
    W = _payoff_to_go(M, T)
    ms, p = _grid(M, T + 1)
    m, seq = 0, []
    for t in range(1, T + 1):
        k = T - t + 1
        i = m + M
        prev = W[k - 1]
        left = p[i] * k + (1.0 - p[i]) * (prev[i - 1] if i > 0 else 0.0)
        right = (1.0 - p[i]) * (1.0 + prev[i + 1])
        if left <= right:
            seq.append(L)
            m -= 1
        else:
            seq.append(R)
            m += 1
        if m < -M:  # absorbed surely; the rest of the witness is irrelevant
            seq.extend([L] * (T - t))
            break
    return WorstCase(M, T, float(W[T][M] / T), guarantee_bound(M, T), tuple(seq))


def sequence_average(M: int, seq: Sequence[int]) -> float:
    """Exact expected average payoff of the strategy against a fixed sequence."""
    T = len(seq)
    total, alive, m = 0.0, 1.0, 0
    for t, j in enumerate(seq, start=1):
        if m < -M:
            break
        p = sigma_m_prob(m, M)
        if j == L:
            total += alive * p * (T - t + 1)
            m -= 1
        else:
            total += alive * (1.0 - p)
            m += 1
        alive *= 1.0 - p
    return total / T


def _enumerated_average(M: int, seq: Sequence[int]) -> float:
    """``E[(R_{t*} + (T - t* + 1) 1{j_{t*} = L}) / T]`` summed over absorption times."""
    T = len(seq)
    out, alive, m, rights = 0.0, 1.0, 0, 0
    for t, j in enumerate(seq, start=1):
        p = 1.0 if m <= -M else 1.0 / (m + M + 1) ** 2
        absorb = alive * p
        out += absorb * (rights + (T - t + 1 if j == L else 0))
        alive -= absorb
        rights += j == R
        m += 1 if j == R else -1
    out += alive * rights
    return out / T


def brute_force_worst(M: int, T: int) -> tuple[float, tuple[int, ...]]:
    """Minimum over all ``2^T`` sequences by explicit enumeration of absorption times."""
    if T > 16:
        raise ValueError("brute force limited to T <= 16")
    best, arg = math.inf, ()
    for seq in itertools.product((L, R), repeat=T):
        val = _enumerated_average(M, seq)
        if val < best:
            best, arg = val, seq
    return best, arg


def fictitious_table(M: int, t_max: int) -> np.ndarray:
    """``min_y E[X_t]`` for ``t = 1..t_max`` where X is 1/2 until absorption, then 1 or 0."""
    if M < 0 or t_max < 1:
        raise ValueError("need M >= 0 and t >= 1")
    ms, p = _grid(M, t_max + 1)
    G = np.full(ms.size, 0.5)
    out = np.empty(t_max)
    for k in range(1, t_max + 1):
        G = np.minimum(p + (1.0 - p) * _down(G), (1.0 - p) * _up(G))
        out[k - 1] = G[M]
    return out


def fictitious_worst(M: int, t: int) -> float:
    return float(fictitious_table(M, t)[-1])


# --------------------------------------------------------------------------- simulation

@dataclass
class Opponent:
    """``kind`` is "sequence" (``data`` 0/1 array), "stationary" (``data`` = P(L))
    or "table" (``data`` a callable ``(t, m) -> P(L)``)."""

    kind: str
    data: object

    @classmethod
    def parse(cls, spec: str, T: int) -> Opponent:
        """``L``, ``R``, ``stationary:p`` (P(L) = p), or a string over {L, R} of length T."""
        spec = spec.strip()
        if spec.lower().startswith("stationary:"):
            p = float(spec.split(":", 1)[1])
            return cls("stationary", p)
        if spec.upper() in ("L", "R"):
            return cls("sequence", np.full(T, "LR".index(spec.upper())))
        if set(spec.upper()) <= {"L", "R"} and len(spec) == T:
            return cls("sequence", np.array(["LR".index(c) for c in spec.upper()]))
        raise ValueError(f"invalid opponent spec {spec!r}")

    def validate(self, T: int) -> None:
        if self.kind == "sequence":
            arr = np.asarray(self.data)
            if arr.shape != (T,) or not np.isin(arr, (L, R)).all():
                raise ValueError("sequence opponent needs T entries in {0, 1}")
        elif self.kind == "stationary":
            if not 0.0 <= float(self.data) <= 1.0:
                raise ValueError("stationary opponent needs P(L) in [0, 1]")
        elif self.kind == "table":
            if not callable(self.data):
                raise ValueError("table opponent needs a callable (t, m) -> P(L)")
        else:
            raise ValueError(f"unknown opponent kind {self.kind!r}")


def _play_one(M: int, T: int, opp: Opponent, rng: np.random.Generator):
    """Opponent choices and absorption stage (0-based, or T) for one play."""
    u_opp = rng.random(T)
    u_me = rng.random(T)
    if opp.kind == "table":
        rule: Callable[[int, int], float] = opp.data  # type: ignore[assignment]
        js = np.empty(T, dtype=np.int64)
        m = 0
        for t in range(T):
            js[t] = L if u_opp[t] < rule(t + 1, m) else R
            m += 1 if js[t] == R else -1
    elif opp.kind == "stationary":
        js = np.where(u_opp < float(opp.data), L, R)
    else:
        js = np.asarray(opp.data, dtype=np.int64)
    steps = np.where(js == R, 1, -1)
    m_before = np.concatenate(([0], np.cumsum(steps)[:-1]))
    with np.errstate(divide="ignore"):
        p = np.where(m_before <= -M, 1.0, 1.0 / (m_before + M + 1.0) ** 2)
    hits = np.nonzero(u_me < p)[0]
    t_star = int(hits[0]) if hits.size else T
    return js, t_star


def _payoffs(T: int, js: np.ndarray, t_star: int) -> np.ndarray:
    g = (js == R).astype(float)
    if t_star < T:
        g[t_star:] = 1.0 if js[t_star] == L else 0.0
    return g


def _record(M: int, T: int, js: np.ndarray, t_star: int, seed) -> PlayRecord:
    states = np.zeros(T + 1, dtype=np.int64)
    a1 = np.ones(T, dtype=np.int64)
    a2 = js.astype(np.int64).copy()
    if t_star < T:
        absorbing = 1 if js[t_star] == L else 2
        states[t_star + 1:] = absorbing
        a1[t_star] = 0
        a1[t_star + 1:] = 0
        a2[t_star + 1:] = 0
    return PlayRecord(0, states, a1, a2, _payoffs(T, js, t_star), seed=seed, meta={"M": M, "absorbed_at": t_star + 1 if t_star < T else None})


@dataclass
class SimulationResult:
    mean: float
    se: float
    averages: np.ndarray
    sample: PlayRecord


def simulate(M: int, T: int, opponent: Opponent, seed: int, reps: int = 1) -> SimulationResult:
    """``reps`` independent plays; rep ``r`` draws from ``default_rng([seed, r])``."""
    _check_sim(M, T, reps)
    opponent.validate(T)
    averages = np.empty(reps)
    sample = None
    for r in range(reps):
        js, t_star = _play_one(M, T, opponent, np.random.default_rng([seed, r]))
        averages[r] = _payoffs(T, js, t_star).mean()
        if r == 0:
            sample = _record(M, T, js, t_star, seed)
    se = float(averages.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return SimulationResult(float(averages.mean()), se, averages, sample)


def _check_sim(M: int, T: int, reps: int) -> None:
    if M < 0:
        raise ValueError("M must be nonnegative")
    if T < 1:
        raise ValueError("T must be at least 1")
    if reps < 1:
        raise ValueError("reps must be at least 1")
