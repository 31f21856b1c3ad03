"""Value and optimal strategies of finite zero-sum matrix games.

The row player maximises.  After an affine map of the entries into [1, 2]
the game becomes the linear program

    maximise sum(w)  subject to  A w <= 1,  w >= 0

whose optimal tableau also carries the dual solution u (the prices of the
slack columns).  Then ``value = 1 / sum(w)``, ``y = w / sum(w)`` and
``x = u / sum(u)``.  The tableau is solved with Bland's rule, which cannot
cycle on the degenerate problems that games produce routinely.
"""

from __future__ import annotations

import numpy as np

DEFAULT_TOL = 1e-10
_PIVOT_EPS = 1e-12


class LPError(ArithmeticError):
    """The linear program failed or produced strategies outside tolerance."""


def _as_matrix(game) -> np.ndarray:
    a = np.asarray(game, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"matrix game needs a non-empty 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix game entries must be finite")
    return a


def _simplex(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve max 1.w s.t. a w <= 1, w >= 0 for positive ``a``.

    Returns (w, u, objective) with u the optimal dual.
    """
    m, n = a.shape
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = a
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = 1.0
    tab[m, :n] = -1.0
    basis = list(range(n, n + m))
    max_iter = 50 * (m + n) + 100
    for _ in range(max_iter):
        cost = tab[m, :-1]
        candidates = np.nonzero(cost < -_PIVOT_EPS)[0]
        if candidates.size == 0:
            break
        col = int(candidates[0])
        column = tab[:m, col]
        rows = np.nonzero(column > _PIVOT_EPS)[0]
        if rows.size == 0:
            raise LPError("linear program is unbounded")
        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-14 * max(1.0, abs(best))]
        row = int(min(tied, key=lambda r: basis[r]))
        tab[row] /= tab[row, col]
        pivot_row = tab[row]
        factors = tab[:, col].copy()
        factors[row] = 0.0
        tab -= np.outer(factors, pivot_row)
        basis[row] = col
    else:
        raise LPError("simplex iteration cap reached")
    w = np.zeros(n)
    for r, b in enumerate(basis):
        if b < n:
            w[b] = tab[r, -1]
    u = tab[m, n:n + m].copy()
    return np.clip(w, 0.0, None), np.clip(u, 0.0, None), float(tab[m, -1])


def _pure_saddle(a: np.ndarray):
    row_min = a.min(axis=1)
    col_max = a.max(axis=0)
    lo, hi = row_min.max(), col_max.min()
    if lo == hi:
        return float(lo), int(np.argmax(row_min)), int(np.argmin(col_max))
    return None


def _mixed_2x2(a: np.ndarray):
    # Only called without a pure saddle: the equilibrium is unique and interior.
    (p, q), (r, s) = a
    den = p - q - r + s
    if den == 0:
        return None
    value = (p * s - q * r) / den
    x1 = (s - r) / den
    y1 = (s - q) / den
    if not (0.0 <= x1 <= 1.0 and 0.0 <= y1 <= 1.0):
        return None
    return value, np.array([x1, 1.0 - x1]), np.array([y1, 1.0 - y1])


def _normalise(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def solve(game, tol: float = DEFAULT_TOL, *, use_lp: bool = False) -> tuple[float, np.ndarray, np.ndarray]:
    """Value and optimal mixed strategies ``(value, x, y)`` of a matrix game.

    ``x`` (rows) guarantees at least ``value - tol`` against every column and
    ``y`` guarantees at most ``value + tol`` against every row; the
    tolerance is scaled by the magnitude of the entries when they exceed 1.
    Pure saddle points and 2x2 games are handled in closed form unless
    ``use_lp`` is set.  Raises :class:`LPError` if the guarantees cannot be
    certified.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = _as_matrix(game)
    m, n = a.shape
    if not use_lp:
        if m == 1:
            j = int(np.argmin(a[0]))
            return float(a[0, j]), np.ones(1), _dirac(n, j)
        if n == 1:
            i = int(np.argmax(a[:, 0]))
            return float(a[i, 0]), _dirac(m, i), np.ones(1)
        saddle = _pure_saddle(a)
        if saddle is not None:
            v, i, j = saddle
            return v, _dirac(m, i), _dirac(n, j)
        if m == 2 and n == 2:
            closed = _mixed_2x2(a)
            if closed is not None:
                return closed
    lo, hi = float(a.min()), float(a.max())
    spread = hi - lo
    if spread == 0.0:
        return lo, np.full(m, 1.0 / m), np.full(n, 1.0 / n)
    scaled = (a - lo) / spread + 1.0
    w, u, obj = _simplex(scaled)
    if obj <= 0 or w.sum() <= 0 or u.sum() <= 0:
        raise LPError("degenerate linear program solution")
    value = (1.0 / obj - 1.0) * spread + lo
    x, y = _normalise(u), _normalise(w)
    eff_tol = tol * max(1.0, float(np.abs(a).max()))
    guaranteed = float((x @ a).min())
    conceded = float((a @ y).max())
    if guaranteed < value - eff_tol or conceded > value + eff_tol:
        raise LPError(
            f"strategies miss the value {value:.17g}: row guarantee {guaranteed:.17g}, "
            f"column guarantee {conceded:.17g} (tol {eff_tol:g})"
        )
    return value, x, y


def value(game, tol: float = DEFAULT_TOL) -> float:
    return solve(game, tol)[0]


def best_response_value(game, x) -> tuple[float, int]:
    """Minimum over columns of ``x . A[:, j]`` and the lowest minimising column."""
    a = _as_matrix(game)
    x = np.asarray(x, dtype=float)
    if x.shape != (a.shape[0],):
        raise ValueError(f"mixed action of length {x.shape} does not match {a.shape[0]} rows")
    payoffs = x @ a
    j = int(np.argmin(payoffs))
    return float(payoffs[j]), j


def _dirac(n: int, i: int) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e
