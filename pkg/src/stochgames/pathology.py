"""The four-state game with compact action sets whose discounted values oscillate.

In k0 (payoff 0) player 1 picks alpha in I = {4^-n}: move to k1 w.p. alpha,
to 0* w.p. alpha^2.  In k1 (payoff 1) player 2 picks beta in [0, 1/2]: move
to k0 w.p. beta, to 1* w.p. beta^2.  x and y are the discounted values at
k0 and k1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import pathology_alphas

MIN_NMAX = 12
LAM_MAX = 0.2


@dataclass
class PathologySolution:
    lam: float
    x: float
    y: float
    alpha: float
    beta: float
    beta_interior: bool
    residual_k0: float
    residual_k1: float
    n_max: int
    tol: float
    method: str
    iterations: int = 0
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def max_ratio(self) -> float | None:
        """Largest ratio of successive changes (iterative method only)."""
        h = [c for c in self.history if c > 0]
        if len(h) < 2:
            return None
        return max(b / a for a, b in zip(h, h[1:]))

    @property
    def tail_ratio(self) -> float | None:
        """Geometric-mean ratio of successive changes over the second half of the run."""
        h = [c for c in self.history if c > 0]
        h = h[len(h) // 2:]
        if len(h) < 2:
            return None
        return (h[-1] / h[0]) ** (1.0 / (len(h) - 1))


def _best_beta(x: float, y: float) -> tuple[float, bool]:
    b = (y - x) / (2.0 * (1.0 - y))
    if b <= 0.5:
        return max(b, 0.0), b > 0.0
    return 0.5, False


def _p1_objective(alphas: np.ndarray, x: float, y: float) -> np.ndarray:
    return alphas * (y - x) - alphas**2 * x


def residuals(lam: float, x: float, y: float, alphas: np.ndarray) -> tuple[float, float]:
    """Defects of both value equations written in the subtracted form."""
    r0 = abs(lam * x - (1.0 - lam) * float(_p1_objective(alphas, x, y).max()))
    cands = [0.0, 0.5]
    if 1.0 - y > 0:
        vertex = (y - x) / (2.0 * (1.0 - y))
        if 0.0 < vertex < 0.5:
            cands.append(vertex)
    inner = min(b * (x - y) + b * b * (1.0 - y) for b in cands)
    r1 = abs(lam * y - lam - (1.0 - lam) * inner)
    return r0, r1


def _check_neighbour(alphas: np.ndarray, alpha: float, x: float, y: float) -> None:
    # the objective is unimodal in alpha with peak (y - x) / (2 x)
    peak = (y - x) / (2.0 * x)
    below, above = alphas[alphas <= peak], alphas[alphas >= peak]
    allowed = set()
    if below.size:
        allowed.add(float(below.max()))
    if above.size:
        allowed.add(float(above.min()))
    if alpha not in allowed:
        raise ArithmeticError(f"maximiser {alpha:g} is not a grid neighbour of the peak {peak:g}")


def _solve_exact(lam: float, alphas: np.ndarray):
    # For a fixed alpha, x = c * y; then y solves player 2's problem in closed form.
    c = (1.0 - lam) * alphas / (1.0 - (1.0 - lam) * (1.0 - alphas - alphas**2))
    s = math.sqrt(lam)
    y_int = 2.0 * s / (2.0 * s + math.sqrt(1.0 - lam) * (1.0 - c))
    interior = y_int * (1.0 - c) / (2.0 * (1.0 - y_int)) <= 0.5
    y_half = (lam + (1.0 - lam) / 4.0) / (1.0 - (1.0 - lam) * (0.25 + c / 2.0))
    y = np.where(interior, y_int, y_half)
    x = c * y
    i = int(np.argmax(x))
    return float(x[i]), float(y[i]), float(alphas[i])


def _solve_iterate(lam: float, alphas: np.ndarray, tol: float, max_iter: int):
    x, y = 0.4, 0.5
    history = []
    for it in range(1, max_iter + 1):
        x_new = (1.0 - lam) * float(((1.0 - alphas - alphas**2) * x + alphas * y).max())
        b, _ = _best_beta(x, y)
        y_new = lam + (1.0 - lam) * ((1.0 - b - b * b) * y + b * x + b * b)
        change = max(abs(x_new - x), abs(y_new - y))
        history.append(change)
        x, y = x_new, y_new
        if change <= tol * lam:
            i = int(np.argmax(_p1_objective(alphas, x, y)))
            return x, y, float(alphas[i]), it, history
    raise ArithmeticError(f"fixed-point iteration hit the cap of {max_iter} (last change {history[-1]:.3e})")


def solve_lambda(lam: float, n_max: int = MIN_NMAX, tol: float = 1e-12, method: str = "exact", max_iter: int = 10**7) -> PathologySolution:
    """Discounted values at k0 and k1 with the truncated action set ``{4^-n : n <= max(12, n_max)}``.

    ``method="exact"`` solves each one-alpha stationary game in closed form
    and keeps the best alpha; ``method="iterate"`` runs the plain fixed-point
    iteration from (0.4, 0.5) until the change is at most ``tol * lam``.
    """
    if not 0.0 < lam <= LAM_MAX:
        raise ValueError(f"lambda must lie in (0, 1/5], got {lam}")
    if n_max < 8:
        raise ValueError("n_max must be at least 8")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = max(MIN_NMAX, n_max)
    alphas = pathology_alphas(n)
    if method == "exact":
        x, y, alpha = _solve_exact(lam, alphas)
        it, history = 0, []
    elif method == "iterate":
        x, y, alpha, it, history = _solve_iterate(lam, alphas, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    beta, interior = _best_beta(x, y)
    _check_neighbour(alphas, alpha, x, y)
    r0, r1 = residuals(lam, x, y, alphas)
    return PathologySolution(lam, x, y, alpha, beta, interior, r0, r1, n, tol, method, it, history)


@dataclass
class Check:
    name: str
    value: float
    passed: bool
    detail: str = ""


def verify_relations(sol: PathologySolution) -> list[Check]:
    lam, x, y = sol.lam, sol.x, sol.y
    out = []
    quad = abs(4.0 * lam * (1.0 - y) ** 2 - (1.0 - lam) * (y - x) ** 2)
    if sol.beta_interior:
        out.append(Check("quadratic_identity", quad, quad <= 10.0 * sol.tol, f"<= {10 * sol.tol:g}"))
    else:
        out.append(Check("quadratic_identity", quad, False, "beta on the boundary"))
    s = math.sqrt(lam)
    if lam <= 2.0**-10:
        r = sol.beta / s
        out.append(Check("beta_over_sqrt_lambda", r, 0.8 <= r <= 1.25, "in [0.8, 1.25]"))
    ratio = (y - x) / (2.0 * s * (1.0 - y))
    out.append(Check("gap_ratio", ratio, abs(ratio - 1.0) <= 10.0 * s, f"in [1 -+ {10 * s:.3g}]"))
    out.append(Check("ordering", y - x, 0.0 < x < y < 1.0, "0 < x < y < 1"))
    return out


# --------------------------------------------------------------------------- sequences

def sqrt_in_I(e: int) -> bool:
    """For lambda = 2^-e: is sqrt(lambda) a point of I = {4^-k, k >= 1}?"""
    return e % 4 == 0 and e >= 4


def gap_clear(e: int) -> bool:
    """For lambda = 2^-e: does (sqrt(lambda)/2, 2 sqrt(lambda)) miss I?

    4^-k lies inside iff e/2 - 1 < 2k < e/2 + 1, i.e. e - 2 < 4k < e + 2.
    """
    return not any(e - 2 < 4 * k < e + 2 for k in range(1, e // 4 + 2))


def sequence_exponent(kind: str, n: int, literal: bool = False) -> int:
    """Exponent e with lambda_n = 2^-e.

    By default the sequences are read on sqrt(lambda): sqrt(lambda_n) =
    4^-n (even) or 2^-(2n+1) (odd).  These put sqrt(lambda) on I (even)
    or midway between two points of I (odd), which is what the limits
    1/2 and 4/9 need.  ``literal=True`` uses lambda_n =
    2^-2n and 2^-(2n+1) instead.
    """
    if kind not in ("even", "odd"):
        raise ValueError("kind must be 'even' or 'odd'")
    if literal:
        return 2 * n if kind == "even" else 2 * n + 1
    return 4 * n if kind == "even" else 4 * n + 2


@dataclass
class SweepRow:
    n: int
    lam: float
    x: float
    y: float
    alpha: float
    beta: float
    hypothesis: bool  # sqrt(lambda) in I (even) or gap interval clear of I (odd)


def required_n_max(e_max: int) -> int:
    """Smallest truncation with 4^-N below 2^-e_max."""
    return max(MIN_NMAX, e_max // 2 + 1)


def sequence_sweep(kind: str, n_from: int, n_to: int, n_max: int | None = None, tol: float = 1e-12,
                   literal: bool = False, method: str = "exact") -> list[SweepRow]:
    if n_from < 1 or n_to < n_from:
        raise ValueError("need 1 <= n_from <= n_to")
    exps = [sequence_exponent(kind, n, literal) for n in range(n_from, n_to + 1)]
    need = required_n_max(max(exps))
    if n_max is None:
        n_max = need
    elif n_max < need:
        raise ValueError(f"n_max = {n_max} too small: 4^-n_max must be below the smallest lambda (need {need})")
    rows = []
    for n, e in zip(range(n_from, n_to + 1), exps):
        lam = 2.0**-e
        if lam > LAM_MAX:
            raise ValueError(f"lambda_{n} = 2^-{e} lies outside (0, 1/5]")
        sol = solve_lambda(lam, n_max, tol, method)
        hyp = sqrt_in_I(e) if kind == "even" else gap_clear(e)
        rows.append(SweepRow(n, lam, sol.x, sol.y, sol.alpha, sol.beta, hyp))
    return rows
