"""Domain types, validation and the bundled example games."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

STOCHASTIC_TOL = 1e-9
ABSORBING_TOL = 1e-12
MIXED_TOL = 1e-12


class GameError(ValueError):
    """Raised for structurally malformed games or unknown builtin names."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StochasticGame:
    """A finite two-player zero-sum stochastic game.

    ``payoff[k]`` has shape ``(len(actions1[k]), len(actions2[k]))`` and holds
    stage payoffs to player 1.  ``transition[k]`` has shape
    ``(len(actions1[k]), len(actions2[k]), n_states)``; entry ``[i, j, k']`` is
    the probability of moving to ``k'``.  Instances are immutable; use
    :func:`validate` to check the probabilistic invariants.
    """

    states: tuple[str, ...]
    actions1: tuple[tuple[str, ...], ...]
    actions2: tuple[tuple[str, ...], ...]
    payoff: tuple[np.ndarray, ...]
    transition: tuple[np.ndarray, ...]
    name: str = ""

    def __post_init__(self) -> None:
        n = len(self.states)
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "actions1", tuple(tuple(str(a) for a in acts) for acts in self.actions1))
        object.__setattr__(self, "actions2", tuple(tuple(str(a) for a in acts) for acts in self.actions2))
        if not (len(self.actions1) == len(self.actions2) == len(self.payoff) == len(self.transition) == n):
            raise GameError("actions1, actions2, payoff and transition need one entry per state")
        pay, tra = [], []
        for k in range(n):
            m1, m2 = len(self.actions1[k]), len(self.actions2[k])
            g = np.array(self.payoff[k], dtype=float).reshape(m1, m2) if m1 * m2 else np.zeros((m1, m2))
            q = np.array(self.transition[k], dtype=float)
            if q.shape != (m1, m2, n):
                if q.size == 0 and m1 * m2 == 0:
                    q = np.zeros((m1, m2, n))
                else:
                    raise GameError(f"transition[{k}] has shape {q.shape}, expected {(m1, m2, n)}")
            pay.append(_frozen(g))
            tra.append(_frozen(q))
        object.__setattr__(self, "payoff", tuple(pay))
        object.__setattr__(self, "transition", tuple(tra))

    @property
    def n_states(self) -> int:
        return len(self.states)

    def shape(self, k: int) -> tuple[int, int]:
        return len(self.actions1[k]), len(self.actions2[k])

    @property
    def absorbing(self) -> tuple[bool, ...]:
        """Per-state flag: ``q(k|k,i,j) = 1`` for every action pair."""
        flags = []
        for k, q in enumerate(self.transition):
            flags.append(q.size > 0 and bool(np.all(np.abs(q[:, :, k] - 1.0) <= ABSORBING_TOL)))
        return tuple(flags)

    @property
    def payoff_bounds(self) -> tuple[float, float]:
        vals = [g for g in self.payoff if g.size]
        if not vals:
            return 0.0, 0.0
        return min(float(g.min()) for g in vals), max(float(g.max()) for g in vals)

    @property
    def is_one_player(self) -> bool:
        return all(len(a) == 1 for a in self.actions2)

    def state_index(self, label: str | int) -> int:
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.n_states:
                raise GameError(f"state index {label} out of range")
            return int(label)
        try:
            return self.states.index(label)
        except ValueError:
            raise GameError(f"unknown state {label!r}") from None

    def rescaled(self, offset: float, scale: float) -> StochasticGame:
        """Same game with payoffs mapped by ``g -> (g - offset) / scale``."""
        return StochasticGame(
            self.states, self.actions1, self.actions2,
            tuple((g - offset) / scale for g in self.payoff), self.transition, self.name,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StochasticGame):
            return NotImplemented
        return (
            self.name == other.name
            and self.states == other.states
            and self.actions1 == other.actions1
            and self.actions2 == other.actions2
            and all(np.array_equal(a, b) for a, b in zip(self.payoff, other.payoff))
            and all(np.array_equal(a, b) for a, b in zip(self.transition, other.transition))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Violation:
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


def validate(game: StochasticGame) -> list[Violation]:
    """List every violated game invariant (empty list means valid)."""
    out: list[Violation] = []
    for k, label in enumerate(game.states):
        m1, m2 = game.shape(k)
        if m1 == 0:
            out.append(Violation(f"state {k} ({label})", "empty action set for player 1"))
        if m2 == 0:
            out.append(Violation(f"state {k} ({label})", "empty action set for player 2"))
        g = game.payoff[k]
        if g.size and not np.all(np.isfinite(g)):
            for i, j in zip(*np.nonzero(~np.isfinite(g))):
                out.append(Violation(f"payoff[{k}][{i}][{j}]", "payoff is not finite"))
        q = game.transition[k]
        for i in range(m1):
            for j in range(m2):
                row = q[i, j]
                where = f"transition[{k}][{i}][{j}]"
                if not np.all(np.isfinite(row)):
                    out.append(Violation(where, "probability is not finite"))
                    continue
                if np.any(row < 0):
                    out.append(Violation(where, f"negative probability {row.min():.17g}"))
                s = float(row.sum())
                if abs(s - 1.0) > STOCHASTIC_TOL:
                    out.append(Violation(where, f"row sums to {s:.17g}, not 1 within {STOCHASTIC_TOL:g}"))
    return out


def check_mixed(x: Sequence[float], n: int, what: str = "mixed action") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"{what} has shape {x.shape}, expected ({n},)")
    if np.any(x < -MIXED_TOL) or abs(x.sum() - 1.0) > MIXED_TOL:
        raise ValueError(f"{what} is not a probability vector: {x}")
    return x


def dirac(n: int, i: int) -> np.ndarray:
    x = np.zeros(n)
    x[i] = 1.0
    return x


# --------------------------------------------------------------------------- builders

def _absorbing_row(n: int, k: int) -> list:
    row = [0.0] * n
    row[k] = 1.0
    return [[row]]


def _deterministic(n: int, target: int) -> list[float]:
    row = [0.0] * n
    row[target] = 1.0
    return row


def example1() -> StochasticGame:
    """The 2x2 absorbing game (0, 1* / 1*, 0*)."""
    n = 3  # k, 1*, 0*
    k, one, zero = 0, 1, 2
    return StochasticGame(
        states=("k", "1*", "0*"),
        actions1=(("T", "B"), ("-",), ("-",)),
        actions2=(("L", "R"), ("-",), ("-",)),
        payoff=([[0.0, 1.0], [1.0, 0.0]], [[1.0]], [[0.0]]),
        transition=(
            [[_deterministic(n, k), _deterministic(n, one)],
             [_deterministic(n, one), _deterministic(n, zero)]],
            _absorbing_row(n, one),
            _absorbing_row(n, zero),
        ),
        name="example1",
    )


def example2() -> StochasticGame:
    """The five-state deterministic one-player graph.

    Arcs (action: successor, reward): k1 black->k2 (1), blue->k5 (1);
    k2 and k3 move right with reward 1 under both actions; k4 = 0* is
    absorbing with reward 0; k5 blue->k1 (0), black->k3 (1).
    """
    n = 5
    k1, k2, k3, k4, k5 = range(n)
    bb = ("black", "blue")
    d = lambda t: [_deterministic(n, t)]  # noqa: E731
    return StochasticGame(
        states=("k1", "k2", "k3", "0*", "k5"),
        actions1=(bb, bb, bb, ("stay",), bb),
        actions2=(("-",),) * n,
        payoff=([[1.0], [1.0]], [[1.0], [1.0]], [[1.0], [1.0]], [[0.0]], [[1.0], [0.0]]),
        transition=(
            [d(k2), d(k5)],
            [d(k3), d(k3)],
            [d(k4), d(k4)],
            [d(k4)],
            [d(k3), d(k1)],
        ),
        name="example2",
    )


def bigmatch() -> StochasticGame:
    """The Big Match (1*, 0* / 0, 1); states ordered (k, 1*, 0*)."""
    n = 3
    k, one, zero = 0, 1, 2
    return StochasticGame(
        states=("k", "1*", "0*"),
        actions1=(("T", "B"), ("-",), ("-",)),
        actions2=(("L", "R"), ("-",), ("-",)),
        payoff=([[1.0, 0.0], [0.0, 1.0]], [[1.0]], [[0.0]]),
        transition=(
            [[_deterministic(n, one), _deterministic(n, zero)],
             [_deterministic(n, k), _deterministic(n, k)]],
            _absorbing_row(n, one),
            _absorbing_row(n, zero),
        ),
        name="bigmatch",
    )


def pathology_alphas(n_max: int) -> np.ndarray:
    """Truncated player-1 action set {2^(-2n) : 1 <= n <= n_max}."""
    return np.array([2.0 ** (-2 * n) for n in range(1, n_max + 1)])


def pathology(n_max: int = 12, beta_grid: int = 101, extra_betas: Sequence[float] = ()) -> StochasticGame:
    """Finite truncation of the four-state compact-action game.

    States (k0, k1, 0*, 1*); in k0 player 1 picks alpha from the truncated
    set, in k1 player 2 picks beta from a uniform grid of [0, 1/2] together
    with ``extra_betas`` (e.g. the analytic interior minimiser).
    """
    if n_max < 1:
        raise GameError("pathology needs n_max >= 1")
    alphas = pathology_alphas(n_max)
    betas = np.unique(np.concatenate([np.linspace(0.0, 0.5, beta_grid), np.asarray(extra_betas, float)]))
    if betas.min() < 0 or betas.max() > 0.5:
        raise GameError("beta values must lie in [0, 1/2]")
    n = 4
    k0, k1, zero, one = range(n)
    q0 = [[[1 - a - a * a, a, a * a, 0.0]] for a in alphas]
    q1 = [[[b, 1 - b - b * b, 0.0, b * b] for b in betas]]
    return StochasticGame(
        states=("k0", "k1", "0*", "1*"),
        actions1=(tuple(f"{a:.17g}" for a in alphas), ("-",), ("-",), ("-",)),
        actions2=(("-",), tuple(f"{b:.17g}" for b in betas), ("-",), ("-",)),
        payoff=([[0.0]] * len(alphas), [[1.0] * len(betas)], [[0.0]], [[1.0]]),
        transition=(q0, q1, _absorbing_row(n, zero), _absorbing_row(n, one)),
        name=f"pathology({n_max})",
    )


BUILTIN_NAMES = ("example1", "example2", "bigmatch", "pathology(N_max)")


def builtin_game(name: str) -> StochasticGame:
    """Return a bundled game: example1, example2, bigmatch or pathology(N)."""
    key = name.strip().lower()
    if key == "example1":
        return example1()
    if key == "example2":
        return example2()
    if key in ("bigmatch", "big_match", "example3"):
        return bigmatch()
    m = re.fullmatch(r"pathology(?:\((\d+)\))?", key)
    if m:
        return pathology(int(m.group(1)) if m.group(1) else 12)
    raise GameError(f"unknown builtin game {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def random_game(
    rng: np.random.Generator, n_states: int, n1: int, n2: int, payoff_range: tuple[float, float] = (0.0, 1.0)
) -> StochasticGame:
    """Random game with uniform payoffs and Dirichlet(1) transitions."""
    lo, hi = payoff_range
    return StochasticGame(
        states=tuple(f"s{k}" for k in range(n_states)),
        actions1=tuple(tuple(f"a{i}" for i in range(n1)) for _ in range(n_states)),
        actions2=tuple(tuple(f"b{j}" for j in range(n2)) for _ in range(n_states)),
        payoff=tuple(rng.uniform(lo, hi, size=(n1, n2)) for _ in range(n_states)),
        transition=tuple(rng.dirichlet(np.ones(n_states), size=(n1, n2)) for _ in range(n_states)),
        name="random",
    )


# --------------------------------------------------------------------------- plays

@dataclass
class PlayRecord:
    """A realised play.

    ``states`` holds k_1..k_{T+1} (the state reached after the last stage is
    kept so that the final transition can be audited); action and payoff
    arrays hold T entries.  The optional solver internals ``lam``, ``d`` and
    ``z`` have T+1 entries, ``mixed1``/``mixed2`` hold the per-stage mixed
    actions padded with zeros to the widest action set.
    """

    initial_state: int
    states: np.ndarray
    actions1: np.ndarray
    actions2: np.ndarray
    payoffs: np.ndarray
    seed: int | None = None
    lam: np.ndarray | None = None
    d: np.ndarray | None = None
    z: np.ndarray | None = None
    mixed1: np.ndarray | None = None
    mixed2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.payoffs)

    def mean_payoff(self) -> float:
        return float(np.mean(self.payoffs)) if len(self.payoffs) else 0.0

    def problems(self, game: StochasticGame, atol: float = 0.0) -> list[str]:
        """Legality and payoff-consistency violations of this record."""
        out = []
        T = self.horizon
        if len(self.states) != T + 1:
            out.append(f"expected {T + 1} states, got {len(self.states)}")
            return out
        for t in range(T):
            k, i, j = int(self.states[t]), int(self.actions1[t]), int(self.actions2[t])
            if not 0 <= k < game.n_states:
                out.append(f"stage {t + 1}: illegal state {k}")
                continue
            m1, m2 = game.shape(k)
            if not (0 <= i < m1 and 0 <= j < m2):
                out.append(f"stage {t + 1}: illegal actions ({i}, {j}) in state {k}")
                continue
            if abs(self.payoffs[t] - game.payoff[k][i, j]) > atol:
                out.append(f"stage {t + 1}: payoff {self.payoffs[t]} != g = {game.payoff[k][i, j]}")
        return out

    def to_bytes(self) -> bytes:
        parts = [self.states, self.actions1, self.actions2, self.payoffs]
        parts += [a for a in (self.lam, self.d, self.z, self.mixed1, self.mixed2) if a is not None]
        return b"".join(np.ascontiguousarray(a).tobytes() for a in parts)


# --------------------------------------------------------------------------- opponents
#
# An opponent maps (stage t, state k, player-1 mixed action at this stage) to a
# mixed action of player 2.  Player 1's current mixed action is a function of
# the public history once player 1's strategy is fixed, so exposing it lets
# worst-case opponents be written without passing the whole history.

Opponent = Callable[[int, int, np.ndarray], np.ndarray]


def stationary_opponent(per_state: Sequence[Sequence[float]]) -> Opponent:
    table = [np.asarray(y, dtype=float) for y in per_state]

    def play(t: int, k: int, x: np.ndarray) -> np.ndarray:
        return table[k]

    return play


def uniform_opponent(game: StochasticGame) -> Opponent:
    return stationary_opponent([np.full(game.shape(k)[1], 1.0 / game.shape(k)[1]) for k in range(game.n_states)])


def pure_opponent(game: StochasticGame, j: int) -> Opponent:
    """Always the action with index ``j`` (clipped to the state's action set)."""
    return stationary_opponent([dirac(game.shape(k)[1], min(j, game.shape(k)[1] - 1)) for k in range(game.n_states)])


def markov_opponent(game: StochasticGame, rule: Callable[[int, int], Sequence[float]]) -> Opponent:
    def play(t: int, k: int, x: np.ndarray) -> np.ndarray:
        return check_mixed(rule(t, k), game.shape(k)[1], "opponent action")

    return play


def myopic_opponent(game: StochasticGame) -> Opponent:
    """Minimises the expected stage payoff against player 1's current mixed action."""

    def play(t: int, k: int, x: np.ndarray) -> np.ndarray:
        col = np.asarray(x) @ game.payoff[k]
        return dirac(len(col), int(np.argmin(col)))

    return play


def parse_opponent(game: StochasticGame, spec: str) -> Opponent:
    """Build an opponent from ``uniform``, ``myopic``, ``pure:J`` or ``stationary:p1,p2,...``.

    ``stationary`` weights apply to every state whose player-2 action set has
    the same size; single-action states play their only action.
    """
    spec = spec.strip()
    kind, _, arg = spec.partition(":")
    kind = kind.lower()
    if kind == "uniform":
        return uniform_opponent(game)
    if kind == "myopic":
        return myopic_opponent(game)
    if kind == "pure":
        try:
            j = int(arg)
        except ValueError:
            raise GameError(f"pure opponent needs an integer action index, got {arg!r}") from None
        return pure_opponent(game, j)
    if kind == "stationary":
        try:
            w = [float(s) for s in arg.split(",")]
        except ValueError:
            raise GameError(f"bad stationary weights {arg!r}") from None
        per_state = []
        for k in range(game.n_states):
            n2 = game.shape(k)[1]
            if n2 == 1:
                per_state.append(np.ones(1))
            elif n2 == len(w):
                per_state.append(check_mixed(w, n2, "stationary opponent"))
            else:
                raise GameError(f"state {game.states[k]} has {n2} actions for player 2, weights have {len(w)}")
        return stationary_opponent(per_state)
    raise GameError(f"unknown opponent spec {spec!r}")


def sup_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0

