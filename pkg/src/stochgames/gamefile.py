"""JSON game documents: parsing, emission and their three error classes."""

from __future__ import annotations

import json
from decimal import Decimal
from pathlib import Path

import jsonschema

from .core import GameError, StochasticGame, builtin_game, validate

_DECIMAL = r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$"
_LABELS = {"type": "array", "items": {"type": "string"}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "states", "actions1", "actions2", "payoff", "transition"],
    "properties": {
        "name": {"type": "string"},
        "states": {**_LABELS, "minItems": 1},
        "actions1": {"type": "array", "items": _LABELS},
        "actions2": {"type": "array", "items": _LABELS},
        "payoff": {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}},
        "transition": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "array", "items": {
                "type": "object",
                "additionalProperties": {"oneOf": [{"type": "number"}, {"type": "string", "pattern": _DECIMAL}]},
            }}},
        },
    },
}


class GameFileError(ValueError):
    pass


class GameSyntaxError(GameFileError):
    """The document is not JSON."""


class GameSchemaError(GameFileError):
    """JSON, but not shaped like a game document."""


class GameValidationError(GameFileError):
    """Well-shaped, but the game breaks a structural or probabilistic invariant."""


def _path(parts) -> str:
    return "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in parts) or "<root>"


def parse_game(document: str | bytes) -> StochasticGame:
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GameSyntaxError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise GameSchemaError(f"{_path(e.absolute_path)}: {e.message}")
    states = data["states"]
    if len(set(states)) != len(states):
        raise GameValidationError(".states: duplicate state labels")
    n = len(states)
    index = {s: k for k, s in enumerate(states)}
    for key in ("actions1", "actions2", "payoff", "transition"):
        if len(data[key]) != n:
            raise GameValidationError(f".{key}: {len(data[key])} entries for {n} states")
    trans = []
    for k in range(n):
        m1, m2 = len(data["actions1"][k]), len(data["actions2"][k])
        pay = data["payoff"][k]
        if len(pay) != m1 or any(len(r) != m2 for r in pay):
            raise GameValidationError(f".payoff[{k}]: expected a {m1}x{m2} matrix")
        tk = data["transition"][k]
        if len(tk) != m1 or any(len(r) != m2 for r in tk):
            raise GameValidationError(f".transition[{k}]: expected a {m1}x{m2} array")
        rows = []
        for i in range(m1):
            row = []
            for j in range(m2):
                dist = [0.0] * n
                for label, p in tk[i][j].items():
                    if label not in index:
                        raise GameValidationError(f".transition[{k}][{i}][{j}]: unknown state {label!r}")
                    dist[index[label]] = float(Decimal(p)) if isinstance(p, str) else float(p)
                row.append(dist)
            rows.append(row)
        trans.append(rows)
    try:
        game = StochasticGame(states, data["actions1"], data["actions2"], data["payoff"], trans, data["name"])
    except GameError as exc:
        raise GameValidationError(str(exc)) from None
    problems = validate(game)
    if problems:
        raise GameValidationError("; ".join(str(p) for p in problems))
    return game


def emit_game(game: StochasticGame) -> str:
    trans = []
    for k in range(game.n_states):
        q = game.transition[k]
        trans.append([[{game.states[s]: float(p) for s, p in enumerate(q[i, j]) if p != 0.0}
                       for j in range(q.shape[1])] for i in range(q.shape[0])])
    doc = {
        "name": game.name,
        "states": list(game.states),
        "actions1": [list(a) for a in game.actions1],
        "actions2": [list(a) for a in game.actions2],
        "payoff": [g.tolist() for g in game.payoff],
        "transition": trans,
    }
    return json.dumps(doc, indent=1) + "\n"


def load_game(spec: str) -> StochasticGame:
    """``builtin:NAME`` or a path to a game document."""
    if spec.startswith("builtin:"):
        try:
            return builtin_game(spec[len("builtin:"):])
        except GameError as exc:
            raise GameValidationError(str(exc)) from None
    try:
        text = Path(spec).read_text(encoding="utf-8")
    except OSError as exc:
        raise GameFileError(f"cannot read {spec}: {exc.strerror}") from None
    return parse_game(text)
