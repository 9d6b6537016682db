"""Parallel runs of arbitrary two-prover games.

A quantum strategy plugin supplies a per-game sampler and its quantum value;
plugins also declare (without any check) whether they have a constant-depth
geometrically-local implementation.  Without a plugin a game can still be
played classically with its best deterministic strategy.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import rng
from .errors import ConfigError
from .games import (
    DEFAULT_CAP,
    GameSpec,
    LineInput,
    _exact,
    classical_optimum,
    magic_square,
    sample_inputs,
    satisfied_mask,
)
from .quantum import NoiseModel, run_parmagic

Sampler = Callable[[LineInput, NoiseModel, int], tuple[list[str], list[str]]]


@dataclass(frozen=True)
class StrategyPlugin:
    name: str
    game: GameSpec
    omega_q: Fraction
    sampler: Sampler
    constant_depth: bool = True


def _same_game(a: GameSpec, b: GameSpec) -> bool:
    return (
        a.shape == b.shape
        and a.answers_a == b.answers_a
        and a.answers_b == b.answers_b
        and a.distribution == b.distribution
        and np.array_equal(a.predicate, b.predicate)
    )


PLUGINS: dict[str, StrategyPlugin] = {
    "magic-square": StrategyPlugin(
        "magic-square", magic_square(), Fraction(1), lambda inputs, noise, seed: run_parmagic(inputs, noise, seed)
    ),
}


def find_plugin(game: GameSpec, name: str | None = None) -> StrategyPlugin | None:
    """Named plugin (checked against ``game``) or the first registered one that matches."""
    if name is not None:
        if name not in PLUGINS:
            raise ConfigError(f"unknown strategy plugin {name!r}; known: {sorted(PLUGINS)}")
        plugin = PLUGINS[name]
        if not _same_game(plugin.game, game):
            raise ConfigError(f"plugin {name!r} does not implement game {game.name!r}")
        return plugin
    return next((p for p in PLUGINS.values() if _same_game(p.game, game)), None)


PARBELL_COLUMNS = ("trial", "mode", "n", "wins", "threshold", "accept", "constant_depth_declared")


@dataclass(frozen=True)
class ParbellRun:
    mode: str
    omega_c: Fraction
    omega_q: Fraction | None
    delta: Fraction
    threshold: int
    rows: tuple[dict, ...]
    constant_depth_declared: bool | None

    @property
    def acceptance(self) -> float:
        return sum(r["accept"] for r in self.rows) / len(self.rows)

    @property
    def win_rate(self) -> float:
        return sum(r["wins"] for r in self.rows) / sum(r["n"] for r in self.rows)


def run_parbell(
    game: GameSpec,
    n: int,
    delta,
    trials: int,
    seed: int = 0,
    epsilon: float = 0.0,
    plugin: str | None = None,
    classical: bool = False,
    cap: int = DEFAULT_CAP,
) -> ParbellRun:
    """Play ``trials`` rounds of ``n`` parallel games.

    The threshold is ``ceil(n (omega - delta))`` with ``omega`` the quantum
    value when one is known, else the classical value.  When both are known
    ``delta`` must be below their gap.
    """
    if n < 1 or trials < 1:
        raise ConfigError("n and trials must be positive")
    delta = _exact(delta)
    if delta < 0:
        raise ConfigError("delta must be non-negative")
    chosen = find_plugin(game, plugin)
    if not classical and chosen is None:
        raise ConfigError(f"no quantum strategy plugin for game {game.name!r}; run it in classical mode")
    omega_c, strategy = classical_optimum(game, cap=cap)
    omega_q = chosen.omega_q if chosen else None
    if omega_q is not None and not delta < omega_q - omega_c:
        raise ConfigError(f"delta={delta} must be below omega_q - omega_c = {omega_q - omega_c}")
    need = math.ceil(n * ((omega_q if omega_q is not None else omega_c) - delta))
    noise = NoiseModel(epsilon)
    mode = "classical" if classical else "quantum"
    # recorded as declared by the plugin; nothing here verifies it
    declared = "" if chosen is None else int(chosen.constant_depth)
    rows = []
    for t in range(trials):
        inputs = sample_inputs(game, n, rng.derive_seed(seed, rng.PROBE, t))
        if classical:
            answers = strategy.answers(inputs)
        else:
            answers = chosen.sampler(inputs, noise, rng.derive_seed(seed, rng.NOISE, t))
        wins = int(satisfied_mask(game, inputs, answers, strict=False).sum())
        rows.append({"trial": t, "mode": mode, "n": n, "wins": wins, "threshold": need, "accept": int(wins >= need), "constant_depth_declared": declared})
    return ParbellRun(mode, omega_c, omega_q, delta, need, tuple(rows), chosen.constant_depth if chosen else None)
