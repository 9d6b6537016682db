"""Two-prover one-round games: definitions, sampling and exact values.

Questions are integers ``0..|X|-1`` / ``0..|Y|-1``; answers are string labels
(``"010"`` for the Magic Square).  All probabilities here are exact
:class:`fractions.Fraction` values.  Internally the distribution is scaled to
integer weights over a common denominator so that enumeration can run on
integer numpy arrays without losing exactness.
"""

from __future__ import annotations

import functools
import itertools
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng
from .errors import ConfigError, DomainError, ResourceError

DEFAULT_CAP = 50_000_000

TRIT_CODES = {0: (0, 0), 1: (0, 1), 2: (1, 0)}
_CODE_TRITS = {code: t for t, code in TRIT_CODES.items()}


def _label(symbol) -> str:
    if isinstance(symbol, str):
        return symbol
    return "".join(str(int(b)) for b in symbol)


@dataclass(frozen=True, eq=False)
class GameSpec:
    """A finite two-prover game ``(V, pi)``.

    ``predicate[x, y, a, b]`` is the win table, indexed by question values and
    answer positions in ``answers_a`` / ``answers_b``.
    """

    n_x: int
    n_y: int
    answers_a: tuple[str, ...]
    answers_b: tuple[str, ...]
    distribution: tuple[tuple[Fraction, ...], ...]
    predicate: np.ndarray
    name: str = "game"
    _a_index: dict = field(init=False, repr=False, compare=False)
    _b_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1 or not self.answers_a or not self.answers_b:
            raise DomainError("every alphabet must be non-empty")
        dist = tuple(tuple(Fraction(w) for w in row) for row in self.distribution)
        if len(dist) != self.n_x or any(len(row) != self.n_y for row in dist):
            raise DomainError("distribution must have shape |X| x |Y|")
        if any(w < 0 for row in dist for w in row):
            raise DomainError("distribution weights must be non-negative")
        if sum(w for row in dist for w in row) != 1:
            raise DomainError("distribution weights must sum to exactly 1")
        pred = np.array(self.predicate, dtype=bool)
        shape = (self.n_x, self.n_y, len(self.answers_a), len(self.answers_b))
        if pred.shape != shape:
            raise DomainError(f"predicate table has shape {pred.shape}, expected {shape}")
        if len(set(self.answers_a)) != len(self.answers_a) or len(set(self.answers_b)) != len(self.answers_b):
            raise DomainError("answer labels must be unique")
        pred.setflags(write=False)
        object.__setattr__(self, "distribution", dist)
        object.__setattr__(self, "predicate", pred)
        object.__setattr__(self, "_a_index", {s: i for i, s in enumerate(self.answers_a)})
        object.__setattr__(self, "_b_index", {s: i for i, s in enumerate(self.answers_b)})

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.predicate.shape

    def a_index(self, a) -> int:
        try:
            return self._a_index[_label(a)]
        except (KeyError, TypeError, ValueError):
            raise DomainError(f"{a!r} is not in Alice's answer alphabet") from None

    def b_index(self, b) -> int:
        try:
            return self._b_index[_label(b)]
        except (KeyError, TypeError, ValueError):
            raise DomainError(f"{b!r} is not in Bob's answer alphabet") from None

    def check_question(self, x, y) -> None:
        if not (isinstance(x, (int, np.integer)) and 0 <= x < self.n_x):
            raise DomainError(f"x={x!r} is not in the question alphabet")
        if not (isinstance(y, (int, np.integer)) and 0 <= y < self.n_y):
            raise DomainError(f"y={y!r} is not in the question alphabet")

    @functools.cached_property
    def integer_weights(self) -> tuple[np.ndarray, int]:
        """``(W, L)`` with ``pi(x, y) == W[x, y] / L`` and integer ``W``."""
        denom = math.lcm(*(w.denominator for row in self.distribution for w in row))
        weights = np.array(
            [[int(w * denom) for w in row] for row in self.distribution], dtype=np.int64
        )
        return weights, denom

    @functools.cached_property
    def valid_a(self) -> tuple[tuple[int, ...], ...]:
        """Per question, Alice's answers that win for at least one ``(y, b)``.

        Dropping the others never lowers a value, since a never-winning answer
        can be swapped for any other.
        """
        return tuple(_useful(self.predicate[x].any(axis=(0, 2))) for x in range(self.n_x))

    @functools.cached_property
    def valid_b(self) -> tuple[tuple[int, ...], ...]:
        return tuple(_useful(self.predicate[:, y].any(axis=(0, 1))) for y in range(self.n_y))

    @functools.cached_property
    def _label_lookup(self) -> tuple[dict[str, int], dict[str, int]]:
        return (
            {a: i for i, a in enumerate(self.answers_a)},
            {b: i for i, b in enumerate(self.answers_b)},
        )


def _useful(mask: np.ndarray) -> tuple[int, ...]:
    idx = tuple(int(i) for i in np.flatnonzero(mask))
    return idx or (0,)


def _parity(label: str) -> int:
    return sum(int(ch) for ch in label) % 2


@functools.lru_cache(maxsize=1)
def magic_square() -> GameSpec:
    """The Magic Square game: trit questions, 3-bit answers, uniform pi."""
    labels = tuple(format(v, "03b") for v in range(8))
    pred = np.zeros((3, 3, 8, 8), dtype=bool)
    for x, y, ia, ib in itertools.product(range(3), range(3), range(8), range(8)):
        a, b = labels[ia], labels[ib]
        pred[x, y, ia, ib] = _parity(a) == 0 and _parity(b) == 1 and a[y] == b[x]
    ninth = Fraction(1, 9)
    return GameSpec(3, 3, labels, labels, ((ninth,) * 3,) * 3, pred, name="magic-square")


def constant_game(n_x: int = 2, n_y: int = 2, value: bool = True) -> GameSpec:
    """A toy game whose predicate ignores everything (uniform questions)."""
    w = Fraction(1, n_x * n_y)
    pred = np.full((n_x, n_y, 2, 2), value, dtype=bool)
    return GameSpec(n_x, n_y, ("0", "1"), ("0", "1"), ((w,) * n_y,) * n_x, pred, name="constant")


def chsh() -> GameSpec:
    """CHSH: win iff ``a xor b == x and y``."""
    pred = np.zeros((2, 2, 2, 2), dtype=bool)
    for x, y, a, b in itertools.product(range(2), repeat=4):
        pred[x, y, a, b] = (a ^ b) == (x & y)
    q = Fraction(1, 4)
    return GameSpec(2, 2, ("0", "1"), ("0", "1"), ((q, q), (q, q)), pred, name="chsh")


def eval_predicate(game: GameSpec, x, y, a, b) -> bool:
    """Look up ``V(x, y, a, b)``; raises :class:`DomainError` off-alphabet."""
    game.check_question(x, y)
    return bool(game.predicate[x, y, game.a_index(a), game.b_index(b)])


# ---------------------------------------------------------------------------
# line inputs


def encode_trits(trits: Iterable[int]) -> tuple[int, ...]:
    out: list[int] = []
    for t in trits:
        if t not in TRIT_CODES:
            raise DomainError(f"{t!r} is not a trit")
        out.extend(TRIT_CODES[t])
    return tuple(out)


def decode_trits(bits: Sequence[int]) -> tuple[int, ...]:
    if len(bits) % 2:
        raise DomainError("trit encoding needs an even number of bits")
    out = []
    for i in range(0, len(bits), 2):
        code = (int(bits[i]), int(bits[i + 1]))
        if code not in _CODE_TRITS:
            raise DomainError(f"bits {code} at position {i} do not encode a trit")
        out.append(_CODE_TRITS[code])
    return tuple(out)


@dataclass(frozen=True)
class LineInput:
    """``n`` question pairs laid out on a line: ``x_1..x_n`` then ``y_1..y_n``.

    ``x_n`` and ``y_1`` are the only cross-side neighbours.
    """

    xs: tuple[int, ...]
    ys: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(int(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(int(v) for v in self.ys))
        if len(self.xs) != len(self.ys):
            raise DomainError("x and y must have the same length")

    @property
    def n(self) -> int:
        return len(self.xs)

    @property
    def x_bits(self) -> tuple[int, ...]:
        return encode_trits(self.xs)

    @property
    def y_bits(self) -> tuple[int, ...]:
        return encode_trits(self.ys)

    @classmethod
    def from_bits(cls, x_bits: Sequence[int], y_bits: Sequence[int]) -> "LineInput":
        return cls(decode_trits(x_bits), decode_trits(y_bits))

    def adjacent(self, u: tuple[str, int], v: tuple[str, int]) -> bool:
        """Whether two symbols, named like ``("x", 1)`` (1-based), are neighbours."""
        order = {("x", i + 1): i for i in range(self.n)}
        order.update({("y", i + 1): self.n + i for i in range(self.n)})
        return abs(order[u] - order[v]) == 1

    def permuted(self, perm: Sequence[int]) -> "LineInput":
        return LineInput(tuple(self.xs[i] for i in perm), tuple(self.ys[i] for i in perm))


def satisfied_mask(game: GameSpec, inputs: LineInput, answers, strict: bool = True) -> np.ndarray:
    """Per-game predicate values as a boolean array.

    With ``strict=False`` an answer outside the alphabet counts as a loss for
    that game instead of raising.
    """
    a_list, b_list = answers
    if len(a_list) != inputs.n or len(b_list) != inputs.n:
        raise DomainError(f"expected {inputs.n} answers per prover, got {len(a_list)} and {len(b_list)}")
    xs = np.asarray(inputs.xs, dtype=np.int64)
    ys = np.asarray(inputs.ys, dtype=np.int64)
    a_idx = np.array([_answer_index(game, 0, a) for a in a_list], dtype=np.int64)
    b_idx = np.array([_answer_index(game, 1, b) for b in b_list], dtype=np.int64)
    bad = (a_idx < 0) | (b_idx < 0) | (xs < 0) | (xs >= game.n_x) | (ys < 0) | (ys >= game.n_y)
    if strict and bad.any():
        i = int(np.flatnonzero(bad)[0])
        eval_predicate(game, inputs.xs[i], inputs.ys[i], a_list[i], b_list[i])
    out = np.zeros(inputs.n, dtype=bool)
    ok = ~bad
    out[ok] = game.predicate[xs[ok], ys[ok], a_idx[ok], b_idx[ok]]
    return out


def _answer_index(game: GameSpec, side: int, label) -> int:
    lookup = game._label_lookup[side]
    if isinstance(label, str):
        return lookup.get(label, -1)
    try:
        return game.a_index(label) if side == 0 else game.b_index(label)
    except DomainError:
        return -1


def count_satisfied(game: GameSpec, inputs: LineInput, answers, strict: bool = True) -> int:
    """Number of games ``i`` with ``V(x_i, y_i, a_i, b_i) = 1``."""
    return int(satisfied_mask(game, inputs, answers, strict).sum())


def parmagic_holds(count: int, n: int, delta) -> bool:
    """Whether ``count >= n(1 - delta)``, evaluated exactly."""
    return Fraction(count) >= n * (1 - _exact(delta))


def _exact(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def sample_inputs(game: GameSpec, n: int, seed: int) -> LineInput:
    """``n`` i.i.d. question pairs from ``pi``, drawn exactly via integer weights."""
    if n < 1:
        raise DomainError("n must be at least 1")
    weights, denom = game.integer_weights
    cumulative = np.cumsum(weights.ravel())
    draws = rng.generator(seed, rng.INPUTS).integers(0, denom, size=n)
    cells = np.searchsorted(cumulative, draws, side="right")
    xs, ys = np.divmod(cells, game.n_y)
    return LineInput(tuple(xs.tolist()), tuple(ys.tolist()))


# ---------------------------------------------------------------------------
# strategies and exact values


@dataclass(frozen=True)
class DeterministicStrategy:
    """Answer tables: ``alice[x]`` and ``bob[y]`` are answer labels."""

    alice: tuple[str, ...]
    bob: tuple[str, ...]

    def answers(self, inputs: LineInput) -> tuple[list[str], list[str]]:
        return [self.alice[x] for x in inputs.xs], [self.bob[y] for y in inputs.ys]


@dataclass(frozen=True)
class LeakageProtocol:
    """One-way protocol: Alice sends ``message[x]`` (``c`` bits) to Bob.

    ``bob`` maps ``(y, message)`` to Bob's answer.
    """

    c: int
    message: tuple[str, ...]
    alice: tuple[str, ...]
    bob: dict

    def __post_init__(self):
        if any(len(m) != self.c or set(m) - {"0", "1"} for m in self.message):
            raise DomainError(f"every message must be exactly {self.c} bits")


def strategy_value(game: GameSpec, strategy: DeterministicStrategy) -> Fraction:
    total = Fraction(0)
    for x, y in itertools.product(range(game.n_x), range(game.n_y)):
        if eval_predicate(game, x, y, strategy.alice[x], strategy.bob[y]):
            total += game.distribution[x][y]
    return total


def protocol_value(game: GameSpec, protocol: LeakageProtocol) -> Fraction:
    total = Fraction(0)
    for x, y in itertools.product(range(game.n_x), range(game.n_y)):
        b = protocol.bob[(y, protocol.message[x])]
        if eval_predicate(game, x, y, protocol.alice[x], b):
            total += game.distribution[x][y]
    return total


def _strategy_table(choices: Sequence[Sequence[int]]) -> np.ndarray:
    """All tables picking one entry per row of ``choices``, lexicographic."""
    table = np.array(list(itertools.product(*choices)), dtype=np.int64)
    return table.reshape(len(table), len(choices))


def _check_cap(required: int, cap: int, what: str) -> None:
    if required > cap:
        raise ResourceError(what, required, cap)


def _partitioned_argmax(total: int, partitions: int, workers: int, score_range):
    """Max and smallest arg-max of a score over ``range(total)``.

    ``score_range(lo, hi)`` returns ``(best_score, best_index)`` for its slice.
    The result does not depend on how the range is split.
    """
    partitions = max(1, min(partitions, total))
    bounds = np.linspace(0, total, partitions + 1).astype(int)
    slices = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: score_range(*s), slices))
    else:
        results = [score_range(*s) for s in slices]
    return max(results, key=lambda r: (r[0], -r[1]))


def classical_optimum(
    game: GameSpec, cap: int = DEFAULT_CAP, partitions: int = 1, workers: int = 1
) -> tuple[Fraction, DeterministicStrategy]:
    """Exact classical value and the lexicographically smallest optimal pair.

    Every pair of deterministic strategies (restricted to useful answers) is
    scored; shared randomness cannot beat the best of them.
    """
    alice_tables = _strategy_table(game.valid_a)
    bob_tables = _strategy_table(game.valid_b)
    n_alice, n_bob = len(alice_tables), len(bob_tables)
    _check_cap(n_alice * n_bob, cap, "classical value enumeration")
    weights, denom = game.integer_weights
    pred = game.predicate
    xs = np.arange(game.n_x)
    ys = np.arange(game.n_y)
    chunk = max(1, (1 << 22) // max(1, n_bob * game.n_y))

    def score_range(lo: int, hi: int) -> tuple[int, int]:
        best = (-1, -1)
        for start in range(lo, hi, chunk):
            block = alice_tables[start : min(hi, start + chunk)]
            # per_answer[k, y, b] = sum_x W[x, y] * V[x, y, block[k, x], b]
            wins = pred[xs[None, :, None], ys[None, None, :], block[:, :, None], :]
            per_answer = np.einsum("kxyb,xy->kyb", wins.astype(np.int64), weights)
            scores = per_answer[:, ys[None, :], bob_tables].sum(axis=2)
            flat = int(np.argmax(scores))
            value = int(scores.flat[flat])
            index = (start + flat // n_bob) * n_bob + flat % n_bob
            if value > best[0]:
                best = (value, index)
        return best

    score, index = _partitioned_argmax(n_alice, partitions, workers, score_range)
    ia, ib = divmod(index, n_bob)
    strategy = DeterministicStrategy(
        tuple(game.answers_a[i] for i in alice_tables[ia]),
        tuple(game.answers_b[i] for i in bob_tables[ib]),
    )
    return Fraction(score, denom), strategy


def brute_force_classical_value(game: GameSpec, cap: int = DEFAULT_CAP, partitions: int = 1, workers: int = 1) -> Fraction:
    return classical_optimum(game, cap, partitions, workers)[0]


def leakage_optimum(
    game: GameSpec, c: int, cap: int = DEFAULT_CAP, partitions: int = 1, workers: int = 1
) -> tuple[Fraction, LeakageProtocol]:
    """Exact best win probability with ``c`` bits sent one way, Alice to Bob.

    Alice's message map and answer table are enumerated jointly; for each, Bob's
    answer for every ``(y, message)`` is an independent exact best response,
    which covers all of Bob's tables at once.  The cap bounds the number of
    scored ``(message map, Alice table, message, y, b)`` cells.
    """
    if c < 0:
        raise DomainError("leakage budget must be non-negative")
    if c == 0:
        value, strategy = classical_optimum(game, cap, partitions, workers)
        bob = {(y, ""): strategy.bob[y] for y in range(game.n_y)}
        return value, LeakageProtocol(0, ("",) * game.n_x, strategy.alice, bob)
    n_msg = 1 << c
    alice_tables = _strategy_table(game.valid_a)
    n_alice = len(alice_tables)
    n_maps = n_msg**game.n_x
    n_b = len(game.answers_b)
    required = n_maps * n_alice * n_msg * game.n_y * n_b
    _check_cap(required, cap, f"leakage value enumeration (c={c})")
    message_maps = _strategy_table([range(n_msg)] * game.n_x)
    onehot = np.zeros((n_maps, game.n_x, n_msg), dtype=np.int64)
    onehot[np.arange(n_maps)[:, None], np.arange(game.n_x)[None, :], message_maps] = 1
    weights, denom = game.integer_weights
    pred = game.predicate
    xs = np.arange(game.n_x)
    ys = np.arange(game.n_y)
    valid_b = np.zeros((game.n_y, n_b), dtype=bool)
    for y, allowed in enumerate(game.valid_b):
        valid_b[y, list(allowed)] = True
    chunk = max(1, (1 << 22) // max(1, n_maps * n_msg * game.n_y * n_b))

    def grouped(block: np.ndarray) -> np.ndarray:
        wins = pred[xs[None, :, None], ys[None, None, :], block[:, :, None], :]
        contrib = wins.astype(np.int64) * weights[None, :, :, None]
        # g[k, j, m, y, b]: weight won by answer b when map j sends m
        g = np.einsum("jxm,kxyb->kjmyb", onehot, contrib)
        return np.where(valid_b[None, None, None], g, -1)

    def score_range(lo: int, hi: int) -> tuple[int, int]:
        # global index = map_index * n_alice + alice_index
        best = (-1, -1)
        for start in range(lo, hi, chunk):
            block = alice_tables[start : min(hi, start + chunk)]
            scores = grouped(block).max(axis=4).sum(axis=(2, 3))  # (k, j)
            idx = np.arange(start, start + len(block))[:, None] + n_alice * np.arange(n_maps)[None, :]
            top = scores.max()
            value = int(top)
            index = int(idx[scores == top].min())
            if value > best[0] or (value == best[0] and index < best[1]):
                best = (value, index)
        return best

    score, index = _partitioned_argmax(n_alice, partitions, workers, score_range)
    jm, ia = divmod(index, n_alice)
    g = grouped(alice_tables[ia : ia + 1])[0, jm]
    msg_label = [format(m, f"0{c}b") for m in range(n_msg)]
    bob = {
        (y, msg_label[m]): game.answers_b[int(np.argmax(g[m, y]))]
        for m in range(n_msg)
        for y in range(game.n_y)
    }
    protocol = LeakageProtocol(
        c,
        tuple(msg_label[m] for m in message_maps[jm]),
        tuple(game.answers_a[i] for i in alice_tables[ia]),
        bob,
    )
    return Fraction(score, denom), protocol


def brute_force_leakage_value(game: GameSpec, c: int, cap: int = DEFAULT_CAP, partitions: int = 1, workers: int = 1) -> Fraction:
    return leakage_optimum(game, c, cap, partitions, workers)[0]


def disclosure_protocol(alice_answer: str = "000") -> LeakageProtocol:
    """Two-bit Magic Square protocol: Alice announces her row.

    Bob copies ``a[y]`` into position ``x`` of his answer and fixes the
    remaining two bits so his parity is odd.
    """
    if _parity(alice_answer) != 0:
        raise DomainError("Alice's answer must have even parity")
    msgs = ("00", "01", "10")
    bob = {}
    for y in range(3):
        for code in ("00", "01", "10", "11"):
            x = _CODE_TRITS.get((int(code[0]), int(code[1])), 0)
            bits = [0, 0, 0]
            bits[x] = int(alice_answer[y])
            bits[(x + 1) % 3] = bits[x] ^ 1
            bob[(y, code)] = _label(bits)
    return LeakageProtocol(2, msgs, (alice_answer,) * 3, bob)


# ---------------------------------------------------------------------------
# parallel repetition


def _tuple_labels(labels: Sequence[str], index_rows: np.ndarray) -> tuple[str, ...]:
    return tuple(",".join(labels[i] for i in row) for row in index_rows)


def parallel_repetition(game: GameSpec, m: int, cap: int = DEFAULT_CAP) -> GameSpec:
    """The ``m``-fold repetition ``G^m`` as an explicit table (won iff all games won).

    Question ``x`` of ``G^m`` is the mixed-radix index of ``(x_1, ..., x_m)``,
    most significant first; answers are comma-joined labels.
    """
    if m < 1:
        raise DomainError("m must be at least 1")
    nx, ny, na, nb = game.shape
    size = (nx * ny * na * nb) ** m
    _check_cap(size, cap, "parallel repetition table")
    x_rows = _strategy_table([range(nx)] * m)
    y_rows = _strategy_table([range(ny)] * m)
    a_rows = _strategy_table([range(na)] * m)
    b_rows = _strategy_table([range(nb)] * m)
    pred = np.ones((nx**m, ny**m, na**m, nb**m), dtype=bool)
    for i in range(m):
        pred &= game.predicate[
            x_rows[:, i][:, None, None, None],
            y_rows[:, i][None, :, None, None],
            a_rows[:, i][None, None, :, None],
            b_rows[:, i][None, None, None, :],
        ]
    dist = tuple(
        tuple(math.prod(game.distribution[xr[i]][yr[i]] for i in range(m)) for yr in y_rows)
        for xr in x_rows
    )
    return GameSpec(
        nx**m,
        ny**m,
        _tuple_labels(game.answers_a, a_rows),
        _tuple_labels(game.answers_b, b_rows),
        dist,
        pred,
        name=f"{game.name}^{m}",
    )


def best_response_search(
    game: GameSpec, m: int, restarts: int = 1, seed: int = 0, cap: int = DEFAULT_CAP
) -> tuple[Fraction, DeterministicStrategy]:
    """Lower bound on ``val(G^m)`` by alternating exact best responses.

    Restart 0 starts Alice from the product of single-game optimal answers, so
    its result is at least ``val(G)^m``.  Restart ``k >= 1`` starts Alice from a
    uniformly random table drawn from stream ``(seed, k)``; adding restarts
    therefore never lowers the bound.  Ties go to the smallest answer index and
    then to the earliest restart.
    """
    if m < 1 or restarts < 1:
        raise DomainError("m and restarts must be positive")
    nx, ny = game.n_x, game.n_y
    weights, denom = game.integer_weights
    valid_a, valid_b = game.valid_a, game.valid_b
    widest = max(max(map(len, valid_a)), max(map(len, valid_b))) ** m
    _check_cap((nx**m) * (ny**m) * widest, cap, "best-response step")
    x_rows = _strategy_table([range(nx)] * m)
    y_rows = _strategy_table([range(ny)] * m)
    w_m = np.ones((nx**m, ny**m), dtype=object)
    for i in range(m):
        w_m = w_m * weights[x_rows[:, i][:, None], y_rows[:, i][None, :]].astype(object)
    w_m = w_m.astype(np.int64) if denom**m < 2**62 else w_m
    cand_a = [_strategy_table([valid_a[x] for x in row]) for row in x_rows]
    cand_b = [_strategy_table([valid_b[y] for y in row]) for row in y_rows]
    pred = game.predicate

    def alice_response(bob: np.ndarray) -> np.ndarray:
        out = np.empty((nx**m, m), dtype=np.int64)
        for k, row in enumerate(x_rows):
            cand = cand_a[k]
            wins = pred[row[None, None, :], y_rows[None, :, :], cand[:, None, :], bob[None, :, :]].all(axis=2)
            scores = wins.astype(np.int64) @ w_m[k]
            out[k] = cand[int(np.argmax(scores))]
        return out

    def bob_response(alice: np.ndarray) -> np.ndarray:
        out = np.empty((ny**m, m), dtype=np.int64)
        for k, row in enumerate(y_rows):
            cand = cand_b[k]
            wins = pred[x_rows[None, :, :], row[None, None, :], alice[None, :, :], cand[:, None, :]].all(axis=2)
            scores = wins.astype(np.int64) @ w_m[:, k]
            out[k] = cand[int(np.argmax(scores))]
        return out

    def value(alice: np.ndarray, bob: np.ndarray) -> int:
        wins = pred[x_rows[:, None, :], y_rows[None, :, :], alice[:, None, :], bob[None, :, :]].all(axis=2)
        return int((wins * w_m).sum())

    def climb(alice: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
        bob = bob_response(alice)
        score = value(alice, bob)
        for _ in range(1000):
            alice2 = alice_response(bob)
            bob2 = bob_response(alice2)
            score2 = value(alice2, bob2)
            if score2 <= score:
                break
            alice, bob, score = alice2, bob2, score2
        return score, alice, bob

    best = None
    for r in range(restarts):
        if r == 0:
            _, single = classical_optimum(game, cap)
            a_star = [game.a_index(a) for a in single.alice]
            start = np.array([[a_star[x] for x in row] for row in x_rows], dtype=np.int64)
        else:
            gen = rng.generator(seed, rng.SEARCH, r)
            start = np.array([c[gen.integers(len(c))] for c in cand_a], dtype=np.int64)
        result = climb(start)
        if best is None or result[0] > best[0]:
            best = result
    score, alice, bob = best
    strategy = DeterministicStrategy(
        _tuple_labels(game.answers_a, alice), _tuple_labels(game.answers_b, bob)
    )
    return Fraction(score, denom**m), strategy


# ---------------------------------------------------------------------------
# text table format


def dumps_game(game: GameSpec) -> str:
    """Serialise a game as a text table (see :func:`loads_game`)."""
    lines = [
        f"name {game.name}",
        f"sizes {game.n_x} {game.n_y} {len(game.answers_a)} {len(game.answers_b)}",
        "A " + " ".join(game.answers_a),
        "B " + " ".join(game.answers_b),
    ]
    for x in range(game.n_x):
        for y in range(game.n_y):
            w = game.distribution[x][y]
            lines.append(f"pi {x} {y} {w.numerator}/{w.denominator}")
    for x, y, ia, ib in itertools.product(*map(range, game.shape)):
        v = int(game.predicate[x, y, ia, ib])
        lines.append(f"{x} {y} {game.answers_a[ia]} {game.answers_b[ib]} {v}")
    return "\n".join(lines) + "\n"


def loads_game(text: str) -> GameSpec:
    """Parse the text table format.

    Lines: ``name N``, ``sizes X Y A B``, ``A labels...``, ``B labels...``,
    one ``pi x y p/q`` per question pair, and one ``x y a b V`` per table
    entry.  ``#`` starts a comment.  Every entry must appear exactly once.
    """
    name = "game"
    sizes = labels_a = labels_b = None
    dist: dict = {}
    entries: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "name":
                name = " ".join(tok[1:])
            elif tok[0] == "sizes":
                sizes = tuple(int(t) for t in tok[1:5])
            elif tok[0] == "A":
                labels_a = tuple(tok[1:])
            elif tok[0] == "B":
                labels_b = tuple(tok[1:])
            elif tok[0] == "pi":
                key = (int(tok[1]), int(tok[2]))
                if key in dist:
                    raise DomainError(f"duplicate pi entry {key}")
                dist[key] = Fraction(tok[3])
            elif len(tok) == 5:
                key = (int(tok[0]), int(tok[1]), tok[2], tok[3])
                if key in entries:
                    raise DomainError(f"duplicate table entry {key}")
                if tok[4] not in ("0", "1"):
                    raise DomainError(f"predicate value must be 0 or 1, got {tok[4]!r}")
                entries[key] = tok[4] == "1"
            else:
                raise DomainError(f"unrecognised line {raw!r}")
        except (ValueError, IndexError, ZeroDivisionError) as exc:
            if isinstance(exc, DomainError):
                raise DomainError(f"line {lineno}: {exc}") from None
            raise DomainError(f"line {lineno}: malformed {raw!r}") from None
    if sizes is None or labels_a is None or labels_b is None:
        raise DomainError("game table needs sizes, A and B lines")
    nx, ny, na, nb = sizes
    if (len(labels_a), len(labels_b)) != (na, nb):
        raise DomainError("label counts disagree with sizes")
    if len(dist) != nx * ny or any(not (0 <= x < nx and 0 <= y < ny) for x, y in dist):
        raise DomainError("need exactly one pi entry per question pair")
    a_idx = {s: i for i, s in enumerate(labels_a)}
    b_idx = {s: i for i, s in enumerate(labels_b)}
    pred = np.zeros((nx, ny, na, nb), dtype=bool)
    seen = np.zeros_like(pred)
    for (x, y, a, b), v in entries.items():
        if not (0 <= x < nx and 0 <= y < ny) or a not in a_idx or b not in b_idx:
            raise DomainError(f"table entry {(x, y, a, b)} is outside the alphabets")
        pred[x, y, a_idx[a], b_idx[b]] = v
        seen[x, y, a_idx[a], b_idx[b]] = True
    if not seen.all():
        raise DomainError(f"predicate table is not total: {int((~seen).sum())} entries missing")
    distribution = tuple(tuple(dist[(x, y)] for y in range(ny)) for x in range(nx))
    return GameSpec(nx, ny, labels_a, labels_b, distribution, pred, name=name)


def load_game(spec: str) -> GameSpec:
    """``"magic-square"``, ``"chsh"`` or a path to a game table file."""
    builtin = {"magic-square": magic_square, "chsh": chsh, "constant": constant_game}
    if spec in builtin:
        return builtin[spec]()
    try:
        with open(spec, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"unknown game {spec!r}: not a built-in ({', '.join(builtin)}) nor a readable file") from exc
    return loads_game(text)
