"""Verifier/prover protocol for the parallel Magic Square task.

A round: the verifier draws ``n`` question pairs, sends them as one padded
message (two blanks before every trit), the prover routes the populated
registers onto its circuit inputs and answers, and the verifier accepts when
at least ``ceil(n (1 - delta))`` games are won.

Classical adversaries plug in through :class:`AdversarySpec`; soundness
probes measure their acceptance rate next to exact binomial baselines.
"""

from __future__ import annotations

import functools
import json
import math
import multiprocessing
import socket
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import binomtest

from . import rng
from .circuit import NAND, LayeredCircuit, evaluate_batch, nand_to_toffoli, random_tape, validate_geometry
from .compiler import compile_protocol, encode_frame, read_frame
from .errors import DomainError
from .games import (
    DeterministicStrategy,
    GameSpec,
    LeakageProtocol,
    LineInput,
    _exact,
    magic_square,
    protocol_value,
    sample_inputs,
    satisfied_mask,
    strategy_value,
)
from .quantum import SLOT_SWAP, NoiseModel, game_uniforms, run_parmagic

BLANK = 3
DELTA_MAX = Fraction(1, 10)
DEFAULT_DELTA = 0.1


def default_epsilon(delta: float) -> float:
    return delta / 100


def _check_delta(delta) -> Fraction:
    exact = _exact(delta)
    if not 0 <= exact <= DELTA_MAX:
        raise DomainError(f"delta must lie in [0, 0.1], got {delta}")
    return exact


def threshold(n: int, delta) -> int:
    """``ceil(n (1 - delta))`` in exact arithmetic."""
    return math.ceil(n * (1 - _exact(delta)))


# ---------------------------------------------------------------------------
# padded message


@dataclass(frozen=True, eq=False)
class PaddedMessage:
    """Two bits per symbol; symbol ``3k + 2`` (0-based) is a trit, the rest blanks.

    Trits are coded ``00, 01, 10`` and blanks ``11``.  Decoding only reads
    trit positions, so whatever sits in a blank slot is ignored.
    """

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8).ravel()
        if len(bits) == 0 or len(bits) % 12:
            raise DomainError(f"a padded message has 12n bits, got {len(bits)}")
        if (bits > 1).any():
            raise DomainError("message bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __eq__(self, other):
        return isinstance(other, PaddedMessage) and np.array_equal(self.bits, other.bits)

    __hash__ = None

    @classmethod
    def from_inputs(cls, inputs: LineInput) -> "PaddedMessage":
        trits = np.array(inputs.xs + inputs.ys, dtype=np.uint8)
        if (trits > 2).any():
            raise DomainError("questions must be trits")
        symbols = np.full((len(trits), 3), BLANK, dtype=np.uint8)
        symbols[:, 2] = trits
        return cls(_symbols_to_bits(symbols.ravel()))

    @property
    def n(self) -> int:
        return len(self.bits) // 12

    @property
    def symbols(self) -> tuple[int, ...]:
        pairs = self.bits.reshape(-1, 2)
        return tuple(int(v) for v in 2 * pairs[:, 0] + pairs[:, 1])

    def trit_codes(self) -> np.ndarray:
        """``(2n, 2)`` bit pairs at the trit positions, x registers first."""
        return self.bits.reshape(-1, 3, 2)[:, 2, :]

    def decode(self) -> LineInput:
        codes = self.trit_codes()
        values = 2 * codes[:, 0] + codes[:, 1]
        if (values == BLANK).any():
            i = int(np.flatnonzero(values == BLANK)[0])
            raise DomainError(f"trit register {i} holds the blank code")
        n = self.n
        return LineInput(values[:n].tolist(), values[n:].tolist())

    def is_canonical(self) -> bool:
        """Blanks coded ``11`` and every trit register holding a trit."""
        blanks = self.bits.reshape(-1, 3, 2)[:, :2, :]
        codes = self.trit_codes()
        return bool((blanks == 1).all() and (codes.sum(axis=1) < 2).all())


def _symbols_to_bits(symbols: np.ndarray) -> np.ndarray:
    return np.stack([symbols >> 1, symbols & 1], axis=1).ravel().astype(np.uint8)


def verifier_round(n: int, delta=DEFAULT_DELTA, seed: int = 0, game: GameSpec | None = None) -> tuple[PaddedMessage, LineInput]:
    """Draw the questions and build the message.  Returns ``(message, hidden inputs)``."""
    _check_delta(delta)
    if n < 1:
        raise DomainError("n must be at least 1")
    inputs = sample_inputs(game or magic_square(), n, rng.derive_seed(seed, rng.VERIFIER))
    return PaddedMessage.from_inputs(inputs), inputs


# ---------------------------------------------------------------------------
# honest prover


def route_inputs(message: PaddedMessage, noise: NoiseModel, seed: int) -> LineInput:
    """Swap every populated register onto the circuit inputs, skipping blanks.

    Each game uses four swaps (x high, x low, y high, y low).  A fault after a
    swap is a random non-identity two-qubit Pauli whose first factor acts on
    the routed bit; an X or Y there flips it.  A code corrupted into ``11``
    reads as 2, since the circuit branches on the high bit first.
    """
    codes = message.trit_codes().astype(np.int64)
    n = message.n
    if noise.noisy_swap_network and noise.epsilon > 0:
        u = game_uniforms(seed, 0, n)
        bits = np.concatenate([codes[:n], codes[n:]], axis=1)  # (n, 4): x hi, x lo, y hi, y lo
        for j in range(4):
            u_fault = u[:, 2 * (SLOT_SWAP + j)]
            u_pauli = u[:, 2 * (SLOT_SWAP + j) + 1]
            choice = 1 + np.minimum((u_pauli * 15).astype(np.int64), 14)
            first = choice >> 2
            flip = (u_fault < noise.epsilon) & ((first == 1) | (first == 2))
            bits[:, j] ^= flip
        codes = np.concatenate([bits[:, :2], bits[:, 2:]], axis=0)
    values = np.where(codes[:, 0] == 1, 2, codes[:, 1])
    return LineInput(values[:n].tolist(), values[n:].tolist())


def honest_prover(message: PaddedMessage, noise: NoiseModel = NoiseModel(), seed: int = 0, workers: int = 1) -> tuple[list[str], list[str]]:
    message.decode()  # malformed trit registers are rejected up front
    routed = route_inputs(message, noise, seed)
    return run_parmagic(routed, noise, seed, workers=workers)


# ---------------------------------------------------------------------------
# verdict


@dataclass(frozen=True)
class Verdict:
    accept: bool
    win_count: int
    per_game: tuple[bool, ...]
    threshold: int

    @property
    def n(self) -> int:
        return len(self.per_game)


def verify(inputs: LineInput, answers, delta=DEFAULT_DELTA, game: GameSpec | None = None) -> Verdict:
    """Score every game; answers outside the alphabet lose their game."""
    mask = satisfied_mask(game or magic_square(), inputs, answers, strict=False)
    wins = int(mask.sum())
    need = threshold(inputs.n, delta)
    return Verdict(wins >= need, wins, tuple(bool(v) for v in mask), need)


def exact_binomial_tail(n: int, p, k: int) -> Fraction:
    """``Pr[Bin(n, p) >= k]`` as an exact rational."""
    p = _exact(p)
    q = 1 - p
    k = max(k, 0)
    return sum((math.comb(n, j) * p**j * q ** (n - j) for j in range(k, n + 1)), Fraction(0))


# ---------------------------------------------------------------------------
# adversaries

STRATEGY = "strategy"
LEAKAGE = "leakage"
CIRCUIT = "gl-circuit"


@dataclass(frozen=True, eq=False)
class AdversarySpec:
    """A classical prover pair.

    * ``strategy``: a :class:`DeterministicStrategy` replayed on every game.
    * ``leakage``: a one-way :class:`LeakageProtocol`, ``c`` bits per game.
    * ``gl-circuit``: a :class:`LayeredCircuit` over ``6n`` block wires.
      Game ``i`` owns wires ``3i..3i+2`` (Alice) and ``3n+3i..3n+3i+2`` (Bob);
      the first two get the trit code, the third starts at 0, and the three
      final values are the answer.  Extra wires must be randomness or ancillas.
    """

    kind: str
    payload: object
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == CIRCUIT:
            problems = validate_geometry(self.payload)
            if problems:
                raise DomainError(f"adversary circuit is not geometrically local: {problems[0].detail}")
            _circuit_games(self.payload)
        elif self.kind == STRATEGY:
            if not isinstance(self.payload, DeterministicStrategy):
                raise DomainError("strategy adversaries need a DeterministicStrategy")
        elif self.kind == LEAKAGE:
            if not isinstance(self.payload, LeakageProtocol):
                raise DomainError("leakage adversaries need a LeakageProtocol")
        else:
            raise DomainError(f"unknown adversary kind {self.kind!r}")

    @property
    def depth(self) -> int:
        """Depth of the Toffoli circuit the communication is metered on (0 for tables)."""
        return _circuit_protocol(self.payload).circuit.depth if self.kind == CIRCUIT else 0

    def communication(self, n: int) -> int:
        """Bits exchanged between the two sides over ``n`` games."""
        if self.kind == STRATEGY:
            return 0
        if self.kind == LEAKAGE:
            return self.payload.c * n
        return _circuit_protocol(self.payload).predicted_total

    def game_value(self, game: GameSpec) -> Fraction | None:
        """Exact per-game win probability, when games are played independently."""
        if self.kind == STRATEGY:
            return strategy_value(game, self.payload)
        if self.kind == LEAKAGE:
            return protocol_value(game, self.payload)
        return None

    def answers(self, inputs: LineInput, seed: int = 0) -> tuple[list[str], list[str]]:
        if self.kind == STRATEGY:
            return self.payload.answers(inputs)
        if self.kind == LEAKAGE:
            proto = self.payload
            a = [proto.alice[x] for x in inputs.xs]
            b = [proto.bob[(y, proto.message[x])] for x, y in zip(inputs.xs, inputs.ys)]
            return a, b
        return _circuit_answers(self.payload, [inputs], seed)[0]


def _circuit_games(circuit: LayeredCircuit) -> int:
    inputs = circuit.input_wires
    n = len(inputs) // 6
    if n < 1 or inputs != tuple(range(6 * n)):
        raise DomainError("circuit adversary needs exactly the wires 0..6n-1 as inputs")
    return n


@functools.lru_cache(maxsize=32)
def _circuit_protocol(circuit: LayeredCircuit):
    toffoli = nand_to_toffoli(circuit) if NAND in circuit.kinds else circuit
    return compile_protocol(toffoli)


def _circuit_answers(circuit: LayeredCircuit, rounds: Sequence[LineInput], seed: int) -> list[tuple[list[str], list[str]]]:
    n = _circuit_games(circuit)
    for inputs in rounds:
        if inputs.n != n:
            raise DomainError(f"circuit adversary plays {n} games, asked for {inputs.n}")
    rows = []
    for inputs in rounds:
        bits = np.zeros((2, n, 3), dtype=np.uint8)
        bits[0, :, :2] = np.array(inputs.x_bits, dtype=np.uint8).reshape(n, 2)
        bits[1, :, :2] = np.array(inputs.y_bits, dtype=np.uint8).reshape(n, 2)
        rows.append(bits.ravel())
    tapes = np.array(
        [random_tape(seed, len(circuit.randomness_wires), i) for i in range(len(rounds))], dtype=np.uint8
    ).reshape(len(rounds), -1)
    out = evaluate_batch(circuit, np.array(rows), tapes)[:, : 6 * n].reshape(len(rounds), 2, n, 3)
    labels = []
    for r in range(len(rounds)):
        a = ["".join(map(str, v)) for v in out[r, 0].tolist()]
        b = ["".join(map(str, v)) for v in out[r, 1].tolist()]
        labels.append((a, b))
    return labels


def dumps_adversary(adv: AdversarySpec) -> str:
    """Text form for ``strategy`` and ``leakage`` adversaries, JSON for circuits."""
    if adv.kind == CIRCUIT:
        return adv.payload.dumps()
    lines = [f"kind {adv.kind}"]
    if adv.label:
        lines.append(f"label {adv.label}")
    if adv.kind == STRATEGY:
        lines.append("alice " + " ".join(adv.payload.alice))
        lines.append("bob " + " ".join(adv.payload.bob))
    else:
        proto = adv.payload
        lines.append(f"c {proto.c}")
        lines.append("message " + " ".join(m or "-" for m in proto.message))
        lines.append("alice " + " ".join(proto.alice))
        for (y, m), b in sorted(proto.bob.items()):
            lines.append(f"reply {y} {m or '-'} {b}")
    return "\n".join(lines) + "\n"


def loads_adversary(text: str) -> AdversarySpec:
    if text.lstrip().startswith("{"):
        return AdversarySpec(CIRCUIT, LayeredCircuit.loads(text))
    fields: dict[str, list] = {}
    bob_rows = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "reply" and len(rest) == 3:
            y, m, b = rest
            bob_rows[(int(y), "" if m == "-" else m)] = b
        else:
            fields[key] = rest
    kind = (fields.get("kind") or [""])[0]
    label = " ".join(fields.get("label", []))
    try:
        if kind == STRATEGY:
            return AdversarySpec(STRATEGY, DeterministicStrategy(tuple(fields["alice"]), tuple(fields["bob"])), label)
        if kind == LEAKAGE:
            proto = LeakageProtocol(
                int(fields["c"][0]),
                tuple("" if m == "-" else m for m in fields["message"]),
                tuple(fields["alice"]),
                bob_rows,
            )
            return AdversarySpec(LEAKAGE, proto, label)
    except (KeyError, IndexError, ValueError) as exc:
        raise DomainError(f"malformed adversary description: {exc}") from None
    raise DomainError(f"unknown adversary kind {kind!r}")


def load_adversary(path: str) -> AdversarySpec:
    with open(path, encoding="utf-8") as fh:
        return loads_adversary(fh.read())


def replay_adversary(game: GameSpec | None = None) -> AdversarySpec:
    """Best deterministic single-game strategy, replayed on every game."""
    from .games import classical_optimum

    _, strategy = classical_optimum(game or magic_square())
    return AdversarySpec(STRATEGY, strategy, "best single-game strategy")


def fixed_parity_adversary() -> AdversarySpec:
    return AdversarySpec(STRATEGY, DeterministicStrategy(("000",) * 3, ("001",) * 3), "fixed parities")


# ---------------------------------------------------------------------------
# probes and rounds

PROBE_COLUMNS = (
    "adversary", "n", "delta", "trials", "accepted", "rate", "ci_low", "ci_high",
    "exact_tail", "exact_tail_float", "per_game_value", "depth", "communication",
)


@dataclass(frozen=True)
class ProbeResult:
    adversary: str
    n: int
    delta: Fraction
    trials: int
    accepted: int
    ci_low: float
    ci_high: float
    per_game_value: Fraction | None
    exact_tail: Fraction | None
    depth: int
    communication: int

    @property
    def rate(self) -> float:
        return self.accepted / self.trials

    def row(self) -> dict:
        return {
            "adversary": self.adversary,
            "n": self.n,
            "delta": str(self.delta),
            "trials": self.trials,
            "accepted": self.accepted,
            "rate": repr(self.rate),
            "ci_low": repr(self.ci_low),
            "ci_high": repr(self.ci_high),
            "exact_tail": "" if self.exact_tail is None else str(self.exact_tail),
            "exact_tail_float": "" if self.exact_tail is None else repr(float(self.exact_tail)),
            "per_game_value": "" if self.per_game_value is None else str(self.per_game_value),
            "depth": self.depth,
            "communication": self.communication,
        }


def run_soundness_probe(
    adversary: AdversarySpec,
    n: int,
    delta=DEFAULT_DELTA,
    trials: int = 1000,
    seed: int = 0,
    game: GameSpec | None = None,
) -> ProbeResult:
    """Acceptance rate of ``adversary`` over ``trials`` independent rounds.

    Round ``t`` draws its questions from ``derive_seed(seed, PROBE, n, t)``.
    """
    game = game or magic_square()
    exact_delta = _check_delta(delta)
    if trials < 1:
        raise DomainError("trials must be at least 1")
    rounds = [
        sample_inputs(game, n, rng.derive_seed(seed, rng.PROBE, n, t)) for t in range(trials)
    ]
    need = threshold(n, exact_delta)
    if adversary.kind == CIRCUIT:
        answer_sets = _circuit_answers(adversary.payload, rounds, rng.derive_seed(seed, rng.TAPE, n))
    else:
        answer_sets = [adversary.answers(r) for r in rounds]
    big = LineInput(
        [x for r in rounds for x in r.xs], [y for r in rounds for y in r.ys]
    )
    a_all = [a for ans in answer_sets for a in ans[0]]
    b_all = [b for ans in answer_sets for b in ans[1]]
    wins = satisfied_mask(game, big, (a_all, b_all), strict=False).reshape(trials, n).sum(axis=1)
    accepted = int((wins >= need).sum())
    ci = binomtest(accepted, trials).proportion_ci(confidence_level=0.95, method="exact")
    p = adversary.game_value(game)
    tail = exact_binomial_tail(n, p, need) if p is not None else None
    return ProbeResult(
        adversary.label or adversary.kind,
        n,
        exact_delta,
        trials,
        accepted,
        float(ci.low),
        float(ci.high),
        p,
        tail,
        adversary.depth,
        adversary.communication(n),
    )


ROUND_FIELDS = ("round", "seed", "n", "delta", "epsilon", "win_count", "accept")
VERIFIER_SENDER = 2
PROVER_SENDER = 3
_CHUNK_BITS = 65528


def play_round(n: int, delta, noise: NoiseModel, seed: int, prover_seed: int, workers: int = 1) -> Verdict:
    message, hidden = verifier_round(n, delta, seed)
    answers = honest_prover(message, noise, prover_seed, workers=workers)
    return verify(hidden, answers, delta)


def _send_bits(sock, tag: int, sender: int, bits) -> None:
    bits = [int(b) for b in bits]
    for lo in range(0, len(bits), _CHUNK_BITS):
        sock.sendall(encode_frame(tag, sender, bits[lo : lo + _CHUNK_BITS]))
    sock.sendall(encode_frame(tag, sender, ()))


def _recv_bits(sock, tag: int, sender: int) -> list[int]:
    out: list[int] = []
    while True:
        msg = read_frame(sock)
        if msg.layer != tag or msg.sender != sender:
            raise DomainError(f"unexpected frame {msg.layer}/{msg.sender}")
        if not msg.bits:
            return out
        out.extend(msg.bits)


def _answer_bits(answers) -> list[int]:
    return [int(ch) for side in answers for label in side for ch in label]


def _answers_from_bits(bits: Sequence[int], n: int) -> tuple[list[str], list[str]]:
    labels = ["".join(map(str, bits[3 * i : 3 * i + 3])) for i in range(2 * n)]
    return labels[:n], labels[n:]


def _prover_loop(sock, noise: NoiseModel, seed: int, rounds: int, workers: int) -> None:
    for r in range(rounds):
        message = PaddedMessage(_recv_bits(sock, r % (1 << 16), VERIFIER_SENDER))
        answers = honest_prover(message, noise, rng.derive_seed(seed, rng.NOISE, r), workers=workers)
        _send_bits(sock, r % (1 << 16), PROVER_SENDER, _answer_bits(answers))
    sock.close()


def run_rounds(n: int, delta, epsilon: float, rounds: int, seed: int, workers: int = 1, two_process: bool = False):
    """Yield one JSON-ready log record per round of the honest protocol.

    With ``two_process`` the prover runs in a child process and the message
    and answers travel as frames over a socket pair; records are identical.
    """
    _check_delta(delta)
    if n < 1 or rounds < 0:
        raise DomainError("n must be positive and rounds non-negative")
    noise = NoiseModel(epsilon)
    peer = proc = None
    if two_process:
        methods = multiprocessing.get_all_start_methods()
        ctx = multiprocessing.get_context("fork" if "fork" in methods else "spawn")
        peer, theirs = socket.socketpair()
        proc = ctx.Process(target=_prover_loop, args=(theirs, noise, seed, rounds, workers))
        proc.start()
        theirs.close()
    try:
        for r in range(rounds):
            round_seed = rng.derive_seed(seed, rng.VERIFIER, r)
            if peer is None:
                verdict = play_round(n, delta, noise, round_seed, rng.derive_seed(seed, rng.NOISE, r), workers)
            else:
                message, hidden = verifier_round(n, delta, round_seed)
                _send_bits(peer, r % (1 << 16), VERIFIER_SENDER, message.bits)
                answers = _answers_from_bits(_recv_bits(peer, r % (1 << 16), PROVER_SENDER), n)
                verdict = verify(hidden, answers, delta)
            yield {
                "round": r,
                "seed": round_seed,
                "n": n,
                "delta": delta,
                "epsilon": epsilon,
                "win_count": verdict.win_count,
                "accept": verdict.accept,
            }
    finally:
        if peer is not None:
            peer.close()
            proc.join()


def dumps_round(record: dict) -> str:
    return json.dumps({k: record[k] for k in ROUND_FIELDS}, separators=(",", ":"))
