"""Noisy statevector simulation of the honest Magic Square prover.

Each game owns a 4-qubit register: two Bell pairs on qubits (0, 1) and (2, 3),
Alice holding qubits 0 and 2 and Bob qubits 1 and 3.  Qubit 0 is the most
significant bit of a basis index.  Games with the same question pair are
simulated together as one ``(batch, 2, 2, 2, 2)`` array.

Randomness comes from a per-game row of uniforms (see :mod:`parmagic.rng`).
Every noisy gate of the fixed game schedule owns two slots in that row: one
decides whether a fault happens, the other picks the Pauli.  Results are
therefore a function of ``(inputs, noise, seed)`` only.
"""

from __future__ import annotations

import csv
import functools
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DomainError
from .games import GameSpec, LineInput, magic_square, satisfied_mask

MAX_QUBITS = 8
NORM_TOL = 1e-10

_S2 = 1 / np.sqrt(2)
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
GATES_1Q = {
    **PAULI,
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _S2,
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
}
GATES_2Q = {
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}
_PAULI_ORDER = "IXYZ"


@dataclass(frozen=True)
class NoiseModel:
    """Per-gate depolarizing noise.

    After every noisy gate a fault happens with probability ``epsilon``; the
    fault is a uniformly random non-identity Pauli on the gate's qubits.
    """

    epsilon: float = 0.0
    noisy_resource_prep: bool = False
    noisy_swap_network: bool = True

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise DomainError(f"epsilon must lie in [0, 1), got {self.epsilon}")


NOISELESS = NoiseModel()


@dataclass(frozen=True)
class Gate:
    label: str
    targets: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        arity = 1 if self.label in GATES_1Q else 2 if self.label in GATES_2Q else None
        if arity is None:
            raise DomainError(f"unknown gate {self.label!r}")
        if len(self.targets) != arity:
            raise DomainError(f"{self.label} acts on {arity} qubit(s), got {self.targets}")
        if len(set(self.targets)) != arity:
            raise DomainError(f"{self.label} targets must be distinct")

    @property
    def matrix(self) -> np.ndarray:
        return GATES_1Q.get(self.label, GATES_2Q.get(self.label))


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).ravel()
        n = int(np.log2(len(amps))) if len(amps) else -1
        if n < 1 or 2**n != len(amps) or n > MAX_QUBITS:
            raise DomainError(f"need 2^k amplitudes with 1 <= k <= {MAX_QUBITS}")
        if abs(np.vdot(amps, amps).real - 1) > NORM_TOL:
            raise DomainError("state is not normalised")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def qubit_count(self) -> int:
        return int(np.log2(len(self.amplitudes)))

    @classmethod
    def zero(cls, qubits: int) -> "StateVector":
        amps = np.zeros(2**qubits, dtype=complex)
        amps[0] = 1
        return cls(amps)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def __eq__(self, other):
        return isinstance(other, StateVector) and np.array_equal(self.amplitudes, other.amplitudes)

    __hash__ = None


# ---------------------------------------------------------------------------
# batched kernels: states have shape (batch, 2, ..., 2)


def _apply(states: np.ndarray, matrix: np.ndarray, targets: tuple[int, ...]) -> np.ndarray:
    axes = [t + 1 for t in targets]
    k = len(targets)
    moved = np.moveaxis(states, axes, range(-k, 0))
    shape = moved.shape
    out = (moved.reshape(shape[:-k] + (2**k,)) @ matrix.T).reshape(shape)
    return np.moveaxis(out, range(-k, 0), axes)


def _pauli_matrix(index: int, arity: int) -> np.ndarray:
    digits = [(index >> (2 * (arity - 1 - j))) & 3 for j in range(arity)]
    out = np.eye(1, dtype=complex)
    for d in digits:
        out = np.kron(out, PAULI[_PAULI_ORDER[d]])
    return out


def _fault(states: np.ndarray, targets: tuple[int, ...], eps: float, u_fault: np.ndarray, u_pauli: np.ndarray) -> np.ndarray:
    """Depolarize ``states`` in place where ``u_fault < eps``."""
    if eps <= 0:
        return states
    hit = u_fault < eps
    if not hit.any():
        return states
    k = len(targets)
    count = 4**k - 1
    choice = 1 + np.minimum((u_pauli * count).astype(np.int64), count - 1)
    for p in np.unique(choice[hit]):
        rows = np.flatnonzero(hit & (choice == p))
        states[rows] = _apply(states[rows], _pauli_matrix(int(p), k), targets)
    return states


def apply_gate(state: StateVector, gate: Gate, noise: NoiseModel = NOISELESS, seed: int = 0) -> StateVector:
    """Apply one gate, then a depolarizing fault with probability ``epsilon``."""
    n = state.qubit_count
    if any(not 0 <= t < n for t in gate.targets):
        raise DomainError(f"targets {gate.targets} out of range for {n} qubits")
    batch = state.amplitudes.reshape((1,) + (2,) * n).copy()
    batch = _apply(batch, gate.matrix, gate.targets)
    u = rng.generator(seed, rng.NOISE).random(2)
    batch = _fault(batch, gate.targets, noise.epsilon, u[:1], u[1:])
    return StateVector(batch.ravel())


# ---------------------------------------------------------------------------
# the Mermin-Peres square


GRID = (("IZ", "ZI", "ZZ"), ("XI", "IX", "XX"), ("-XZ", "-ZX", "YY"))

_MUL = {  # single-qubit Pauli products: (P, Q) -> (power of i, R)
    ("X", "Y"): (1, "Z"), ("Y", "Z"): (1, "X"), ("Z", "X"): (1, "Y"),
    ("Y", "X"): (3, "Z"), ("Z", "Y"): (3, "X"), ("X", "Z"): (3, "Y"),
}


def _split(label: str) -> tuple[int, str]:
    return (2, label[1:]) if label.startswith("-") else (0, label)


def pauli_product(*labels: str) -> tuple[int, str]:
    """Product of signed Pauli strings as ``(power of i, string)``."""
    power, acc = 0, None
    for label in labels:
        p, s = _split(label)
        power += p
        if acc is None:
            acc = s
            continue
        out = []
        for a, b in zip(acc, s):
            if a == "I" or b == "I":
                out.append(b if a == "I" else a)
            elif a == b:
                out.append("I")
            else:
                dp, r = _MUL[(a, b)]
                power += dp
                out.append(r)
        acc = "".join(out)
    return power % 4, acc


def check_grid(grid=GRID) -> None:
    """Rows must multiply to +I and columns to -I; raises otherwise."""
    for r, row in enumerate(grid):
        if pauli_product(*row) != (0, "II"):
            raise DomainError(f"row {r} of the observable grid does not multiply to +I")
    for c in range(3):
        if pauli_product(*(grid[r][c] for r in range(3))) != (2, "II"):
            raise DomainError(f"column {c} of the observable grid does not multiply to -I")


def _operator(label: str) -> np.ndarray:
    sign, s = _split(label)
    return (-1 if sign else 1) * np.kron(PAULI[s[0]], PAULI[s[1]])


# basis changes on a prover's two local qubits
ALICE_BASIS = {
    0: (),
    1: (Gate("H", (0,)), Gate("H", (1,))),
    2: (Gate("CZ", (0, 1)), Gate("H", (0,)), Gate("H", (1,))),
}
BOB_BASIS = {
    0: (Gate("H", (0,)),),
    1: (Gate("H", (1,)),),
    2: (Gate("CNOT", (0, 1)), Gate("H", (0,))),
}
ALICE_QUBITS = (0, 2)
BOB_QUBITS = (1, 3)


def _readout(circuit: tuple[Gate, ...], observable: str) -> tuple[int, int]:
    """``(qubit, flip)`` such that the observable's bit is ``m[qubit] ^ flip``.

    Found by matching ``U^dag Z_k U`` against the signed observable.
    """
    u = np.eye(4, dtype=complex)
    for g in circuit:
        full = g.matrix if len(g.targets) == 2 else (
            np.kron(g.matrix, PAULI["I"]) if g.targets == (0,) else np.kron(PAULI["I"], g.matrix)
        )
        if len(g.targets) == 2 and g.targets == (1, 0):
            swap = GATES_2Q["SWAP"]
            full = swap @ g.matrix @ swap
        u = full @ u
    target = _operator(observable)
    for k, z in enumerate((np.kron(PAULI["Z"], PAULI["I"]), np.kron(PAULI["I"], PAULI["Z"]))):
        conj = u.conj().T @ z @ u
        for flip, sign in ((0, 1), (1, -1)):
            if np.allclose(conj, sign * target, atol=1e-12):
                return k, flip
    raise AssertionError(f"basis circuit does not diagonalise {observable}")


@functools.lru_cache(maxsize=1)
def readout_tables() -> tuple[dict, dict]:
    check_grid()
    alice = {x: tuple(_readout(ALICE_BASIS[x], GRID[x][j]) for j in range(2)) for x in range(3)}
    bob = {y: tuple(_readout(BOB_BASIS[y], GRID[i][y]) for i in range(2)) for y in range(3)}
    return alice, bob


readout_tables()

# ---------------------------------------------------------------------------
# per-game schedule and uniform slots

ROW_WIDTH = 32
PREP_GATES = (Gate("H", (0,)), Gate("CNOT", (0, 1)), Gate("H", (2,)), Gate("CNOT", (2, 3)))
SLOT_PREP = 0  # four gates
SLOT_SWAP = 4  # four swap gates: x bit 0, x bit 1, y bit 0, y bit 1
SLOT_ALICE = 8  # up to three gates
SLOT_BOB = 11  # up to two gates
MEASURE_COLUMN = 26


def game_uniforms(seed: int, lo: int, hi: int) -> np.ndarray:
    """Uniform rows for games ``lo..hi-1``."""
    return rng.uniform_rows(seed, (rng.NOISE,), lo, hi, ROW_WIDTH)


def _slot(u: np.ndarray, slot: int) -> tuple[np.ndarray, np.ndarray]:
    return u[:, 2 * slot], u[:, 2 * slot + 1]


def bell_pairs(batch: int = 1) -> np.ndarray:
    state = np.zeros((batch, 16), dtype=complex)
    state[:, [0b0000, 0b0011, 0b1100, 0b1111]] = 0.5
    return state.reshape((batch,) + (2,) * 4)


def _prepare(u: np.ndarray, noise: NoiseModel) -> np.ndarray:
    if not noise.noisy_resource_prep or noise.epsilon == 0:
        return bell_pairs(len(u))
    states = np.zeros((len(u), 16), dtype=complex)
    states[:, 0] = 1
    states = states.reshape((len(u),) + (2,) * 4)
    for i, gate in enumerate(PREP_GATES):
        states = _apply(states, gate.matrix, gate.targets)
        states = _fault(states, gate.targets, noise.epsilon, *_slot(u, SLOT_PREP + i))
    return states


def prepare_resource(n: int, noise: NoiseModel = NOISELESS, seed: int = 0) -> list[StateVector]:
    """``n`` copies of two Bell pairs, optionally through a noisy preparation circuit."""
    if n < 1:
        raise DomainError("n must be at least 1")
    states = _prepare(game_uniforms(seed, 0, n), noise)
    return [StateVector(s.ravel()) for s in states]


def _measure_group(states: np.ndarray, x: int, y: int, u: np.ndarray, noise: NoiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Run the row/column measurements on a batch sharing ``(x, y)``."""
    alice_read, bob_read = readout_tables()
    eps = noise.epsilon
    for i, gate in enumerate(ALICE_BASIS[x]):
        targets = tuple(ALICE_QUBITS[t] for t in gate.targets)
        states = _apply(states, gate.matrix, targets)
        states = _fault(states, targets, eps, *_slot(u, SLOT_ALICE + i))
    for i, gate in enumerate(BOB_BASIS[y]):
        targets = tuple(BOB_QUBITS[t] for t in gate.targets)
        states = _apply(states, gate.matrix, targets)
        states = _fault(states, targets, eps, *_slot(u, SLOT_BOB + i))
    probs = np.abs(states.reshape(len(states), 16)) ** 2
    cumulative = np.cumsum(probs, axis=1)
    draw = u[:, MEASURE_COLUMN] * cumulative[:, -1]
    outcome = np.minimum((cumulative <= draw[:, None]).sum(axis=1), 15)
    bits = (outcome[:, None] >> (3 - np.arange(4))[None, :]) & 1
    a = np.zeros((len(states), 3), dtype=np.int64)
    b = np.zeros((len(states), 3), dtype=np.int64)
    for j, (k, flip) in enumerate(alice_read[x]):
        a[:, j] = bits[:, ALICE_QUBITS[k]] ^ flip
    for i, (k, flip) in enumerate(bob_read[y]):
        b[:, i] = bits[:, BOB_QUBITS[k]] ^ flip
    a[:, 2] = a[:, 0] ^ a[:, 1]
    b[:, 2] = 1 ^ b[:, 0] ^ b[:, 1]
    return a, b


def _labels(rows: np.ndarray) -> list[str]:
    return ["".join(map(str, r)) for r in rows.tolist()]


def simulate_games(xs, ys, noise: NoiseModel, uniforms: np.ndarray, states: np.ndarray | None = None) -> tuple[list[str], list[str]]:
    """Core batched run.  ``uniforms`` has one row per game."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    if states is None:
        states = _prepare(uniforms, noise)
    a = np.zeros((len(xs), 3), dtype=np.int64)
    b = np.zeros((len(xs), 3), dtype=np.int64)
    for x, y in itertools.product(range(3), repeat=2):
        rows = np.flatnonzero((xs == x) & (ys == y))
        if len(rows):
            a[rows], b[rows] = _measure_group(states[rows].copy(), x, y, uniforms[rows], noise)
    return _labels(a), _labels(b)


def _check_trit(v, name: str) -> int:
    if not (isinstance(v, (int, np.integer)) and 0 <= v <= 2):
        raise DomainError(f"{name}={v!r} is not a trit")
    return int(v)


def measure_magic_square(state: StateVector, x: int, y: int, noise: NoiseModel = NOISELESS, seed: int = 0) -> tuple[str, str]:
    """Alice measures row ``x``, Bob column ``y``; returns their 3-bit answers."""
    x, y = _check_trit(x, "x"), _check_trit(y, "y")
    if state.qubit_count != 4:
        raise DomainError("the Magic Square strategy needs a 4-qubit resource state")
    u = game_uniforms(seed, 0, 1)
    batch = state.amplitudes.reshape((1,) + (2,) * 4).copy()
    a, b = _measure_group(batch, x, y, u, noise)
    return _labels(a)[0], _labels(b)[0]


def run_parmagic(inputs: LineInput, noise: NoiseModel = NOISELESS, seed: int = 0, workers: int = 1, chunk: int = 4096) -> tuple[list[str], list[str]]:
    """Play every game of ``inputs`` with the honest quantum strategy.

    Game ``i`` uses row ``i`` of the uniform table for ``seed``, so the output
    is the same for any ``workers``/``chunk`` split.
    """
    for v in inputs.xs + inputs.ys:
        _check_trit(v, "input")
    n = inputs.n
    spans = [(lo, min(n, lo + chunk)) for lo in range(0, n, chunk)]

    def run(span):
        lo, hi = span
        return simulate_games(inputs.xs[lo:hi], inputs.ys[lo:hi], noise, game_uniforms(seed, lo, hi))

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    a_list = [a for part in parts for a in part[0]]
    b_list = [b for part in parts for b in part[1]]
    return a_list, b_list


SHOT_COLUMNS = ("game_index", "x", "y", "a", "b", "satisfied")


def write_shots_csv(fh, inputs: LineInput, answers, game: GameSpec | None = None) -> None:
    """One row per game: ``game_index, x, y, a, b, satisfied``."""
    game = game or magic_square()
    mask = satisfied_mask(game, inputs, answers, strict=False)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SHOT_COLUMNS)
    for i, (x, y, a, b, ok) in enumerate(zip(inputs.xs, inputs.ys, answers[0], answers[1], mask)):
        writer.writerow((i, x, y, a, b, int(ok)))
