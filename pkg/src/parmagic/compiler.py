"""Two-party protocols compiled from geometrically-local Toffoli circuits.

The wires are split by a vertical line through axis 0: wires left of it start
in ``U`` (Alice, the x side), the rest in ``D`` (Bob, the y side).  Layer by
layer a gate is classified by where its wires live:

* ``Gu``: all wires in ``U``; Alice applies it.
* ``Gd``: all wires in ``D``; Bob applies it.
* ``Ga``: mixed; Bob sends Alice the ``D``-side wire values, Alice applies
  the gate, and all of its wires belong to ``U`` from then on.

All three wires of a Toffoli gate stay live; untouched wires keep their side.
Constant supplies and shared randomness are known to both parties and cost
nothing.  Only Bob ever speaks.
"""

from __future__ import annotations

import csv
import math
import multiprocessing
import socket
import struct
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import rng
from .circuit import (
    TOFFOLI,
    LayeredCircuit,
    brickwork_circuit,
    cut_pairs,
    evaluate,
    random_circuit,
    validate_geometry,
)
from .errors import DomainError

ALICE = 0
BOB = 1
SENDER_NAMES = {ALICE: "alice", BOB: "bob"}
FRAME_HEADER = struct.Struct(">HBH")


@dataclass(frozen=True)
class CutPartition:
    """``in_u[i][w]`` is true when wire ``w`` belongs to ``U`` at the start of layer ``i``.

    There are ``depth + 1`` rows; the last one describes the final wires.
    """

    in_u: tuple[tuple[bool, ...], ...]

    def upper(self, layer: int) -> frozenset[int]:
        return frozenset(w for w, up in enumerate(self.in_u[layer]) if up)

    def lower(self, layer: int) -> frozenset[int]:
        return frozenset(w for w, up in enumerate(self.in_u[layer]) if not up)


@dataclass(frozen=True)
class LayerClassification:
    gu: tuple[int, ...]
    gd: tuple[int, ...]
    ga: tuple[int, ...]


@dataclass(frozen=True)
class Message:
    layer: int
    sender: int
    bits: tuple[int, ...]


@dataclass(frozen=True)
class Transcript:
    messages: tuple[Message, ...] = ()

    @property
    def total_bits(self) -> int:
        return sum(len(m.bits) for m in self.messages)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("layer", "sender", "bits"))
        for m in self.messages:
            writer.writerow((m.layer, SENDER_NAMES[m.sender], "".join(map(str, m.bits))))


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    circuit: LayeredCircuit
    split: int
    cut: CutPartition
    layers: tuple[LayerClassification, ...]
    predicted_bits: tuple[int, ...]

    @property
    def predicted_total(self) -> int:
        return sum(self.predicted_bits)

    @property
    def alice_inputs(self) -> tuple[int, ...]:
        first = self.cut.in_u[0]
        return tuple(w for w in self.circuit.input_wires if first[w])

    @property
    def bob_inputs(self) -> tuple[int, ...]:
        first = self.cut.in_u[0]
        return tuple(w for w in self.circuit.input_wires if not first[w])


def default_split(circuit: LayeredCircuit) -> int:
    """Midpoint of the axis-0 extent: wires with ``coord < split`` start in ``U``."""
    if not circuit.positions:
        return 0
    xs = [p[0] for p in circuit.positions]
    return (min(xs) + max(xs) + 1) // 2


def _require_toffoli(circuit: LayeredCircuit) -> None:
    if circuit.kinds - {TOFFOLI}:
        raise DomainError("the cut is defined for Toffoli circuits; run nand_to_toffoli first")
    problems = validate_geometry(circuit)
    if problems:
        raise DomainError(f"invalid circuit: {problems[0].rule}: {problems[0].detail}")


def horizontal_cut(circuit: LayeredCircuit, split: int | None = None) -> CutPartition:
    """Propagate the initial x/y split through every layer."""
    _require_toffoli(circuit)
    split = default_split(circuit) if split is None else split
    in_u = np.array([p[0] < split for p in circuit.positions], dtype=bool)
    rows = [tuple(bool(v) for v in in_u)]
    for layer in circuit.layers:
        for gate in layer:
            wires = list(gate.wires)
            if in_u[wires].any():
                in_u[wires] = True
        rows.append(tuple(bool(v) for v in in_u))
    return CutPartition(tuple(rows))


def classify(circuit: LayeredCircuit, cut: CutPartition) -> tuple[LayerClassification, ...]:
    out = []
    for i, layer in enumerate(circuit.layers):
        side = cut.in_u[i]
        gu, gd, ga = [], [], []
        for gi, gate in enumerate(layer):
            flags = [side[w] for w in gate.wires]
            (gu if all(flags) else gd if not any(flags) else ga).append(gi)
        out.append(LayerClassification(tuple(gu), tuple(gd), tuple(ga)))
    return tuple(out)


def check_partition(circuit: LayeredCircuit, cut: CutPartition, split: int | None = None) -> list[str]:
    """Rule violations of ``cut`` as readable strings; empty when all rules hold."""
    split = default_split(circuit) if split is None else split
    problems = []
    if len(cut.in_u) != circuit.depth + 1:
        return [f"expected {circuit.depth + 1} layers, got {len(cut.in_u)}"]
    if any(len(row) != circuit.width for row in cut.in_u):
        return ["a layer does not cover every wire"]
    for w, p in enumerate(circuit.positions):
        if cut.in_u[0][w] != (p[0] < split):
            problems.append(f"rule 1: wire {w} starts on the wrong side")
    for i, layer in enumerate(circuit.layers):
        before, after = cut.in_u[i], cut.in_u[i + 1]
        touched = set()
        for gate in layer:
            flags = {before[w] for w in gate.wires}
            want = True if True in flags else False
            touched.update(gate.wires)
            for w in gate.wires:
                if after[w] != want:
                    problems.append(f"layer {i}: output wire {w} of {gate.wires} on wrong side")
        for w in range(circuit.width):
            if w not in touched and after[w] != before[w]:
                problems.append(f"layer {i}: idle wire {w} changed side")
    return problems


def compile_protocol(circuit: LayeredCircuit, split: int | None = None) -> ProtocolSpec:
    split = default_split(circuit) if split is None else split
    cut = horizontal_cut(circuit, split)
    layers = classify(circuit, cut)
    cost = []
    for i, cls in enumerate(layers):
        side = cut.in_u[i]
        gates = circuit.layers[i]
        cost.append(sum(1 for gi in cls.ga for w in gates[gi].wires if not side[w]))
    return ProtocolSpec(circuit, split, cut, layers, tuple(cost))


# ---------------------------------------------------------------------------
# parties


class _Party:
    """One side's view: values it owns and the gates it runs."""

    def __init__(self, spec: ProtocolSpec, role: int, inputs: Sequence[int], randomness: Sequence[int]):
        circuit = spec.circuit
        self.spec = spec
        self.role = role
        self.values = np.zeros(circuit.width, dtype=bool)
        own = spec.alice_inputs if role == ALICE else spec.bob_inputs
        if len(inputs) != len(own):
            raise DomainError(f"{SENDER_NAMES[role]} expects {len(own)} input bits, got {len(inputs)}")
        if len(randomness) != len(circuit.randomness_wires):
            raise DomainError(f"expected {len(circuit.randomness_wires)} randomness bits, got {len(randomness)}")
        self.values[list(own)] = np.asarray(inputs, dtype=bool)
        self.values[list(circuit.randomness_wires)] = np.asarray(randomness, dtype=bool)
        self.supplies: dict[int, list] = {}
        for layer, w, bit in circuit.constants:
            self.supplies.setdefault(layer, []).append((w, bit))

    def owns(self, layer: int) -> np.ndarray:
        row = np.array(self.spec.cut.in_u[layer], dtype=bool)
        return row if self.role == ALICE else ~row

    def start_layer(self, i: int) -> None:
        for w, bit in self.supplies.get(i, ()):
            self.values[w] = bool(bit)

    def outgoing(self, i: int) -> tuple[int, ...]:
        side = self.spec.cut.in_u[i]
        gates = self.spec.circuit.layers[i]
        return tuple(
            int(self.values[w]) for gi in self.spec.layers[i].ga for w in gates[gi].wires if not side[w]
        )

    def incoming(self, i: int, bits: Sequence[int]) -> None:
        side = self.spec.cut.in_u[i]
        gates = self.spec.circuit.layers[i]
        wires = [w for gi in self.spec.layers[i].ga for w in gates[gi].wires if not side[w]]
        if len(wires) != len(bits):
            raise DomainError(f"layer {i}: expected {len(wires)} bits, got {len(bits)}")
        self.values[wires] = np.asarray(bits, dtype=bool)

    def compute(self, i: int) -> None:
        cls = self.spec.layers[i]
        mine = cls.gu + cls.ga if self.role == ALICE else cls.gd
        gates = self.spec.circuit.layers[i]
        for gi in mine:
            a, b, c = gates[gi].wires
            self.values[c] ^= self.values[a] & self.values[b]

    def final(self) -> dict[int, int]:
        mask = self.owns(self.spec.circuit.depth)
        return {int(w): int(self.values[w]) for w in np.flatnonzero(mask)}


def _merge(width: int, alice: dict, bob: dict) -> tuple[int, ...]:
    both = {**bob, **alice}
    return tuple(both[w] for w in range(width))


def execute_protocol(
    spec: ProtocolSpec,
    x: Sequence[int],
    y: Sequence[int],
    randomness: Sequence[int] = (),
    two_process: bool = False,
) -> tuple[tuple[int, ...], Transcript]:
    """Run the protocol; returns every wire's final value and the transcript.

    ``x`` feeds Alice's input wires and ``y`` Bob's, each in wire order.
    """
    if two_process:
        return _execute_two_process(spec, x, y, randomness)
    alice = _Party(spec, ALICE, x, randomness)
    bob = _Party(spec, BOB, y, randomness)
    messages = []
    for i in range(spec.circuit.depth):
        alice.start_layer(i)
        bob.start_layer(i)
        if spec.predicted_bits[i]:
            bits = bob.outgoing(i)
            messages.append(Message(i, BOB, bits))
            alice.incoming(i, bits)
        alice.compute(i)
        bob.compute(i)
    return _merge(spec.circuit.width, alice.final(), bob.final()), Transcript(tuple(messages))


def reference_output(spec: ProtocolSpec, x, y, randomness=()) -> tuple[int, ...]:
    """What direct evaluation gives for the same split of inputs."""
    order = spec.alice_inputs + spec.bob_inputs
    by_wire = dict(zip(order, list(x) + list(y)))
    if len(by_wire) != len(spec.circuit.input_wires) or len(x) + len(y) != len(order):
        raise DomainError("input lengths do not match the circuit")
    return evaluate(spec.circuit, [by_wire[w] for w in spec.circuit.input_wires], randomness)


# ---------------------------------------------------------------------------
# framing and the two-process runner


def encode_frame(layer: int, sender: int, bits: Sequence[int]) -> bytes:
    if not 0 <= layer < 1 << 16 or len(bits) >= 1 << 16:
        raise DomainError("frame fields out of range")
    payload = np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes() if len(bits) else b""
    return FRAME_HEADER.pack(layer, sender, len(bits)) + payload


def _read_exact(sock: socket.socket, size: int) -> bytes:
    chunks = []
    while size:
        chunk = sock.recv(size)
        if not chunk:
            raise ConnectionError("peer closed the stream mid-frame")
        chunks.append(chunk)
        size -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Message:
    layer, sender, length = FRAME_HEADER.unpack(_read_exact(sock, FRAME_HEADER.size))
    raw = _read_exact(sock, math.ceil(length / 8))
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:length]
    return Message(layer, sender, tuple(int(b) for b in bits))


def decode_frame(data: bytes) -> Message:
    layer, sender, length = FRAME_HEADER.unpack_from(data)
    raw = data[FRAME_HEADER.size : FRAME_HEADER.size + math.ceil(length / 8)]
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:length]
    return Message(layer, sender, tuple(int(b) for b in bits))


def _bob_process(circuit_json: str, split: int, y, randomness, sock, results) -> None:
    spec = compile_protocol(LayeredCircuit.loads(circuit_json), split)
    bob = _Party(spec, BOB, y, randomness)
    for i in range(spec.circuit.depth):
        bob.start_layer(i)
        if spec.predicted_bits[i]:
            sock.sendall(encode_frame(i, BOB, bob.outgoing(i)))
        bob.compute(i)
    sock.close()
    results.send(bob.final())
    results.close()


def _execute_two_process(spec: ProtocolSpec, x, y, randomness):
    alice = _Party(spec, ALICE, x, randomness)
    _Party(spec, BOB, y, randomness)  # validate lengths before forking
    methods = multiprocessing.get_all_start_methods()
    ctx = multiprocessing.get_context("fork" if "fork" in methods else "spawn")
    ours, theirs = socket.socketpair()
    recv_end, send_end = ctx.Pipe(duplex=False)
    proc = ctx.Process(
        target=_bob_process,
        args=(spec.circuit.dumps(), spec.split, list(map(int, y)), list(map(int, randomness)), theirs, send_end),
    )
    proc.start()
    theirs.close()
    send_end.close()
    messages = []
    try:
        for i in range(spec.circuit.depth):
            alice.start_layer(i)
            if spec.predicted_bits[i]:
                msg = read_frame(ours)
                if msg.layer != i or msg.sender != BOB:
                    raise DomainError(f"unexpected frame {msg.layer}/{msg.sender} at layer {i}")
                messages.append(msg)
                alice.incoming(i, msg.bits)
            alice.compute(i)
        bob_final = recv_end.recv()
    finally:
        ours.close()
        proc.join()
    return _merge(spec.circuit.width, alice.final(), bob_final), Transcript(tuple(messages))


# ---------------------------------------------------------------------------
# scaling experiment

SCALING_COLUMNS = ("dimension", "n", "depth", "family", "total_bits", "max_crossing_gates", "cut_pairs", "bound", "within_bound")


def comm_scaling_experiment(
    dimension: int,
    n_values: Sequence[int],
    d_values: Sequence[int],
    seed: int = 0,
    family: str = "brickwork",
    density: float = 0.75,
    two_process: bool = False,
) -> list[dict]:
    """Measured communication per ``(n, d)`` against ``2 d n^((D-1)/D)``.

    ``family`` picks the circuit generator: ``brickwork`` (rows along axis 0,
    crossing count provably at most one per row per layer) or ``random``
    (arbitrary connected triples).  Each cell runs one circuit on one seeded
    input; the cost does not depend on the input values.  ``two_process``
    runs every cell with Alice and Bob in separate processes.
    """
    if dimension < 1 or any(v < 1 for v in n_values) or any(v < 1 for v in d_values):
        raise DomainError("sweep values must be positive")
    rows = []
    for n in n_values:
        for d in d_values:
            cell_seed = rng.derive_seed(seed, dimension, n, d)
            if family == "brickwork":
                circuit = brickwork_circuit(n, d, dimension, seed=seed, density=density)
            elif family == "random":
                circuit = random_circuit(n, d, dimension, TOFFOLI, seed=cell_seed, density=density)
            else:
                raise DomainError(f"unknown circuit family {family!r}")
            spec = compile_protocol(circuit)
            gen = rng.generator(cell_seed, rng.INPUTS)
            x = gen.integers(0, 2, len(spec.alice_inputs))
            y = gen.integers(0, 2, len(spec.bob_inputs))
            _, transcript = execute_protocol(spec, x, y, two_process=two_process)
            if transcript.total_bits != spec.predicted_total:
                raise AssertionError("metered cost differs from compile-time prediction")
            pairs = cut_pairs(n, dimension)
            bound = 2 * d * pairs
            rows.append(
                {
                    "dimension": dimension,
                    "n": n,
                    "depth": d,
                    "family": family,
                    "total_bits": transcript.total_bits,
                    "max_crossing_gates": max((len(c.ga) for c in spec.layers), default=0),
                    "cut_pairs": pairs,
                    "bound": bound,
                    "within_bound": int(transcript.total_bits <= bound),
                }
            )
    return rows


def write_rows_csv(fh, rows: list[dict], columns: Sequence[str]) -> None:
    writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
