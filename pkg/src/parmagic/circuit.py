"""Geometrically-local layered classical circuits.

Wires sit at integer grid points.  Two positions are neighbours when their
Manhattan distance is at most ``radius``; a gate is local when its wires form a
connected set under that relation (for two wires this is plain adjacency).

Gate semantics, applied synchronously per layer:

* ``nand`` on ``(t, s)`` writes ``not (t and s)`` into ``t``.  Several gates
  may read a wire, but each wire is written at most once per layer.
* ``toffoli`` on ``(a, b, c)`` maps ``c`` to ``c xor (a and b)``.  Gates of one
  layer touch disjoint wires.

A circuit may also carry constant supplies ``(layer, wire, bit)``: the wire is
set to ``bit`` at the start of that layer.  Wires supplied at layer 0 are
ancillas rather than inputs.  Untouched wires keep their value.
"""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError

NAND = "nand"
TOFFOLI = "toffoli"
ARITY = {NAND: 2, TOFFOLI: 3}


@dataclass(frozen=True)
class CircuitGate:
    kind: str
    wires: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str
    layer: int | None = None
    gate: int | None = None


@dataclass(frozen=True, eq=False)
class LayeredCircuit:
    dimension: int
    positions: tuple[tuple[int, ...], ...]
    layers: tuple[tuple[CircuitGate, ...], ...]
    randomness_wires: tuple[int, ...] = ()
    constants: tuple[tuple[int, int, int], ...] = ()
    radius: int = 1
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(tuple(int(c) for c in p) for p in self.positions))
        object.__setattr__(self, "layers", tuple(tuple(layer) for layer in self.layers))
        object.__setattr__(self, "randomness_wires", tuple(int(w) for w in self.randomness_wires))
        object.__setattr__(self, "constants", tuple(tuple(int(v) for v in c) for c in self.constants))

    def __eq__(self, other):
        if not isinstance(other, LayeredCircuit):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        if "hash" not in self._cache:
            self._cache["hash"] = hash(self.dumps())
        return self._cache["hash"]

    @property
    def width(self) -> int:
        return len(self.positions)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def kinds(self) -> set[str]:
        return {g.kind for layer in self.layers for g in layer}

    @property
    def ancilla_wires(self) -> tuple[int, ...]:
        return tuple(sorted({w for layer, w, _ in self.constants if layer == 0}))

    @property
    def input_wires(self) -> tuple[int, ...]:
        skip = set(self.randomness_wires) | set(self.ancilla_wires)
        return tuple(w for w in range(self.width) if w not in skip)

    def to_dict(self) -> dict:
        out = {
            "dimension": self.dimension,
            "wires": [list(p) for p in self.positions],
            "layers": [[{"kind": g.kind, "wires": list(g.wires)} for g in layer] for layer in self.layers],
            "randomness_wires": list(self.randomness_wires),
        }
        if self.constants:
            out["constants"] = [list(c) for c in self.constants]
        if self.radius != 1:
            out["radius"] = self.radius
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LayeredCircuit":
        try:
            return cls(
                dimension=int(data["dimension"]),
                positions=[tuple(p) for p in data["wires"]],
                layers=[[CircuitGate(g["kind"], g["wires"]) for g in layer] for layer in data["layers"]],
                randomness_wires=data.get("randomness_wires", []),
                constants=[tuple(c) for c in data.get("constants", [])],
                radius=int(data.get("radius", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed circuit description: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "LayeredCircuit":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"circuit file is not valid JSON: {exc}") from None
        return cls.from_dict(data)


def load_circuit(path: str) -> LayeredCircuit:
    with open(path, encoding="utf-8") as fh:
        return LayeredCircuit.loads(fh.read())


# ---------------------------------------------------------------------------
# geometry


def manhattan(p: Sequence[int], q: Sequence[int]) -> int:
    return sum(abs(a - b) for a, b in zip(p, q))


def neighbourhood_size(dimension: int, radius: int) -> int:
    """Grid points within Manhattan distance ``radius`` of a point, itself included."""
    return sum(
        1
        for off in itertools.product(range(-radius, radius + 1), repeat=dimension)
        if sum(map(abs, off)) <= radius
    )


def is_connected(points: Sequence[Sequence[int]], radius: int) -> bool:
    points = list(points)
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in range(len(points)):
            if j not in seen and manhattan(points[i], points[j]) <= radius:
                seen.add(j)
                frontier.append(j)
    return len(seen) == len(points)


def validate_geometry(circuit: LayeredCircuit) -> list[Violation]:
    """Every locality, arity, fan-out and layering problem, as data.

    An empty list means the circuit is geometrically local and well formed.
    """
    out: list[Violation] = []
    width = circuit.width
    if circuit.dimension < 1:
        out.append(Violation("dimension", f"dimension must be positive, got {circuit.dimension}"))
    if circuit.radius < 1:
        out.append(Violation("radius", f"radius must be positive, got {circuit.radius}"))
    for w, p in enumerate(circuit.positions):
        if len(p) != circuit.dimension:
            out.append(Violation("position", f"wire {w} has {len(p)} coordinates"))
    if len(set(circuit.positions)) != width:
        out.append(Violation("position", "two wires share a grid point"))
    for w in circuit.randomness_wires:
        if not 0 <= w < width:
            out.append(Violation("range", f"randomness wire {w} does not exist"))
    if len(set(circuit.randomness_wires)) != len(circuit.randomness_wires):
        out.append(Violation("range", "randomness wires repeat"))
    for layer, w, bit in circuit.constants:
        if not 0 <= layer < max(1, circuit.depth) or not 0 <= w < width or bit not in (0, 1):
            out.append(Violation("constant", f"bad constant supply {(layer, w, bit)}"))
        elif layer == 0 and w in circuit.randomness_wires:
            out.append(Violation("constant", f"wire {w} is both randomness and ancilla"))
    if len(circuit.kinds) > 1:
        out.append(Violation("kind", "circuit mixes NAND and Toffoli gates"))
    fan_out_cap = neighbourhood_size(circuit.dimension, circuit.radius)
    for li, layer in enumerate(circuit.layers):
        written: dict[int, int] = {}
        touched: dict[int, int] = {}
        readers: dict[int, int] = {}
        for gi, gate in enumerate(layer):
            arity = ARITY.get(gate.kind)
            if arity is None:
                out.append(Violation("kind", f"unknown gate kind {gate.kind!r}", li, gi))
                continue
            if len(gate.wires) != arity:
                out.append(Violation("fan-in", f"{gate.kind} needs {arity} wires, got {len(gate.wires)}", li, gi))
                continue
            if any(not 0 <= w < width for w in gate.wires):
                out.append(Violation("range", f"wires {gate.wires} out of range", li, gi))
                continue
            if len(set(gate.wires)) != arity:
                out.append(Violation("fan-in", f"repeated wire in {gate.wires}", li, gi))
                continue
            pts = [circuit.positions[w] for w in gate.wires]
            if not is_connected(pts, circuit.radius):
                out.append(Violation("adjacency", f"wires {gate.wires} at {pts} are not local", li, gi))
            if gate.kind == NAND:
                target = gate.wires[0]
                if target in written:
                    out.append(Violation("layering", f"wire {target} written twice", li, gi))
                written[target] = gi
                for w in gate.wires:
                    readers[w] = readers.get(w, 0) + 1
            else:
                for w in gate.wires:
                    if w in touched:
                        out.append(Violation("layering", f"wire {w} shared with gate {touched[w]}", li, gi))
                    touched[w] = gi
        for w, count in readers.items():
            if count > fan_out_cap:
                out.append(Violation("fan-out", f"wire {w} feeds {count} gates (cap {fan_out_cap})", li))
    return out


def _require_valid(circuit: LayeredCircuit) -> None:
    problems = validate_geometry(circuit)
    if problems:
        raise DomainError(f"invalid circuit: {problems[0].rule}: {problems[0].detail}")


# ---------------------------------------------------------------------------
# evaluation


def _plan(circuit: LayeredCircuit):
    if "plan" in circuit._cache:
        return circuit._cache["plan"]
    plan = []
    supplies: dict[int, list] = {}
    for layer, w, bit in circuit.constants:
        supplies.setdefault(layer, []).append((w, bit))
    for li, layer in enumerate(circuit.layers):
        const = supplies.get(li, [])
        cw = np.array([w for w, _ in const], dtype=np.int64)
        cb = np.array([b for _, b in const], dtype=bool)
        nand = [g.wires for g in layer if g.kind == NAND]
        toff = [g.wires for g in layer if g.kind == TOFFOLI]
        plan.append(
            (
                cw,
                cb,
                np.array(nand, dtype=np.int64).reshape(-1, 2),
                np.array(toff, dtype=np.int64).reshape(-1, 3),
            )
        )
    circuit._cache["plan"] = plan
    return plan


def _initial_values(circuit: LayeredCircuit, inputs: np.ndarray, randomness: np.ndarray) -> np.ndarray:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=bool))
    randomness = np.asarray(randomness, dtype=bool)
    if randomness.ndim == 1:
        randomness = np.broadcast_to(randomness, (len(inputs), len(randomness)))
    n_in, n_r = len(circuit.input_wires), len(circuit.randomness_wires)
    if inputs.shape[1] != n_in:
        raise DomainError(f"expected {n_in} input bits, got {inputs.shape[1]}")
    if randomness.shape[1] != n_r:
        raise DomainError(f"expected {n_r} randomness bits, got {randomness.shape[1]}")
    values = np.zeros((circuit.width, len(inputs)), dtype=bool)
    values[list(circuit.input_wires)] = inputs.T
    values[list(circuit.randomness_wires)] = randomness.T
    return values


def run_layer(values: np.ndarray, step) -> np.ndarray:
    """Advance wire values of shape ``(width, batch)`` by one planned layer."""
    cw, cb, nand, toff = step
    if len(cw):
        values[cw] = cb[:, None]
    if len(nand):
        fresh = ~(values[nand[:, 0]] & values[nand[:, 1]])
        values[nand[:, 0]] = fresh
    if len(toff):
        values[toff[:, 2]] ^= values[toff[:, 0]] & values[toff[:, 1]]
    return values


def evaluate_batch(circuit: LayeredCircuit, inputs, randomness=()) -> np.ndarray:
    """Evaluate many input rows at once; returns final wire values ``(batch, width)``."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=bool))
    if inputs.size == 0:
        inputs = inputs.reshape(max(1, len(inputs)), 0)
    randomness = np.asarray(randomness, dtype=bool)
    if randomness.size == 0:
        randomness = np.zeros((len(inputs), 0), dtype=bool)
    values = _initial_values(circuit, inputs, randomness)
    for step in _plan(circuit):
        values = run_layer(values, step)
    return values.T.astype(np.uint8)


def evaluate(circuit: LayeredCircuit, inputs: Sequence[int], randomness: Sequence[int] = ()) -> tuple[int, ...]:
    """Final value of every wire, in wire order."""
    inputs = np.asarray(inputs, dtype=bool).reshape(1, -1)
    randomness = np.asarray(randomness, dtype=bool).reshape(1, -1)
    return tuple(int(v) for v in evaluate_batch(circuit, inputs, randomness)[0])


# ---------------------------------------------------------------------------
# NAND -> Toffoli

SUBLAYERS_PER_LAYER = 4


def nand_to_toffoli(circuit: LayeredCircuit) -> LayeredCircuit:
    """Rewrite a 1D radius-1 NAND circuit with Toffoli gates.

    Source wire at position ``p`` becomes a block ``(L, D, R)`` at positions
    ``3p, 3p+1, 3p+2``; ``D`` carries the data and keeps the source wire's
    index, the two ancillas are appended after the data wires.  Each NAND
    layer becomes four Toffoli layers:

    1. ``L=1, R=0``; ``R ^= D & L``        (copy into R)
    2. ``L=0``;      ``L ^= D & R``        (copy into L)
    3. ``D_t=1``;    ``D_t ^= R_t & L_s``  for gates reading their right neighbour
    4. ``D_t=1``;    ``D_t ^= R_s & L_t``  for gates reading their left neighbour
    """
    _require_valid(circuit)
    if circuit.dimension != 1 or circuit.radius != 1:
        raise DomainError("nand_to_toffoli needs a 1D circuit with radius 1")
    if circuit.kinds - {NAND}:
        raise DomainError("nand_to_toffoli needs a NAND circuit")
    if circuit.constants:
        raise DomainError("nand_to_toffoli does not accept constant supplies")
    w = circuit.width
    pos = [p[0] for p in circuit.positions]
    data = [(3 * p + 1,) for p in pos]
    if circuit.depth == 0:
        return LayeredCircuit(1, data, [], circuit.randomness_wires)
    left = [w + 2 * i for i in range(w)]
    right = [w + 2 * i + 1 for i in range(w)]
    positions = data + [q for p in pos for q in ((3 * p,), (3 * p + 2,))]
    layers: list[list[CircuitGate]] = []
    constants: list[tuple[int, int, int]] = []
    for layer in circuit.layers:
        base = len(layers)
        constants += [(base, left[i], 1) for i in range(w)] + [(base, right[i], 0) for i in range(w)]
        layers.append([CircuitGate(TOFFOLI, (i, left[i], right[i])) for i in range(w)])
        constants += [(base + 1, left[i], 0) for i in range(w)]
        layers.append([CircuitGate(TOFFOLI, (i, right[i], left[i])) for i in range(w)])
        reads_right = [(t, s) for t, s in (g.wires for g in layer) if pos[s] == pos[t] + 1]
        reads_left = [(t, s) for t, s in (g.wires for g in layer) if pos[s] == pos[t] - 1]
        constants += [(base + 2, t, 1) for t, _ in reads_right]
        layers.append([CircuitGate(TOFFOLI, (right[t], left[s], t)) for t, s in reads_right])
        constants += [(base + 3, t, 1) for t, _ in reads_left]
        layers.append([CircuitGate(TOFFOLI, (right[s], left[t], t)) for t, s in reads_left])
    return LayeredCircuit(1, positions, layers, circuit.randomness_wires, constants)


# ---------------------------------------------------------------------------
# layouts and random circuits


def integer_root(n: int, d: int) -> int:
    """Exact ``d``-th root of ``n``; :class:`DomainError` if ``n`` is not a power."""
    r = round(n ** (1 / d))
    for cand in (r - 1, r, r + 1):
        if cand >= 1 and cand**d == n:
            return cand
    raise DomainError(f"{n} is not a perfect {d}-th power")


def _snake(dims: Sequence[int]) -> list[tuple[int, ...]]:
    if not dims:
        return [()]
    inner = _snake(dims[1:])
    out = []
    for i in range(dims[0]):
        seq = inner if i % 2 == 0 else inner[::-1]
        out.extend((i,) + rest for rest in seq)
    return out


def line_layout(n: int) -> list[tuple[int, ...]]:
    """``x_1..x_n`` at ``0..n-1`` then ``y_1..y_n``, so ``x_n`` touches ``y_1``."""
    return [(i,) for i in range(2 * n)]


def grid_layout(n: int, dimension: int) -> list[tuple[int, ...]]:
    """``x`` cells then ``y`` cells on two mirrored hypercubes of side ``n^(1/D)``.

    Both orders are boustrophedon, so consecutive cells touch, and the first
    ``n^((D-1)/D)`` cells of each side face each other across the cut.
    """
    if dimension == 1:
        return line_layout(n)
    side = integer_root(n, dimension)
    cells = _snake([side] * dimension)
    xs = [(side - 1 - c[0],) + c[1:] for c in cells]
    ys = [(2 * side - 1 - p[0],) + p[1:] for p in xs]
    return xs + ys


def cut_pairs(n: int, dimension: int) -> int:
    """Number of ``(x_i, y_i)`` pairs adjacent across the cut: ``n^((D-1)/D)``."""
    if dimension == 1:
        return 1
    return integer_root(n, dimension) ** (dimension - 1)


@dataclass(frozen=True)
class GridInput:
    """Question pairs on a ``D``-dimensional grid (see :func:`grid_layout`)."""

    dimension: int
    xs: tuple[int, ...]
    ys: tuple[int, ...]

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise DomainError("x and y must have the same length")
        if self.dimension > 1:
            integer_root(len(self.xs), self.dimension)

    @property
    def n(self) -> int:
        return len(self.xs)

    def positions(self) -> dict[tuple[str, int], tuple[int, ...]]:
        layout = grid_layout(self.n, self.dimension)
        out = {("x", i + 1): layout[i] for i in range(self.n)}
        out.update({("y", i + 1): layout[self.n + i] for i in range(self.n)})
        return out

    def cut_adjacent_pairs(self) -> list[tuple[int, int]]:
        pos = self.positions()
        return [
            (i, j)
            for i in range(1, self.n + 1)
            for j in range(1, self.n + 1)
            if manhattan(pos[("x", i)], pos[("y", j)]) == 1
        ]


def _neighbours(positions: Sequence[tuple[int, ...]], radius: int) -> list[list[int]]:
    index = {p: i for i, p in enumerate(positions)}
    dim = len(positions[0]) if positions else 1
    offsets = [
        off
        for off in itertools.product(range(-radius, radius + 1), repeat=dim)
        if 0 < sum(map(abs, off)) <= radius
    ]
    out = []
    for p in positions:
        near = (tuple(a + b for a, b in zip(p, off)) for off in offsets)
        out.append(sorted(index[q] for q in near if q in index))
    return out


def _local_triples(neigh: list[list[int]]) -> list[list[tuple[int, int, int]]]:
    out = []
    for w in range(len(neigh)):
        found = set()
        for u in neigh[w]:
            for v in set(neigh[w]) | set(neigh[u]):
                if v not in (w, u):
                    found.add(tuple(sorted((w, u, v))))
        out.append(sorted(found))
    return out


def random_circuit(
    n: int,
    depth: int,
    dimension: int = 1,
    kind: str = TOFFOLI,
    seed: int = 0,
    radius: int = 1,
    density: float = 0.75,
    randomness: int = 0,
) -> LayeredCircuit:
    """A random local circuit over ``n`` wires per side.

    Each layer visits wires in random order and, with probability
    ``density``, places a gate anchored there, chosen uniformly among the
    local gates still available (disjoint for Toffoli, unique target for NAND).
    """
    if n < 1 or depth < 0 or dimension < 1 or radius < 1:
        raise DomainError("n, dimension and radius must be positive and depth non-negative")
    if kind not in ARITY:
        raise DomainError(f"unknown gate kind {kind!r}")
    positions = grid_layout(n, dimension)
    width = len(positions)
    gen = rng.generator(seed, rng.CIRCUIT, n, depth, dimension, ARITY[kind])
    neigh = _neighbours(positions, radius)
    triples = _local_triples(neigh) if kind == TOFFOLI else None
    layers = []
    for _ in range(depth):
        layer = []
        busy = np.zeros(width, dtype=bool)
        for w in gen.permutation(width):
            w = int(w)
            if busy[w] or gen.random() >= density:
                continue
            if kind == NAND:
                if not neigh[w]:
                    continue
                s = neigh[w][int(gen.integers(len(neigh[w])))]
                layer.append(CircuitGate(NAND, (w, s)))
                busy[w] = True
            else:
                options = [t for t in triples[w] if not busy[list(t)].any()]
                if not options:
                    continue
                chosen = list(options[int(gen.integers(len(options)))])
                order = gen.permutation(3)
                layer.append(CircuitGate(TOFFOLI, tuple(chosen[i] for i in order)))
                busy[chosen] = True
        layers.append(layer)
    rand_wires = sorted(int(w) for w in gen.choice(width, size=min(randomness, width), replace=False)) if randomness else []
    return LayeredCircuit(dimension, positions, layers, rand_wires, radius=radius)


def random_tape(seed: int, length: int, index: int = 0) -> tuple[int, ...]:
    """Shared randomness bits for a circuit, from a seeded tape."""
    return tuple(int(b) for b in rng.generator(seed, rng.TAPE, index).integers(0, 2, size=length))


def depth_ratio(source: LayeredCircuit, transpiled: LayeredCircuit) -> float:
    return transpiled.depth / source.depth if source.depth else math.nan


_ROLES = tuple(itertools.permutations(range(3)))


def brickwork_circuit(n: int, depth: int, dimension: int = 1, seed: int = 0, density: float = 0.75) -> LayeredCircuit:
    """Toffoli brickwork along axis 0, laid out relative to the x/y cut.

    Layer ``l`` tiles every axis-0 line with triples whose start sits at
    ``cut + r`` for ``r = l mod 3`` (mod 3).  Each triple is kept with
    probability ``density`` and gets a random control/target assignment.
    Random draws are taken in order of distance from the cut, so the
    neighbourhood of the cut is the same circuit for every ``n``.
    """
    if n < 1 or depth < 0 or dimension < 1:
        raise DomainError("n and dimension must be positive and depth non-negative")
    positions = grid_layout(n, dimension)
    index = {p: i for i, p in enumerate(positions)}
    cut = n if dimension == 1 else integer_root(n, dimension)
    rows = sorted({p[1:] for p in positions})
    layers = []
    for layer in range(depth):
        offset = layer % 3
        rel = [r for r in range(-cut - 2, cut) if (r - offset) % 3 == 0]
        rel.sort(key=lambda r: (abs(2 * r + 3), r))
        gates = []
        for row in rows:
            draws = rng.generator(seed, rng.CIRCUIT, dimension, layer, *row).random((len(rel), 2))
            for r, (keep, role) in zip(rel, draws):
                start = cut + r
                if start < 0 or start + 2 >= 2 * cut or keep >= density:
                    continue
                wires = [index[(start + k,) + row] for k in range(3)]
                gates.append(CircuitGate(TOFFOLI, tuple(wires[i] for i in _ROLES[int(role * 6)])))
        layers.append(gates)
    return LayeredCircuit(dimension, positions, layers)
