"""The nine acceptance criteria, each at its stated tolerance.

Each test prints one ``criterion N: PASS|FAIL`` line; the same lines are
repeated in an "acceptance criteria" section at the end of the pytest run.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from parmagic.circuit import NAND, SUBLAYERS_PER_LAYER, TOFFOLI, evaluate, evaluate_batch, nand_to_toffoli, random_circuit
from parmagic.cli import cmd_completeness, cmd_scaling, cmd_value, main
from parmagic.compiler import compile_protocol, execute_protocol
from parmagic.games import brute_force_leakage_value, disclosure_protocol, magic_square, protocol_value, sample_inputs
from parmagic.protocol import replay_adversary, run_soundness_probe
from parmagic.quantum import measure_magic_square, prepare_resource, run_parmagic

MS = magic_square()


def ms_wins(x, y, a, b):
    """Row parity even, column parity odd, shared cell agrees."""
    a, b = [int(c) for c in a], [int(c) for c in b]
    return sum(a) % 2 == 0 and sum(b) % 2 == 1 and a[y] == b[x]


def test_criterion_1_exact_classical_value(criterion):
    with criterion(1, "classical value of the Magic Square is exactly 8/9 in under 1 s"):
        start = time.perf_counter()
        value = cmd_value("magic-square", 0)
        elapsed = time.perf_counter() - start
        assert isinstance(value, Fraction) and value == Fraction(8, 9)
        assert elapsed < 1.0, f"took {elapsed:.2f}s"


def test_criterion_2_noiseless_completeness(criterion):
    with criterion(2, "noiseless strategy never loses (9 pairs x 1e4 shots, 10 seeds of n=1e4) in under 1 min"):
        start = time.perf_counter()
        state = prepare_resource(1)[0]
        failures = 0
        for x in range(3):
            for y in range(3):
                for shot in range(10_000):
                    a, b = measure_magic_square(state, x, y, seed=shot)
                    failures += not ms_wins(x, y, a, b)
        assert failures == 0
        n = 10_000
        for seed in range(10):
            inputs = sample_inputs(MS, n, 1000 + seed)
            a, b = run_parmagic(inputs, seed=seed)
            wins = sum(ms_wins(*t) for t in zip(inputs.xs, inputs.ys, a, b))
            assert wins == n, f"seed {seed}: {wins}/{n}"
        elapsed = time.perf_counter() - start
        assert elapsed < 60, f"took {elapsed:.1f}s"


def test_criterion_3_noisy_completeness(criterion):
    with criterion(3, "delta=0.1, eps=0.001, n=1000, 1000 rounds: acceptance >= 0.999, failure rate <= 0.05, under 5 min"):
        start = time.perf_counter()
        row = cmd_completeness(1000, 0.1, 0.001, 1000, seed=0)
        elapsed = time.perf_counter() - start
        assert row["epsilon"] == 0.001 and row["rounds"] == 1000
        assert row["acceptance"] >= 0.999, row
        assert row["failure_rate"] <= 0.05, row
        assert elapsed < 300, f"took {elapsed:.1f}s"


def test_criterion_4_transpiler_equivalence(criterion):
    with criterion(4, "200 NAND circuits x 1000 inputs agree after transpiling; max depth ratio equal at d=8 and d=16"):
        gen = np.random.default_rng(2024)
        ratios: dict[int, list[float]] = {}
        for k in range(200):
            n = int(gen.integers(1, 33))
            d = (8, 16)[k % 2] if k < 40 else int(gen.integers(1, 17))
            source = random_circuit(n, d, 1, NAND, seed=k)
            target = nand_to_toffoli(source)
            assert target.input_wires == source.input_wires
            rows = gen.integers(0, 2, (1000, len(source.input_wires)))
            expected = evaluate_batch(source, rows)
            got = evaluate_batch(target, rows)[:, : source.width]
            assert np.array_equal(got, expected), f"circuit {k} (n={n}, d={d}) disagrees"
            ratios.setdefault(d, []).append(target.depth / source.depth)
        assert max(ratios[16]) == max(ratios[8]) == SUBLAYERS_PER_LAYER
        assert max(max(r) for r in ratios.values()) == SUBLAYERS_PER_LAYER


def test_criterion_5_compiler_equivalence_and_cost(criterion):
    with criterion(5, "200 Toffoli circuits x 100 inputs: protocol output equals evaluation, <= 2d bits, |Ga| <= 1"):
        gen = np.random.default_rng(5)
        for k in range(200):
            n, d = int(gen.integers(1, 65)), int(gen.integers(1, 33))
            circuit = random_circuit(n, d, 1, TOFFOLI, seed=10_000 + k, randomness=int(gen.integers(0, 3)))
            spec = compile_protocol(circuit)
            assert max((len(layer.ga) for layer in spec.layers), default=0) <= 1
            for _ in range(100):
                x = gen.integers(0, 2, len(spec.alice_inputs)).tolist()
                y = gen.integers(0, 2, len(spec.bob_inputs)).tolist()
                r = gen.integers(0, 2, len(circuit.randomness_wires)).tolist()
                out, transcript = execute_protocol(spec, x, y, r)
                # line layout: every x wire precedes every y wire
                assert out == evaluate(circuit, x + y, r)
                assert transcript.total_bits <= 2 * d


def test_criterion_6_two_dimensional_scaling(criterion):
    with criterion(6, "D=2 communication within 2 d floor(sqrt n) and measured/d grows with n"):
        rows = cmd_scaling(2, [16, 64, 256], [4, 8, 16], seed=0)
        assert len(rows) == 9
        for row in rows:
            limit = 2 * row["depth"] * int(np.floor(np.sqrt(row["n"])))
            assert row["bound"] == limit
            assert row["total_bits"] <= limit, row
        for d in (4, 8, 16):
            cells = sorted((r["n"], r["total_bits"] / d, r["bound"]) for r in rows if r["depth"] == d)
            per_depth = [c[1] for c in cells]
            assert per_depth == sorted(per_depth) and len(set(per_depth)) == 3, (d, per_depth)
            assert [c[2] for c in cells] == sorted(c[2] for c in cells)


def test_criterion_7_leakage_curve(criterion):
    with criterion(7, "leakage values monotone, 8/9 at c=0, 1 at c=2 both ways, c=1 under 5 min"):
        values = {}
        for c in (0, 1, 2):
            start = time.perf_counter()
            values[c] = brute_force_leakage_value(MS, c)
            if c == 1:
                assert time.perf_counter() - start < 300
        assert values[0] == Fraction(8, 9)
        assert values[0] <= values[1] <= values[2]
        assert values[2] == 1
        assert protocol_value(MS, disclosure_protocol()) == 1


def test_criterion_8_soundness_probe(criterion):
    with criterion(8, "replay adversary matches the exact binomial tail within the 95% CI; tail strictly decreasing"):
        adversary = replay_adversary()
        results = [run_soundness_probe(adversary, n, 0.1, 2000, seed=0) for n in (50, 100, 200)]
        for r in results:
            assert r.per_game_value == Fraction(8, 9)
            assert r.ci_low <= float(r.exact_tail) <= r.ci_high, r
        tails = [r.exact_tail for r in results]
        assert tails[0] > tails[1] > tails[2]


@pytest.mark.parametrize("command", ["value", "completeness", "scaling", "probe", "parbell", "round"])
def test_criterion_9_config_rerun_is_bit_exact(command, tmp_path, criterion):
    with criterion(9, "every subcommand rerun from its config reproduces its outputs byte for byte"):
        first, second = tmp_path / "first", tmp_path / "second"
        assert main([command, "--out", str(first)]) == 0
        assert main([command, "--config", str(first / "config.json"), "--out", str(second)]) == 0
        produced = sorted(p.name for p in first.iterdir())
        assert produced == sorted(p.name for p in second.iterdir()) and len(produced) >= 2
        for name in produced:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
