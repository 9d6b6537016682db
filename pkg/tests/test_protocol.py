import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import binom

from parmagic.circuit import NAND, TOFFOLI, random_circuit
from parmagic.errors import DomainError
from parmagic.games import DeterministicStrategy, LineInput, disclosure_protocol, magic_square, sample_inputs
from parmagic.protocol import (
    CIRCUIT,
    LEAKAGE,
    STRATEGY,
    AdversarySpec,
    PaddedMessage,
    default_epsilon,
    dumps_adversary,
    dumps_round,
    exact_binomial_tail,
    fixed_parity_adversary,
    honest_prover,
    loads_adversary,
    replay_adversary,
    route_inputs,
    run_rounds,
    run_soundness_probe,
    threshold,
    verifier_round,
    verify,
)
from parmagic.quantum import NoiseModel


def ms_wins(x, y, a, b):
    """Row parity even, column parity odd, shared cell agrees."""
    a, b = [int(c) for c in a], [int(c) for c in b]
    return sum(a) % 2 == 0 and sum(b) % 2 == 1 and a[y] == b[x]


def test_two_game_message_layout():
    message, hidden = verifier_round(2, 0.1, seed=11)
    symbols = message.symbols
    assert len(symbols) == 12 and len(message.bits) == 24
    trits = [s for i, s in enumerate(symbols) if i % 3 == 2]
    assert all(s == 3 for i, s in enumerate(symbols) if i % 3 != 2)
    assert trits == list(hidden.xs) + list(hidden.ys)
    assert message.is_canonical() and message.decode() == hidden


def test_message_deterministic_per_seed():
    a, _ = verifier_round(50, 0.1, seed=4)
    b, _ = verifier_round(50, 0.1, seed=4)
    c, _ = verifier_round(50, 0.1, seed=5)
    assert a == b and a != c


def test_trit_frequencies_uniform():
    counts = np.zeros(3)
    for seed in range(100):
        _, hidden = verifier_round(5000, 0.1, seed=seed)
        counts += np.bincount(hidden.xs + hidden.ys, minlength=3)
    assert counts.sum() == 10**6
    assert np.abs(counts / counts.sum() - 1 / 3).max() < 0.01


@pytest.mark.parametrize("delta", [-0.01, 0.11, 0.5, 1])
def test_delta_out_of_range(delta):
    with pytest.raises(DomainError):
        verifier_round(3, delta, seed=0)
    with pytest.raises(DomainError):
        list(run_rounds(3, delta, 0.0, 1, 0))


def test_boundary_deltas_accepted():
    verifier_round(3, 0, seed=0)
    verifier_round(3, 0.1, seed=0)


def test_bad_message_shapes():
    with pytest.raises(DomainError):
        PaddedMessage([0] * 11)
    with pytest.raises(DomainError):
        PaddedMessage([])
    with pytest.raises(DomainError):
        PaddedMessage([2] * 12)


def test_blank_code_in_trit_slot_is_malformed():
    bits = np.array(verifier_round(2, 0.1, seed=1)[0].bits)
    bits[4:6] = 1  # symbol 2 is the first trit register
    message = PaddedMessage(bits)
    assert not message.is_canonical()
    with pytest.raises(DomainError):
        message.decode()
    with pytest.raises(DomainError):
        honest_prover(message)


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_honest_prover_wins_everything(seed):
    n = 300
    message, hidden = verifier_round(n, 0.1, seed=seed)
    a, b = honest_prover(message, NoiseModel(0.0), seed=seed)
    verdict = verify(hidden, (a, b), 0.1)
    assert verdict.accept and verdict.win_count == n
    assert all(ms_wins(x, y, ai, bi) for x, y, ai, bi in zip(hidden.xs, hidden.ys, a, b))


def test_blank_encodings_do_not_matter():
    message, hidden = verifier_round(40, 0.1, seed=8)
    gen = np.random.default_rng(0)
    bits = np.array(message.bits).reshape(-1, 3, 2)
    bits[:, :2, :] = gen.integers(0, 2, bits[:, :2, :].shape)
    scrambled = PaddedMessage(bits.ravel())
    assert scrambled.decode() == hidden
    noise = NoiseModel(0.05)
    assert honest_prover(scrambled, noise, seed=3) == honest_prover(message, noise, seed=3)


def test_swap_noise_only_touches_routing_when_enabled():
    message, hidden = verifier_round(500, 0.1, seed=2)
    assert route_inputs(message, NoiseModel(0.3, noisy_swap_network=False), 1) == hidden
    routed = route_inputs(message, NoiseModel(0.3), 1)
    assert routed != hidden
    assert set(routed.xs) | set(routed.ys) <= {0, 1, 2}


def test_threshold_examples():
    gen = np.random.default_rng(1)
    inputs = sample_inputs(magic_square(), 10, 3)
    a = ["000"] * 10

    def bob(x):
        # odd parity with a 0 at Alice's cell: always wins against 000
        bits = ["0"] * 3
        bits[(x + 1) % 3] = "1"
        return "".join(bits)

    for losses, accept in [(0, True), (1, True), (2, False)]:
        lose_at = set(gen.choice(10, losses, replace=False).tolist())
        b = ["111" if i in lose_at else bob(x) for i, x in enumerate(inputs.xs)]
        outcomes = [ms_wins(x, y, ai, bi) for x, y, ai, bi in zip(inputs.xs, inputs.ys, a, b)]
        assert outcomes.count(False) == losses
        verdict = verify(inputs, (a, b), 0.1)
        assert verdict.per_game == tuple(outcomes)
        assert (verdict.threshold, verdict.win_count, verdict.accept) == (9, 10 - losses, accept)


def test_threshold_is_exact_ceiling():
    assert threshold(10, 0.1) == 9
    assert threshold(1000, 0.1) == 900
    assert threshold(7, 0.1) == 7  # 6.3 rounds up
    assert threshold(30, Fraction(1, 10)) == 27
    for n in range(1, 200):
        assert threshold(n, Fraction(1, 20)) == -((-19 * n) // 20)


def test_malformed_answers_lose_only_their_game():
    inputs = LineInput([0, 1, 2], [0, 1, 2])
    a = ["000", "011", "x"]
    b = ["010", "0011", "001"]
    assert ms_wins(0, 0, a[0], b[0])
    verdict = verify(inputs, (a, b), 0.1)
    assert verdict.per_game == (True, False, False)


def test_verify_length_mismatch():
    with pytest.raises(DomainError):
        verify(LineInput([0, 1], [1, 1]), (["000"], ["001", "001"]))


def test_verdict_permutation_invariant():
    gen = np.random.default_rng(9)
    inputs = sample_inputs(magic_square(), 60, 4)
    a = ["000", "011", "101", "110"]
    b = ["001", "010", "100", "111"]
    a_ans = [a[i] for i in gen.integers(0, 4, 60)]
    b_ans = [b[i] for i in gen.integers(0, 4, 60)]
    base = verify(inputs, (a_ans, b_ans), 0.05)
    for _ in range(10):
        p = gen.permutation(60)
        perm = LineInput([inputs.xs[i] for i in p], [inputs.ys[i] for i in p])
        v = verify(perm, ([a_ans[i] for i in p], [b_ans[i] for i in p]), 0.05)
        assert (v.accept, v.win_count, v.threshold) == (base.accept, base.win_count, base.threshold)
        assert v.per_game == tuple(base.per_game[i] for i in p)


def test_exact_tail_matches_scipy():
    for n in (1, 5, 50, 100, 200):
        for k in (0, 1, n // 2, threshold(n, 0.1), n, n + 1):
            exact = exact_binomial_tail(n, Fraction(8, 9), k)
            assert isinstance(exact, Fraction)
            assert math.isclose(float(exact), binom.sf(k - 1, n, 8 / 9), rel_tol=1e-9, abs_tol=1e-300)


def test_exact_tail_small_case_by_hand():
    assert exact_binomial_tail(2, Fraction(1, 2), 1) == Fraction(3, 4)
    assert exact_binomial_tail(3, Fraction(1, 3), 3) == Fraction(1, 27)


def test_probe_reproducible():
    adv = replay_adversary()
    first = run_soundness_probe(adv, 50, 0.1, 200, seed=6)
    assert first == run_soundness_probe(adv, 50, 0.1, 200, seed=6)
    assert first.per_game_value == Fraction(8, 9)
    assert first.communication == 0 and first.depth == 0


def test_probe_rejects_bad_arguments():
    with pytest.raises(DomainError):
        run_soundness_probe(replay_adversary(), 10, 0.2, 10)
    with pytest.raises(DomainError):
        run_soundness_probe(replay_adversary(), 10, 0.1, 0)


def test_fixed_parity_adversary_curve():
    adv = fixed_parity_adversary()
    p = adv.game_value(magic_square())
    # a = 000 and b = 001 agree on the shared cell unless x = 2
    assert p == Fraction(2, 3)
    rates = [run_soundness_probe(adv, n, 0.1, 300, seed=1) for n in (1, 2, 5, 10)]
    tails = [r.exact_tail for r in rates]
    assert all(t1 > t2 for t1, t2 in zip(tails, tails[1:]))
    assert [r.rate for r in rates] == sorted((r.rate for r in rates), reverse=True)
    for r in rates:
        assert r.ci_low <= float(r.exact_tail) <= r.ci_high


def test_disclosure_adversary_always_accepted():
    adv = AdversarySpec(LEAKAGE, disclosure_protocol(), "disclosure")
    result = run_soundness_probe(adv, 40, 0.0, 30, seed=2)
    assert result.accepted == 30
    assert result.communication == 2 * 40


def test_circuit_adversary_communication_at_most_twice_depth():
    for seed in range(12):
        n_games = 1 + seed % 4
        d = 1 + seed % 7
        # n positions per side, so 3k of them carry k games
        circuit = random_circuit(3 * n_games, d, 1, TOFFOLI, seed=seed)
        adv = AdversarySpec(CIRCUIT, circuit)
        result = run_soundness_probe(adv, n_games, 0.1, 20, seed=seed)
        assert result.depth == d
        assert result.communication <= 2 * result.depth
        assert result.exact_tail is None


def test_nand_circuit_adversary_metered_on_toffoli_version():
    circuit = random_circuit(6, 4, 1, NAND, seed=3)
    adv = AdversarySpec(CIRCUIT, circuit)
    assert adv.depth == 16
    assert adv.communication(2) <= 2 * adv.depth
    a, b = adv.answers(LineInput([0, 2], [1, 1]))
    assert all(len(s) == 3 and set(s) <= {"0", "1"} for s in a + b)


def test_circuit_adversary_wire_convention_enforced():
    with pytest.raises(DomainError):
        AdversarySpec(CIRCUIT, random_circuit(7, 2, 1, TOFFOLI, seed=0))


def test_unknown_adversary_kind():
    with pytest.raises(DomainError):
        AdversarySpec("oracle", None)
    with pytest.raises(DomainError):
        AdversarySpec(STRATEGY, "not a strategy")


def test_adversary_text_round_trip():
    for adv in (
        replay_adversary(),
        fixed_parity_adversary(),
        AdversarySpec(LEAKAGE, disclosure_protocol(), "disclosure"),
        AdversarySpec(CIRCUIT, random_circuit(6, 3, 1, TOFFOLI, seed=2)),
    ):
        back = loads_adversary(dumps_adversary(adv))
        assert back.kind == adv.kind
        if adv.kind == CIRCUIT:
            assert back.payload == adv.payload
        else:
            assert back.payload == adv.payload and back.label == adv.label
        inputs = sample_inputs(magic_square(), 2, 5)
        assert back.answers(inputs) == adv.answers(inputs)


def test_strategy_text_format_by_hand():
    adv = loads_adversary("# comment\nkind strategy\nalice 000 000 000\nbob 001 001 001\n")
    assert adv.payload == DeterministicStrategy(("000",) * 3, ("001",) * 3)
    with pytest.raises(DomainError):
        loads_adversary("kind strategy\nalice 000\n")


def test_rounds_log_records():
    records = list(run_rounds(20, 0.1, 0.0, 5, seed=3))
    assert [r["round"] for r in records] == list(range(5))
    assert all(r["accept"] and r["win_count"] == 20 for r in records)
    assert dumps_round(records[0]).startswith('{"round":0,"seed":')


def test_two_process_rounds_identical():
    inproc = list(run_rounds(40, 0.1, 0.02, 6, seed=9))
    assert list(run_rounds(40, 0.1, 0.02, 6, seed=9, two_process=True)) == inproc


def test_two_process_large_message_chunks():
    # 12n bits exceeds one frame's payload limit at this size
    n = 6000
    inproc = list(run_rounds(n, 0.1, 0.0, 1, seed=1))
    assert list(run_rounds(n, 0.1, 0.0, 1, seed=1, two_process=True)) == inproc


def test_default_epsilon_relation():
    assert default_epsilon(0.1) == pytest.approx(0.001)
