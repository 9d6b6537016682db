import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parmagic.errors import DomainError, ResourceError
from parmagic.games import (
    DeterministicStrategy,
    LineInput,
    best_response_search,
    brute_force_classical_value,
    brute_force_leakage_value,
    chsh,
    classical_optimum,
    constant_game,
    count_satisfied,
    decode_trits,
    disclosure_protocol,
    dumps_game,
    encode_trits,
    eval_predicate,
    leakage_optimum,
    loads_game,
    magic_square,
    parallel_repetition,
    parmagic_holds,
    protocol_value,
    sample_inputs,
    strategy_value,
)

MS = magic_square()


def naive_classical_value(game):
    """Oracle: loop over every full answer table, no pruning, no numpy."""
    best = Fraction(0)
    tables_a = itertools.product(game.answers_a, repeat=game.n_x)
    tables_b = list(itertools.product(game.answers_b, repeat=game.n_y))
    for ta in tables_a:
        for tb in tables_b:
            best = max(best, strategy_value(game, DeterministicStrategy(ta, tb)))
    return best


def full_product_leakage_value(game, c):
    """Oracle: enumerate (message map, Alice table, Bob table) triples outright."""
    n_msg = 1 << c
    weights, denom = game.integer_weights
    valid_a = game.valid_a
    valid_b = game.valid_b
    bob_keys = [(y, m) for y in range(game.n_y) for m in range(n_msg)]
    bob_tables = np.array(list(itertools.product(*[valid_b[y] for y, _ in bob_keys])))
    best = 0
    for msg in itertools.product(range(n_msg), repeat=game.n_x):
        for ta in itertools.product(*valid_a):
            total = np.zeros(len(bob_tables), dtype=np.int64)
            for x, y in itertools.product(range(game.n_x), range(game.n_y)):
                col = bob_keys.index((y, msg[x]))
                total += weights[x, y] * game.predicate[x, y, ta[x], bob_tables[:, col]]
            best = max(best, int(total.max()))
    return Fraction(best, denom)


@pytest.mark.parametrize(
    "x,y,a,b,expected",
    [(0, 0, "000", "010", True), (0, 0, "000", "111", False), (2, 1, "010", "100", False)],
)
def test_eval_predicate_examples(x, y, a, b, expected):
    assert eval_predicate(MS, x, y, a, b) is expected


def test_eval_predicate_accepts_bit_tuples():
    assert eval_predicate(MS, 0, 0, (0, 0, 0), [0, 1, 0])


@pytest.mark.parametrize("args", [(3, 0, "000", "001"), (0, -1, "000", "001"), (0, 0, "00", "001"), (0, 0, "000", "abc")])
def test_eval_predicate_rejects_off_alphabet(args):
    with pytest.raises(DomainError):
        eval_predicate(MS, *args)


def test_predicate_nontrivial_for_every_question_pair():
    for x, y in itertools.product(range(3), repeat=2):
        outcomes = {
            eval_predicate(MS, x, y, a, b)
            for a in MS.answers_a
            for b in MS.answers_b
            if a.count("1") % 2 == 0 and b.count("1") % 2 == 1
        }
        assert outcomes == {True, False}


def test_count_satisfied_examples():
    one = LineInput((0,), (0,))
    assert count_satisfied(MS, one, (["000"], ["010"])) == 1
    three = LineInput((0, 1, 2), (2, 0, 1))
    answers = (["011", "110", "101"], ["100", "010", "100"])
    assert count_satisfied(MS, three, answers) == 3
    two = LineInput((0, 0), (0, 0))
    count = count_satisfied(MS, two, (["000", "000"], ["010", "111"]))
    assert count == 1
    assert not parmagic_holds(count, 2, 0.1)


def test_count_satisfied_length_mismatch():
    with pytest.raises(DomainError):
        count_satisfied(MS, LineInput((0, 1), (0, 1)), (["000"], ["001", "001"]))


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_count_satisfied_permutation_equivariant(data):
    n = data.draw(st.integers(1, 12))
    xs = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    ys = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    a = data.draw(st.lists(st.sampled_from(MS.answers_a), min_size=n, max_size=n))
    b = data.draw(st.lists(st.sampled_from(MS.answers_b), min_size=n, max_size=n))
    perm = data.draw(st.permutations(range(n)))
    inputs = LineInput(xs, ys)
    before = count_satisfied(MS, inputs, (a, b))
    after = count_satisfied(MS, inputs.permuted(perm), ([a[i] for i in perm], [b[i] for i in perm]))
    assert before == after


def test_trit_encoding_pinned():
    assert encode_trits([0, 1, 2]) == (0, 0, 0, 1, 1, 0)
    assert decode_trits((1, 0, 0, 1)) == (2, 1)
    with pytest.raises(DomainError):
        decode_trits((1, 1))


def test_line_input_adjacency():
    inputs = LineInput((0, 1, 2), (2, 1, 0))
    assert inputs.adjacent(("x", 3), ("y", 1))
    assert inputs.adjacent(("x", 1), ("x", 2))
    assert not inputs.adjacent(("x", 1), ("y", 1))
    assert LineInput.from_bits(inputs.x_bits, inputs.y_bits) == inputs


def test_sample_inputs_deterministic():
    assert sample_inputs(MS, 50, seed=9) == sample_inputs(MS, 50, seed=9)
    assert sample_inputs(MS, 50, seed=9) != sample_inputs(MS, 50, seed=10)


def test_sample_inputs_uniform_frequencies():
    n = 100_000
    inputs = sample_inputs(MS, n, seed=1)
    counts = np.zeros((3, 3))
    np.add.at(counts, (np.array(inputs.xs), np.array(inputs.ys)), 1)
    freq = counts / n
    assert np.all(np.abs(freq - 1 / 9) < 0.01)
    # chi-square against uniform, 8 degrees of freedom; 26.1 is the 0.999 quantile
    expected = n / 9
    assert ((counts - expected) ** 2 / expected).sum() < 26.1


def test_sample_inputs_follows_nonuniform_weights():
    game = loads_game(
        "sizes 2 1 1 1\nA a\nB b\npi 0 0 1/4\npi 1 0 3/4\n0 0 a b 1\n1 0 a b 0\n"
    )
    xs = np.array(sample_inputs(game, 40_000, seed=3).xs)
    assert abs(xs.mean() - 0.75) < 0.01


def test_sample_inputs_rejects_zero():
    with pytest.raises(DomainError):
        sample_inputs(MS, 0, seed=1)


def test_magic_square_classical_value_exact():
    value = brute_force_classical_value(MS)
    assert value == Fraction(8, 9)
    assert isinstance(value, Fraction)


def test_classical_value_matches_naive_oracle_on_small_games():
    for game in (chsh(), constant_game(), constant_game(value=False)):
        assert brute_force_classical_value(game) == naive_classical_value(game)
    assert brute_force_classical_value(chsh()) == Fraction(3, 4)
    assert brute_force_classical_value(constant_game()) == 1


def test_classical_optimum_is_lexicographically_smallest():
    value, strategy = classical_optimum(MS)
    assert strategy_value(MS, strategy) == value
    tables_a = list(itertools.product(*[[MS.answers_a[i] for i in v] for v in MS.valid_a]))
    tables_b = list(itertools.product(*[[MS.answers_b[i] for i in v] for v in MS.valid_b]))
    first = next(
        (ta, tb)
        for ta in tables_a
        for tb in tables_b
        if strategy_value(MS, DeterministicStrategy(ta, tb)) == value
    )
    assert (strategy.alice, strategy.bob) == first


@pytest.mark.parametrize("partitions,workers", [(1, 1), (3, 1), (7, 4), (64, 8)])
def test_partitioned_search_is_partition_independent(partitions, workers):
    reference = classical_optimum(MS)
    assert classical_optimum(MS, partitions=partitions, workers=workers) == reference
    ref_leak = leakage_optimum(MS, 1)
    got = leakage_optimum(MS, 1, partitions=partitions, workers=workers)
    assert got[0] == ref_leak[0]
    assert got[1] == ref_leak[1]


def test_cap_exceeded_reports_required_count():
    with pytest.raises(ResourceError) as info:
        brute_force_classical_value(MS, cap=100)
    assert info.value.required == 64 * 64


def test_leakage_zero_equals_classical():
    assert brute_force_leakage_value(MS, 0) == brute_force_classical_value(MS)
    assert brute_force_leakage_value(chsh(), 0) == Fraction(3, 4)


def test_leakage_one_bit_matches_full_product_oracle():
    value = brute_force_leakage_value(MS, 1)
    assert Fraction(8, 9) <= value <= 1
    assert value == full_product_leakage_value(MS, 1)
    assert brute_force_leakage_value(chsh(), 1) == full_product_leakage_value(chsh(), 1)


def test_leakage_two_bits_reaches_one_both_ways():
    value, protocol = leakage_optimum(MS, 2)
    assert value == 1
    assert protocol_value(MS, protocol) == 1
    assert protocol_value(MS, disclosure_protocol()) == 1
    assert protocol_value(MS, disclosure_protocol("110")) == 1


def test_leakage_optimum_protocol_attains_value():
    for c in range(3):
        value, protocol = leakage_optimum(chsh(), c)
        assert protocol_value(chsh(), protocol) == value
        assert all(len(m) == c for m in protocol.message)


def test_leakage_monotone_in_budget():
    for game in (MS, chsh()):
        values = [brute_force_leakage_value(game, c) for c in range(4)]
        assert values == sorted(values)


def test_best_response_single_game_matches_brute_force():
    value, strategy = best_response_search(MS, 1)
    assert value == Fraction(8, 9)
    assert strategy_value(MS, strategy) == value


def test_best_response_two_fold_beats_product_bound():
    value, strategy = best_response_search(MS, 2, restarts=2, seed=5)
    assert value >= Fraction(8, 9) ** 2
    assert strategy_value(parallel_repetition(MS, 2), strategy) == value


def test_more_restarts_never_lower_bound():
    values = [best_response_search(MS, 2, restarts=r, seed=11)[0] for r in (1, 2, 4)]
    assert values == sorted(values)


def test_parallel_repetition_of_single_is_identity_table():
    rep = parallel_repetition(MS, 1)
    assert np.array_equal(rep.predicate, MS.predicate)
    assert rep.distribution == MS.distribution


def test_game_text_round_trip():
    for game in (MS, chsh()):
        text = dumps_game(game)
        again = loads_game(text)
        assert np.array_equal(again.predicate, game.predicate)
        assert again.distribution == game.distribution
        assert again.answers_a == game.answers_a
        assert dumps_game(again) == text
    assert "pi 0 0 1/9" in dumps_game(MS)


@pytest.mark.parametrize(
    "text",
    [
        "sizes 1 1 1 1\nA a\nB b\npi 0 0 1/2\n0 0 a b 1\n",  # weights sum to 1/2
        "sizes 1 1 1 2\nA a\nB b c\npi 0 0 1\n0 0 a b 1\n",  # not total
        "sizes 1 1 1 1\nA a\nB b\npi 0 0 1\n0 0 a z 1\n",  # off alphabet
        "sizes 1 1 1 1\nA a\nB b\npi 0 0 -1/1\n0 0 a b 1\n",
    ],
)
def test_game_text_rejects_bad_tables(text):
    with pytest.raises(DomainError):
        loads_game(text)


def test_constant_true_game_value_one():
    assert brute_force_classical_value(constant_game(3, 2)) == 1
