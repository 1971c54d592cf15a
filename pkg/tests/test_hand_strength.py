import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecfr.cards import GameConfig, preset
from ecfr.hand_strength import (
    FLUSH,
    HIGH_CARD,
    PAIR,
    STRAIGHT,
    STRAIGHT_FLUSH,
    TRIPS,
    canonicalize,
    class_strength_tensors,
    compare,
    count_isomorphism_classes,
    enumerate_classes,
    enumerate_raw_hands,
    orbit_size,
    rank_hand,
    strength_tensor,
    terminal_outcome_counts,
    terminal_outcome_vector,
    write_strength_csv,
)

from conftest import toy_three_round

N211 = preset("numeral211")


def cards(text, cfg=N211):
    return cfg.parse_cards(text)


def permute_suits(groups, perm, num_suits):
    return [tuple((c // num_suits) * num_suits + perm[c % num_suits] for c in g) for g in groups]


def test_table_examples():
    r = rank_hand(cards("Ts9s8s"), N211)
    assert r.category == STRAIGHT_FLUSH
    r = rank_hand(cards("TsTh8c"), N211)
    assert r.category == PAIR
    assert r.tiebreak == (8, 6)  # rank indices of T and 8


def test_category_order():
    sf = rank_hand(cards("Ts9s8s"), N211)
    trips = rank_hand(cards("AsAhAd"), N211)
    straight = rank_hand(cards("Ts9h8s"), N211)
    flush = rank_hand(cards("As8s2s"), N211)
    pair = rank_hand(cards("TsTh9c"), N211)
    high = rank_hand(cards("As8h2c"), N211)
    ladder = [high, pair, flush, straight, trips, sf]
    assert [h.category for h in ladder] == [HIGH_CARD, PAIR, FLUSH, STRAIGHT, TRIPS, STRAIGHT_FLUSH]
    for lo, hi in zip(ladder, ladder[1:]):
        assert compare(hi, lo) == 1 and compare(lo, hi) == -1
    assert compare(pair, rank_hand(cards("TdTc9s"), N211)) == 0
    assert compare(pair, rank_hand(cards("TdTc8s"), N211)) == 1


def test_straights_do_not_wrap():
    assert rank_hand(cards("As2h3c"), N211).category == HIGH_CARD
    assert rank_hand(cards("9sTh Ac"), N211).category == STRAIGHT


def test_best_of_four_is_max_over_subsets():
    rng = random.Random(0)
    for _ in range(300):
        hand = rng.sample(range(40), 4)
        best = max(rank_hand(sub, N211) for sub in itertools.combinations(hand, 3))
        assert rank_hand(hand, N211) == best


def test_too_few_cards():
    with pytest.raises(ValueError):
        rank_hand(cards("AsAh"), N211)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 39), min_size=9, max_size=9, unique=True))
def test_compare_is_a_total_order(deck):
    a, b, c = (rank_hand(deck[i:i + 3], N211) for i in (0, 3, 6))
    assert compare(a, b) == -compare(b, a)
    assert compare(a, a) == 0
    if compare(a, b) >= 0 and compare(b, c) >= 0:
        assert compare(a, c) >= 0


def test_isomorphic_hands_share_canonical_form():
    x = canonicalize([cards("AcTc"), cards("9d"), cards("2c")], N211)
    y = canonicalize([cards("AhTh"), cards("9s"), cards("2h")], N211)
    assert x == y
    assert x.prefix(2, N211) == y.prefix(2, N211)
    single = canonicalize([cards("AdTd")], N211)
    assert {c % 4 for c in single.cards()} == {0}


def test_canonicalize_idempotent_and_orbit_constant():
    cfg = preset("numeral211")
    rng = random.Random(1)
    perms = list(itertools.permutations(range(4)))
    for _ in range(2000):
        deck = rng.sample(range(40), 4)
        groups = [tuple(deck[:2]), (deck[2],), (deck[3],)]
        canon = canonicalize(groups, cfg)
        assert canonicalize(canon.rounds, cfg) == canon
        for perm in perms:
            assert canonicalize(permute_suits(groups, perm, 4), cfg) == canon


def brute_force_orbits(cfg: GameConfig, round_index: int):
    """Set of suit orbits of raw hands, each orbit as a frozenset of sorted-group hands."""
    S = cfg.num_suits
    orbits = set()
    norm = lambda groups: tuple(tuple(sorted(g)) for g in groups)
    for hand in enumerate_raw_hands(cfg, round_index):
        orbit = frozenset(norm(permute_suits(hand, p, S)) for p in itertools.permutations(range(S)))
        orbits.add(orbit)
    return orbits


@pytest.mark.parametrize("cfg", [
    GameConfig(2, 4, 2, (1, 1), 1, (1, 1, 1), 1, 1, name="two-rank"),
    GameConfig(3, 2, 1, (1, 1), 1, (1, 1, 1), 1, 1, name="two-suit"),
    GameConfig(3, 3, 2, (1,), 1, (1, 1), 1, 1, name="three-suit"),
], ids=lambda c: c.name)
def test_class_counts_match_brute_force_orbits(cfg):
    for r in range(cfg.num_rounds):
        orbits = brute_force_orbits(cfg, r)
        classes = enumerate_classes(cfg, r)
        assert len(classes) == len(orbits) == count_isomorphism_classes(cfg, r)
        sizes = sorted(len(o) for o in orbits)
        assert sorted(orbit_size(h, cfg) for h in classes) == sizes
        assert sum(orbit_size(h, cfg) for h in classes) == cfg.count_player_hands(r)


def test_kuhn_has_three_classes(kuhn):
    assert count_isomorphism_classes(kuhn, 0) == 3


def test_numeral_class_counts():
    # enumeration results of this implementation (the published figures differ; see notes)
    assert [count_isomorphism_classes(N211, r) for r in range(2)] == [100, 2260]
    n20 = preset("numeral20")
    assert [count_isomorphism_classes(n20, r) for r in range(3)] == [25, 255, 3185]
    for r in range(3):
        assert sum(orbit_size(h, n20) for h in enumerate_classes(n20, r)) == n20.count_player_hands(r)


def naive_outcome_counts(hole, board, cfg):
    """Independent double loop over opponent holes."""
    used = set(hole) | set(board)
    own = rank_hand(list(hole) + list(board), cfg)
    counts = [0, 0, 0]
    left = [c for c in range(cfg.deck_size) if c not in used]
    for opp in itertools.combinations(left, cfg.num_hole_cards):
        res = compare(own, rank_hand(list(opp) + list(board), cfg))
        counts[res + 1] += 1
    return counts


def test_terminal_vectors_match_naive_oracle_sample():
    cfg = preset("numeral20")
    rng = random.Random(3)
    for _ in range(100):
        deck = rng.sample(range(20), 4)
        hole, board = deck[:2], deck[2:]
        assert list(terminal_outcome_counts(hole, board, cfg)) == naive_outcome_counts(hole, board, cfg)


def test_kuhn_queen_vector(kuhn):
    np.testing.assert_allclose(terminal_outcome_vector([1], [], kuhn), [0.5, 0.0, 0.5])
    np.testing.assert_allclose(terminal_outcome_vector([2], [], kuhn), [0.0, 0.0, 1.0])


def test_unbeatable_hand_never_loses():
    cfg = preset("numeral20")
    # A-T-9 of spades is the top straight flush in a 7..A deck
    v = terminal_outcome_vector(cfg.parse_cards("AsTs"), cfg.parse_cards("9s8c"), cfg)
    assert v[0] == 0.0
    assert v[2] > 0.9


def test_strength_tensor_shapes_and_consistency():
    cfg = preset("numeral20")
    t = strength_tensor([cfg.parse_cards("AcTc"), cfg.parse_cards("9d"), cfg.parse_cards("8c")], cfg)
    assert t.shape == (3, 3)
    np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-12)
    # the middle row is the uniform mean of the terminal rows below it
    hole, flop = cfg.parse_cards("AcTc"), cfg.parse_cards("9d")
    kids = [strength_tensor([hole, flop, (c,)], cfg)[2] for c in range(20) if c not in hole + flop]
    np.testing.assert_allclose(t[1], np.mean(kids, axis=0), atol=1e-12)


def test_three_round_toy_rows():
    cfg = toy_three_round()
    for r in range(3):
        tensors = class_strength_tensors(cfg, r)
        assert tensors.shape[1:] == (r + 1, 3)
        np.testing.assert_allclose(tensors.sum(axis=2), 1.0, atol=1e-12)


def test_strength_csv(tmp_path, kuhn):
    path = tmp_path / "s.csv"
    write_strength_csv(path, kuhn, 0)
    lines = path.read_text().splitlines()
    assert lines[0] == "canonical_hand_id,round,w_l,w_d,w_w"
    assert len(lines) == 4
    assert lines[2].startswith("1,1,0.5,0,0.5")
