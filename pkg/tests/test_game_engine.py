import itertools
import math
import random

import pytest

from ecfr.cards import GameConfig, load_config, parse_config_text, preset
from ecfr.game_engine import (
    CALL,
    CHANCE,
    FOLD,
    RAISE,
    TERMINAL,
    Deal,
    IllegalActionError,
    apply_action,
    chance_outcomes,
    deal_node,
    enumerate_deals,
    infoblock_key,
    infoset_key,
    initial_node,
    legal_actions,
    play,
    sample_deal,
    utility,
)
from ecfr.hand_strength import canonicalize

from conftest import tiny_config

J, Q, K = 0, 1, 2

# P1 chips for every Kuhn betting line, written out by hand: (P1 card, P2 card) -> value
KUHN_PAYOFFS = {
    "cc": lambda a, b: 1 if a > b else -1,
    "crf": lambda a, b: -1,
    "crc": lambda a, b: 2 if a > b else -2,
    "rf": lambda a, b: 1,
    "rc": lambda a, b: 2 if a > b else -2,
}


def kuhn_deal(a, b):
    return Deal(((a,), (b,)), ())


def test_kuhn_first_actions(kuhn):
    node = deal_node(kuhn, kuhn_deal(K, Q))
    assert node.to_act == 0
    assert set(legal_actions(node)) == {CALL, RAISE}  # check or bet
    after_check = apply_action(node, CALL)
    assert after_check.to_act == 1
    facing = apply_action(node, RAISE)
    assert set(legal_actions(facing)) == {FOLD, CALL}


def test_kuhn_payoff_table(kuhn):
    for a, b in itertools.permutations((J, Q, K), 2):
        for line, pay in KUHN_PAYOFFS.items():
            z = play(kuhn, kuhn_deal(a, b), line)
            assert z.to_act == TERMINAL
            assert utility(z, 0) == pay(a, b), (a, b, line)
            assert utility(z, 0) + utility(z, 1) == 0


def test_kuhn_named_examples(kuhn):
    assert utility(play(kuhn, kuhn_deal(K, Q), "cc"), 0) == 1
    assert utility(play(kuhn, kuhn_deal(J, K), "rf"), 0) == 1
    assert utility(play(kuhn, kuhn_deal(J, K), "rc"), 0) == -2


def test_kuhn_has_six_deals(kuhn):
    deals = list(enumerate_deals(kuhn))
    assert len(deals) == 6
    assert len(set(deals)) == 6


def test_raise_cap_numeral211():
    cfg = preset("numeral211")
    deal = sample_deal(cfg, 3)
    node = play(cfg, deal, "rrrr")
    assert RAISE not in legal_actions(node)
    assert set(legal_actions(node)) == {FOLD, CALL}


def test_fold_terminal_loses_contribution():
    cfg = preset("numeral211")
    z = play(cfg, sample_deal(cfg, 1), "rrf")
    assert z.to_act == TERMINAL
    # P1 bet 10 then folded to a raise: loses ante 5 + 10
    assert utility(z, 0) == -15
    assert utility(z, 1) == 15


def test_last_round_check_check_is_showdown():
    cfg = preset("numeral20")
    deal = sample_deal(cfg, 7)
    z = play(cfg, deal, "cc/cc/cc")
    assert z.to_act == TERMINAL
    assert z.betting.folded == -1
    assert abs(utility(z, 0)) in (0, 5)


def test_round_advances_through_chance():
    cfg = preset("numeral20")
    deal = sample_deal(cfg, 2)
    node = deal_node(cfg, deal)
    node = apply_action(node, CALL)
    node = apply_action(node, CALL)
    assert node.to_act == CHANCE
    outs = chance_outcomes(node)
    assert len(outs) == cfg.deck_size - 4
    assert math.isclose(sum(p for _, p in outs), 1.0, abs_tol=1e-12)
    node = apply_action(node, deal.board[0])
    assert node.to_act == 0 and node.betting.round == 1


def test_illegal_actions_rejected(kuhn):
    node = deal_node(kuhn, kuhn_deal(J, Q))
    with pytest.raises(IllegalActionError):
        apply_action(node, FOLD)  # nothing to fold to
    with pytest.raises(IllegalActionError):
        apply_action(initial_node(kuhn), ((0,), (0,)))  # same card twice
    z = play(kuhn, kuhn_deal(J, Q), "cc")
    with pytest.raises(IllegalActionError):
        legal_actions(z)
    with pytest.raises(IllegalActionError):
        utility(node, 0)


def test_root_chance_probabilities_sum_to_one(tiny):
    outs = chance_outcomes(initial_node(tiny))
    assert len(outs) == 6 * 5
    assert math.isclose(sum(p for _, p in outs), 1.0, abs_tol=1e-12)


@pytest.mark.parametrize("cfg", [preset("kuhn"), tiny_config(1), tiny_config(2)], ids=lambda c: c.name)
def test_deal_enumeration_matches_binomials(cfg):
    deals = list(enumerate_deals(cfg))
    assert len(deals) == cfg.count_deals()
    assert len(set(deals)) == len(deals)


def test_per_player_hand_counts():
    cfg = preset("numeral211")
    assert cfg.count_player_hands(0) == math.comb(40, 2) == 780
    assert cfg.count_player_hands(1) == 780 * 38 == 29640
    assert cfg.count_player_hands(2) == 780 * 38 * 37 == 1096680


def test_sample_deal_reproducible():
    cfg = preset("numeral211")
    assert sample_deal(cfg, 42) == sample_deal(cfg, 42)
    assert sample_deal(cfg, random.Random(5)) == sample_deal(cfg, random.Random(5))
    d = sample_deal(cfg, 9)
    cards = [c for h in d.holes for c in h] + [c for g in d.board for c in g]
    assert len(set(cards)) == cfg.cards_dealt


def test_infoset_key_ignores_opponent_cards(kuhn):
    a = play(kuhn, kuhn_deal(Q, J), "c")
    b = play(kuhn, kuhn_deal(Q, K), "c")
    assert infoset_key(a, 1) != infoset_key(b, 1)
    a = play(kuhn, kuhn_deal(Q, J), "")
    b = play(kuhn, kuhn_deal(Q, K), "")
    assert infoset_key(a, 0) == infoset_key(b, 0)


def test_blocks_group_by_betting_trace():
    cfg = preset("numeral211")
    c = cfg.parse_cards
    # same trace, same P1 cards, different opponent cards -> same infoset
    h = play(cfg, Deal((c("8h8d"), c("9sTs")), (c("2s"), c("8c"))), "rrc/cr")
    h1 = play(cfg, Deal((c("8h8d"), c("7s6s")), (c("2s"), c("8c"))), "rrc/cr")
    # same trace, different own cards -> other infoset, same block
    h2 = play(cfg, Deal((c("7h5d"), c("8s4s")), (c("Ts"), c("3h"))), "rrc/cr")
    # other trace -> other block
    hd = play(cfg, Deal((c("8h8d"), c("9sTs")), (c("2s"), c("8c"))), "rc/c")
    k, k1, k2 = infoset_key(h, 0), infoset_key(h1, 0), infoset_key(h2, 0)
    assert k == k1
    assert k != k2
    assert infoblock_key(k) == infoblock_key(k2)
    kd = infoset_key(hd, 1)
    assert infoblock_key(kd) != infoblock_key(k)
    assert infoblock_key(k).nonchance_trace == ("rrc", "cr")


def test_kuhn_root_infosets_share_one_block(kuhn):
    keys = {infoset_key(deal_node(kuhn, kuhn_deal(a, b)), 0) for a, b in itertools.permutations(range(3), 2)}
    assert len(keys) == 3
    assert len({infoblock_key(k) for k in keys}) == 1


def test_suit_permuted_hands_share_keys():
    cfg = preset("numeral20")
    rng = random.Random(0)
    for _ in range(50):
        d = sample_deal(cfg, rng)
        node = play(cfg, d, "cc/")
        while node.to_act == CHANCE:
            node = apply_action(node, d.board[node.betting.round])
        base = infoset_key(node, 0)
        for perm in itertools.permutations(range(4)):
            relabel = lambda g: tuple(sorted((x // 4) * 4 + perm[x % 4] for x in g))
            d2 = Deal((relabel(d.holes[0]), relabel(d.holes[1])), tuple(relabel(g) for g in d.board))
            n2 = play(cfg, d2, "cc/")
            while n2.to_act == CHANCE:
                n2 = apply_action(n2, d2.board[n2.betting.round])
            assert infoset_key(n2, 0) == base


def test_config_text_round_trip(tmp_path):
    cfg = preset("numeral211")
    path = tmp_path / "game.cfg"
    path.write_text(cfg.to_text())
    assert load_config(path) == cfg
    custom = parse_config_text("ranks = 5\nsuits=4\nhole_cards=2\ncommunity=\"1,1\"\nante=5\nbets=10,20,20\nmax_raises=4\n")
    assert custom.num_rounds == 3 and custom.blind_unit == 5
    with pytest.raises(ValueError):
        parse_config_text("ranks = 5\n")
    with pytest.raises(ValueError):
        GameConfig(num_ranks=2, num_suits=1, num_hole_cards=2, community_per_round=(1,), ante=1,
                   bet_size_per_round=(1, 1), max_raises_per_round=1, blind_unit=1)
