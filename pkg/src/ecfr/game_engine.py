"""Two-player limit poker engine: histories, infosets, info-blocks and deals.

Players are 0 and 1; player 0 acts first in every betting round. Actions are
single characters: ``f`` fold, ``c`` check/call, ``r`` bet/raise. A betting
trace is one action string per round.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Iterator

from .cards import GameConfig
from .hand_strength import CanonicalHand, canonicalize, compare, rank_hand

FOLD, CALL, RAISE = "f", "c", "r"
CHANCE = -1
TERMINAL = -2


class IllegalActionError(ValueError):
    pass


@dataclass(frozen=True)
class BettingState:
    """Public betting state, independent of the cards."""

    round: int = 0
    trace: tuple[str, ...] = ("",)
    contrib: tuple[int, int] = (0, 0)
    bets: int = 0
    folded: int = -1  # player who folded, or -1
    closed: bool = False  # current round's betting is over

    @classmethod
    def initial(cls, config: GameConfig) -> "BettingState":
        return cls(contrib=(config.ante, config.ante))

    def to_act(self) -> int:
        acts = self.trace[self.round]
        return len(acts) % 2

    def is_terminal(self, config: GameConfig) -> bool:
        return self.folded >= 0 or (self.closed and self.round == config.num_rounds - 1)

    def needs_deal(self, config: GameConfig) -> bool:
        return self.folded < 0 and self.closed and self.round < config.num_rounds - 1

    def facing_bet(self) -> bool:
        return self.contrib[0] != self.contrib[1]

    def legal_actions(self, config: GameConfig) -> tuple[str, ...]:
        if self.closed or self.folded >= 0:
            raise IllegalActionError("no betting actions: round closed or hand over")
        can_raise = self.bets < config.max_raises_per_round
        if self.facing_bet():
            return (FOLD, CALL, RAISE) if can_raise else (FOLD, CALL)
        return (CALL, RAISE) if can_raise else (CALL,)

    def apply(self, action: str, config: GameConfig) -> "BettingState":
        if action not in self.legal_actions(config):
            raise IllegalActionError(f"action {action!r} not legal after trace {self.trace_text()!r}")
        p = self.to_act()
        contrib = list(self.contrib)
        trace = list(self.trace)
        trace[self.round] += action
        if action == FOLD:
            return BettingState(self.round, tuple(trace), self.contrib, self.bets, folded=p)
        if action == CALL:
            was_facing = self.facing_bet()
            contrib[p] = contrib[1 - p]
            # check-check or a call closes the round
            closed = was_facing or len(trace[self.round]) >= 2
            return BettingState(self.round, tuple(trace), tuple(contrib), self.bets, closed=closed)
        contrib[p] = contrib[1 - p] + config.bet_size_per_round[self.round]
        return BettingState(self.round, tuple(trace), tuple(contrib), self.bets + 1)

    def next_round(self) -> "BettingState":
        return BettingState(self.round + 1, self.trace + ("",), self.contrib, 0)

    def trace_text(self) -> str:
        return "/".join(self.trace)


@dataclass(frozen=True)
class HistoryNode:
    """A game-tree position. ``holes`` is empty until the opening deal."""

    config: GameConfig
    holes: tuple[tuple[int, ...], ...] = ()
    board: tuple[tuple[int, ...], ...] = ()
    betting: BettingState | None = None

    @property
    def to_act(self) -> int:
        b = self.betting
        if not self.holes:
            return CHANCE
        if b.is_terminal(self.config):
            return TERMINAL
        if b.needs_deal(self.config):
            return CHANCE
        return b.to_act()

    @property
    def is_terminal(self) -> bool:
        return self.to_act == TERMINAL

    def used_cards(self) -> set[int]:
        return {c for g in self.holes for c in g} | {c for g in self.board for c in g}


def initial_node(config: GameConfig) -> HistoryNode:
    return HistoryNode(config, betting=BettingState.initial(config))


def legal_actions(node: HistoryNode) -> tuple[str, ...]:
    if node.to_act < 0:
        raise IllegalActionError("legal_actions needs a player node (got chance or terminal)")
    return node.betting.legal_actions(node.config)


def chance_outcomes(node: HistoryNode) -> list[tuple[tuple, float]]:
    """Outcomes of a chance node with uniform probabilities."""
    cfg = node.config
    if node.to_act != CHANCE:
        raise IllegalActionError("not a chance node")
    if not node.holes:
        H = cfg.num_hole_cards
        outs = []
        for h0 in itertools.combinations(range(cfg.deck_size), H):
            rest = [c for c in range(cfg.deck_size) if c not in h0]
            outs.extend((h0, h1) for h1 in itertools.combinations(rest, H))
    else:
        used = node.used_cards()
        left = [c for c in range(cfg.deck_size) if c not in used]
        k = cfg.community_per_round[node.betting.round]
        outs = list(itertools.combinations(left, k))
    p = 1.0 / len(outs)
    return [(o, p) for o in outs]


def apply_action(node: HistoryNode, action) -> HistoryNode:
    cfg = node.config
    who = node.to_act
    if who == TERMINAL:
        raise IllegalActionError("cannot act at a terminal node")
    if who == CHANCE:
        if not node.holes:
            h0, h1 = (tuple(h) for h in action)
            cards = list(h0) + list(h1)
            if len(h0) != cfg.num_hole_cards or len(h1) != cfg.num_hole_cards:
                raise IllegalActionError("wrong number of hole cards")
            if len(set(cards)) != len(cards) or not all(0 <= c < cfg.deck_size for c in cards):
                raise IllegalActionError(f"illegal deal {action!r}")
            return HistoryNode(cfg, (h0, h1), (), node.betting)
        cards = tuple(action)
        k = cfg.community_per_round[node.betting.round]
        used = node.used_cards()
        if len(cards) != k or len(set(cards)) != k or any(c in used or not 0 <= c < cfg.deck_size for c in cards):
            raise IllegalActionError(f"illegal community cards {action!r}")
        return HistoryNode(cfg, node.holes, node.board + (cards,), node.betting.next_round())
    return HistoryNode(cfg, node.holes, node.board, node.betting.apply(action, cfg))


def utility(node: HistoryNode, player: int) -> int:
    """Signed chip result for ``player`` at a terminal node."""
    if not node.is_terminal:
        raise IllegalActionError("utility is only defined at terminal nodes")
    b = node.betting
    if b.folded >= 0:
        loser = b.folded
        amount = b.contrib[loser]
        return -amount if player == loser else amount
    board = [c for g in node.board for c in g]
    r0 = rank_hand(list(node.holes[0]) + board, node.config)
    r1 = rank_hand(list(node.holes[1]) + board, node.config)
    outcome = compare(r0, r1)
    won = b.contrib[0] * outcome
    return won if player == 0 else -won


@dataclass(frozen=True)
class InfoSetKey:
    player: int
    own_hole: tuple[int, ...]
    community: tuple[tuple[int, ...], ...]
    trace: tuple[str, ...]

    @property
    def round(self) -> int:
        return len(self.trace) - 1

    def hand(self) -> CanonicalHand:
        return CanonicalHand((self.own_hole,) + self.community)

    def to_text(self, config: GameConfig) -> str:
        cards = self.hand().to_text(config)
        return f"P{self.player + 1}:{cards}:{'/'.join(self.trace)}"


@dataclass(frozen=True)
class InfoBlockKey:
    player: int
    round: int
    nonchance_trace: tuple[str, ...]

    def to_text(self) -> str:
        return f"P{self.player + 1}:r{self.round + 1}:{'/'.join(self.nonchance_trace)}"


def infoset_key(node: HistoryNode, player: int) -> InfoSetKey:
    if node.to_act != player:
        raise IllegalActionError(f"player {player} is not to act")
    hand = canonicalize((node.holes[player],) + node.board, node.config)
    return InfoSetKey(player, hand.rounds[0], hand.rounds[1:], node.betting.trace)


def infoblock_key(key: InfoSetKey) -> InfoBlockKey:
    """Drop the cards; infosets sharing a betting trace form one block."""
    return InfoBlockKey(key.player, key.round, key.trace)


@dataclass(frozen=True)
class Deal:
    holes: tuple[tuple[int, ...], tuple[int, ...]]
    board: tuple[tuple[int, ...], ...]


def enumerate_deals(config: GameConfig) -> Iterator[Deal]:
    """Every complete deal once, in lexicographic order (each equally likely)."""
    n, H = config.deck_size, config.num_hole_cards

    def boards(used, r):
        if r == len(config.community_per_round):
            yield ()
            return
        left = [c for c in range(n) if c not in used]
        for ext in itertools.combinations(left, config.community_per_round[r]):
            for tail in boards(used | set(ext), r + 1):
                yield (ext,) + tail

    for h0 in itertools.combinations(range(n), H):
        rest = [c for c in range(n) if c not in h0]
        for h1 in itertools.combinations(rest, H):
            for board in boards(set(h0) | set(h1), 0):
                yield Deal((h0, h1), board)


def sample_deal(config: GameConfig, seed: int | random.Random) -> Deal:
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    deck = rng.sample(range(config.deck_size), config.cards_dealt)
    H = config.num_hole_cards
    h0, h1 = tuple(sorted(deck[:H])), tuple(sorted(deck[H : 2 * H]))
    board, i = [], 2 * H
    for k in config.community_per_round:
        board.append(tuple(sorted(deck[i : i + k])))
        i += k
    return Deal((h0, h1), tuple(board))


def deal_node(config: GameConfig, deal: Deal) -> HistoryNode:
    """Root betting node of a deal (community cards revealed as rounds advance)."""
    return apply_action(initial_node(config), deal.holes)


def play(config: GameConfig, deal: Deal, actions: str) -> HistoryNode:
    """Replay a betting string (``/`` optional between rounds) on a deal."""
    node = deal_node(config, deal)
    for a in actions.replace("/", ""):
        while node.to_act == CHANCE:
            node = apply_action(node, deal.board[node.betting.round])
        node = apply_action(node, a)
    while node.to_act == CHANCE:
        node = apply_action(node, deal.board[node.betting.round])
    return node
