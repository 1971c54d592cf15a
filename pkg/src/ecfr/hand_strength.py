"""Hand ranking, suit canonicalization and exhaustive-rollout strength tensors.

Hands are ranked on their best ``min(3, n)`` cards. For three-card hands the
category order is straight flush > three of a kind > straight > flush > pair
> high card; a straight is three consecutive rank indices (no wrap-around).
"""

from __future__ import annotations

import csv
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cards import Card, GameConfig

HIGH_CARD, PAIR, FLUSH, STRAIGHT, TRIPS, STRAIGHT_FLUSH = range(6)
CATEGORY_NAMES = ("high card", "pair", "flush", "straight", "three of a kind", "straight flush")

LOSE, DRAW, WIN = -1, 0, 1


@dataclass(frozen=True, order=True)
class HandRank:
    category: int
    tiebreak: tuple[int, ...]

    @property
    def name(self) -> str:
        return CATEGORY_NAMES[self.category]


def _ids(cards: Iterable[int | Card], config: GameConfig) -> list[int]:
    return [c.to_id(config) if isinstance(c, Card) else int(c) for c in cards]


def _rank_exact(cards: Sequence[int], num_suits: int) -> HandRank:
    ranks = sorted((c // num_suits for c in cards), reverse=True)
    if len(ranks) == 1:
        return HandRank(HIGH_CARD, (ranks[0],))
    if len(ranks) == 2:
        if ranks[0] == ranks[1]:
            return HandRank(PAIR, (ranks[0],))
        return HandRank(HIGH_CARD, tuple(ranks))
    suited = len({c % num_suits for c in cards}) == 1
    counts = Counter(ranks)
    straight = len(counts) == 3 and ranks[0] - ranks[2] == 2
    if straight and suited:
        return HandRank(STRAIGHT_FLUSH, (ranks[0],))
    if len(counts) == 1:
        return HandRank(TRIPS, (ranks[0],))
    if straight:
        return HandRank(STRAIGHT, (ranks[0],))
    if suited:
        return HandRank(FLUSH, tuple(ranks))
    if len(counts) == 2:
        pair = next(r for r, n in counts.items() if n == 2)
        kicker = next(r for r, n in counts.items() if n == 1)
        return HandRank(PAIR, (pair, kicker))
    return HandRank(HIGH_CARD, tuple(ranks))


def rank_hand(cards: Iterable[int | Card], config: GameConfig) -> HandRank:
    """Best hand over every ``config.hand_size`` subset of ``cards``."""
    ids = _ids(cards, config)
    k = config.hand_size
    if len(ids) < k:
        raise ValueError(f"need at least {k} cards to rank a hand, got {len(ids)}")
    return max(_rank_exact(sub, config.num_suits) for sub in itertools.combinations(ids, k))


def compare(a: HandRank, b: HandRank) -> int:
    """WIN (1), DRAW (0) or LOSE (-1) from ``a``'s point of view."""
    return (a > b) - (a < b)


def rank_value(rank: HandRank, num_ranks: int) -> int:
    """Order-preserving integer encoding of a HandRank."""
    digits = list(rank.tiebreak) + [0] * (3 - len(rank.tiebreak))
    value = rank.category
    for d in digits:
        value = value * num_ranks + d
    return value


class RankTable:
    """Vectorised best-hand values for one game configuration."""

    def __init__(self, config: GameConfig):
        self.config = config
        n = config.deck_size
        self.k = config.hand_size
        shape = (n,) * self.k
        table = np.full(shape, -1, dtype=np.int64)
        for combo in itertools.combinations(range(n), self.k):
            v = rank_value(_rank_exact(combo, config.num_suits), config.num_ranks)
            for perm in itertools.permutations(combo):
                table[perm] = v
        self.table = table

    def values(self, cards: np.ndarray) -> np.ndarray:
        """Best-hand values for card arrays of shape ``[..., c]`` with ``c >= k``."""
        cards = np.asarray(cards)
        c = cards.shape[-1]
        best = None
        for idx in itertools.combinations(range(c), self.k):
            v = self.table[tuple(cards[..., i] for i in idx)]
            best = v if best is None else np.maximum(best, v)
        return best


@lru_cache(maxsize=None)
def rank_table(config: GameConfig) -> RankTable:
    return RankTable(config)


# ---------------------------------------------------------------------------
# suit isomorphism


@dataclass(frozen=True)
class CanonicalHand:
    """Per-round card groups with suits relabelled by importance.

    ``perm[old_suit]`` gives the canonical suit index of an original suit.
    """

    rounds: tuple[tuple[int, ...], ...]
    perm: tuple[int, ...] = field(default=(), compare=False, hash=False)

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    def cards(self) -> tuple[int, ...]:
        return tuple(c for group in self.rounds for c in group)

    def prefix(self, num_rounds: int, config: GameConfig) -> "CanonicalHand":
        return canonicalize(self.rounds[:num_rounds], config)

    def to_text(self, config: GameConfig) -> str:
        return "|".join("".join(config.card_str(c) for c in group) for group in self.rounds)


def _suit_keys(rounds: Sequence[Sequence[int]], num_suits: int):
    content = [[[] for _ in rounds] for _ in range(num_suits)]
    for i, group in enumerate(rounds):
        for c in group:
            content[c % num_suits][i].append(c // num_suits)
    keys = []
    for s in range(num_suits):
        per_round = tuple(tuple(sorted(rs, reverse=True)) for rs in content[s])
        keys.append((sum(len(g) for g in per_round), per_round))
    return keys


def canonicalize(rounds: Sequence[Iterable[int | Card]], config: GameConfig) -> CanonicalHand:
    """Relabel suits so that suit-isomorphic hands share one representative.

    Suits are ordered by card count (descending), ties broken by the
    round-by-round rank content compared lexicographically (descending).
    """
    S = config.num_suits
    groups = [_ids(g, config) for g in rounds]
    keys = _suit_keys(groups, S)
    order = sorted(range(S), key=lambda s: keys[s], reverse=True)
    perm = [0] * S
    for new, old in enumerate(order):
        perm[old] = new
    out = tuple(
        tuple(sorted(((c // S) * S + perm[c % S] for c in g), reverse=True)) for g in groups
    )
    return CanonicalHand(out, tuple(perm))


def orbit_size(hand: CanonicalHand, config: GameConfig) -> int:
    """Number of raw hands isomorphic to ``hand`` (orbit under suit permutations)."""
    keys = _suit_keys(hand.rounds, config.num_suits)
    denom = 1
    for mult in Counter(keys).values():
        denom *= math.factorial(mult)
    return math.factorial(config.num_suits) // denom


def _extensions(config: GameConfig, used: Iterable[int], k: int):
    left = [c for c in range(config.deck_size) if c not in set(used)]
    return itertools.combinations(left, k)


@lru_cache(maxsize=None)
def enumerate_classes(config: GameConfig, round_index: int) -> tuple[CanonicalHand, ...]:
    """Canonical hands of one player at a 0-based round, in stable id order."""
    if round_index == 0:
        found = {
            canonicalize([h], config)
            for h in itertools.combinations(range(config.deck_size), config.num_hole_cards)
        }
    else:
        k = config.community_per_round[round_index - 1]
        found = set()
        for rep in enumerate_classes(config, round_index - 1):
            for ext in _extensions(config, rep.cards(), k):
                found.add(canonicalize(rep.rounds + (ext,), config))
    return tuple(sorted(found, key=lambda h: h.rounds))


@lru_cache(maxsize=None)
def class_index(config: GameConfig, round_index: int) -> dict[CanonicalHand, int]:
    return {h: i for i, h in enumerate(enumerate_classes(config, round_index))}


def count_isomorphism_classes(config: GameConfig, round_index: int) -> int:
    return len(enumerate_classes(config, round_index))


def enumerate_raw_hands(config: GameConfig, round_index: int):
    """Every (hole, community...) view of one player at a round, as card groups."""
    def rec(prefix, used, r):
        if r == round_index:
            yield prefix
            return
        for ext in _extensions(config, used, config.community_per_round[r]):
            yield from rec(prefix + (ext,), used | set(ext), r + 1)

    for hole in itertools.combinations(range(config.deck_size), config.num_hole_cards):
        yield from rec((hole,), set(hole), 0)


# ---------------------------------------------------------------------------
# strength tensors


def _opponent_holes(config: GameConfig, blocked: Iterable[int]) -> np.ndarray:
    left = [c for c in range(config.deck_size) if c not in set(blocked)]
    return np.array(list(itertools.combinations(left, config.num_hole_cards)), dtype=np.int64)


def terminal_outcome_counts(hole: Sequence[int], board: Sequence[int], config: GameConfig) -> np.ndarray:
    """Integer [lose, draw, win] counts over every card-legal opponent hole."""
    hole, board = list(hole), list(board)
    table = rank_table(config)
    own = table.values(np.array(hole + board))
    opp = _opponent_holes(config, hole + board)
    board_arr = np.broadcast_to(np.array(board, dtype=np.int64), (len(opp), len(board)))
    vals = table.values(np.concatenate([opp, board_arr], axis=1))
    return np.array([(vals > own).sum(), (vals == own).sum(), (vals < own).sum()], dtype=np.int64)


def terminal_outcome_vector(hole, board, config: GameConfig) -> np.ndarray:
    """[w_l, w_d, w_w] of a last-round hand against a uniform opponent range."""
    if len(list(board)) != sum(config.community_per_round):
        raise ValueError("terminal_outcome_vector needs the complete board")
    counts = terminal_outcome_counts(_ids(hole, config), _ids(board, config), config)
    return counts / counts.sum()


class StrengthCalculator:
    """Memoised outcome vectors keyed by canonical hand."""

    def __init__(self, config: GameConfig):
        self.config = config
        self._memo: dict[CanonicalHand, np.ndarray] = {}

    def outcome(self, hand: CanonicalHand) -> np.ndarray:
        """Outcome vector of a hand at its own round (rollout when not terminal)."""
        got = self._memo.get(hand)
        if got is not None:
            return got
        cfg = self.config
        if hand.num_rounds == cfg.num_rounds:
            hole, board = hand.rounds[0], [c for g in hand.rounds[1:] for c in g]
            counts = terminal_outcome_counts(hole, board, cfg)
            vec = counts / counts.sum()
        else:
            vec = np.zeros(3)
            n = 0
            for final in self._rollouts(hand.rounds, hand.num_rounds):
                vec += self.outcome(canonicalize(final, cfg))
                n += 1
            vec /= n
        self._memo[hand] = vec
        return vec

    def _rollouts(self, rounds, r):
        if r == self.config.num_rounds:
            yield rounds
            return
        used = [c for g in rounds for c in g]
        for ext in _extensions(self.config, used, self.config.community_per_round[r - 1]):
            yield from self._rollouts(rounds + (ext,), r + 1)

    def tensor(self, rounds: Sequence[Iterable[int | Card]]) -> np.ndarray:
        hand = canonicalize(rounds, self.config)
        return np.stack([self.outcome(hand.prefix(r + 1, self.config)) for r in range(hand.num_rounds)])


@lru_cache(maxsize=None)
def strength_calculator(config: GameConfig) -> StrengthCalculator:
    return StrengthCalculator(config)


def strength_tensor(rounds: Sequence[Iterable[int | Card]], config: GameConfig) -> np.ndarray:
    """Stacked [w_l, w_d, w_w] rows for the hand and each of its predecessors."""
    return strength_calculator(config).tensor(rounds)


def class_strength_tensors(config: GameConfig, round_index: int) -> np.ndarray:
    """Strength tensors of every class at a round, shape [n_classes, round + 1, 3]."""
    calc = strength_calculator(config)
    return np.stack([calc.tensor(h.rounds) for h in enumerate_classes(config, round_index)])


def write_strength_csv(path: str | Path, config: GameConfig, round_index: int) -> None:
    tensors = class_strength_tensors(config, round_index)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["canonical_hand_id", "round", "w_l", "w_d", "w_w"])
        for i, t in enumerate(tensors):
            for r, row in enumerate(t):
                w.writerow([i, r + 1] + [f"{x:.17g}" for x in row])
