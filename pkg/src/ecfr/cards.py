"""Cards, deck layout and game configurations for the hold'em family.

Cards are plain integers internally: ``card = rank * num_suits + suit``.
:class:`Card` is the readable wrapper used at API boundaries.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

RANK_ALPHABET = "23456789TA"
SUIT_CHARS = "shdc"


@dataclass(frozen=True, order=True)
class Card:
    rank: int
    suit: int

    def to_id(self, config: "GameConfig") -> int:
        return self.rank * config.num_suits + self.suit

    @classmethod
    def from_id(cls, card_id: int, config: "GameConfig") -> "Card":
        return cls(card_id // config.num_suits, card_id % config.num_suits)


@dataclass(frozen=True)
class GameConfig:
    num_ranks: int
    num_suits: int
    num_hole_cards: int
    community_per_round: tuple[int, ...]
    ante: int
    bet_size_per_round: tuple[int, ...]
    max_raises_per_round: int
    blind_unit: float
    name: str = "custom"
    rank_chars: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "community_per_round", tuple(self.community_per_round))
        object.__setattr__(self, "bet_size_per_round", tuple(self.bet_size_per_round))
        if not self.rank_chars:
            if self.num_ranks > len(RANK_ALPHABET):
                raise ValueError(f"no default rank characters for {self.num_ranks} ranks")
            object.__setattr__(self, "rank_chars", RANK_ALPHABET[-self.num_ranks:])
        if self.num_ranks < 1 or self.num_suits < 1 or self.num_hole_cards < 1:
            raise ValueError("ranks, suits and hole cards must be >= 1")
        if self.num_suits > len(SUIT_CHARS):
            raise ValueError(f"at most {len(SUIT_CHARS)} suits are supported")
        if self.num_hole_cards > 2:
            raise ValueError("hole_cards > 2 is not supported by the showdown evaluator")
        if any(c < 0 for c in self.community_per_round):
            raise ValueError("community counts must be >= 0")
        if len(self.bet_size_per_round) != self.num_rounds:
            raise ValueError(
                f"need one bet size per round ({self.num_rounds}), got {len(self.bet_size_per_round)}"
            )
        if any(b <= 0 for b in self.bet_size_per_round):
            raise ValueError("bet sizes must be > 0")
        if self.max_raises_per_round < 1 or self.ante < 0:
            raise ValueError("max_raises must be >= 1 and ante >= 0")
        if self.cards_dealt > self.deck_size:
            raise ValueError(f"deal needs {self.cards_dealt} cards but the deck has {self.deck_size}")
        if len(self.rank_chars) != self.num_ranks:
            raise ValueError("rank_chars must have one character per rank")
        if self.blind_unit <= 0:
            raise ValueError("blind_unit must be > 0")

    @property
    def num_rounds(self) -> int:
        return len(self.community_per_round) + 1

    @property
    def deck_size(self) -> int:
        return self.num_ranks * self.num_suits

    @property
    def cards_dealt(self) -> int:
        return 2 * self.num_hole_cards + sum(self.community_per_round)

    @property
    def cards_at_showdown(self) -> int:
        """Cards available to one player at the last round."""
        return self.num_hole_cards + sum(self.community_per_round)

    @property
    def hand_size(self) -> int:
        return min(3, self.cards_at_showdown)

    def cards_seen(self, round_index: int) -> int:
        """Cards one player sees at a 0-based round."""
        return self.num_hole_cards + sum(self.community_per_round[:round_index])

    def card_str(self, card: int | Card) -> str:
        if not isinstance(card, Card):
            card = Card.from_id(card, self)
        return self.rank_chars[card.rank] + SUIT_CHARS[card.suit]

    def parse_card(self, text: str) -> int:
        text = text.strip()
        if len(text) != 2 or text[0] not in self.rank_chars or text[1] not in SUIT_CHARS[: self.num_suits]:
            raise ValueError(f"bad card {text!r} for game {self.name}")
        return self.rank_chars.index(text[0]) * self.num_suits + SUIT_CHARS.index(text[1])

    def parse_cards(self, text: str) -> tuple[int, ...]:
        return tuple(self.parse_card(t) for t in re.findall(r"\S\S", text.replace(" ", "")))

    def count_player_hands(self, round_index: int) -> int:
        """Distinct (hole, board) views of one player at a 0-based round."""
        total = math.comb(self.deck_size, self.num_hole_cards)
        left = self.deck_size - self.num_hole_cards
        for k in self.community_per_round[:round_index]:
            total *= math.comb(left, k)
            left -= k
        return total

    def count_deals(self) -> int:
        """Complete deals: both holes and every community card."""
        n = self.deck_size
        total = math.comb(n, self.num_hole_cards) * math.comb(n - self.num_hole_cards, self.num_hole_cards)
        left = n - 2 * self.num_hole_cards
        for k in self.community_per_round:
            total *= math.comb(left, k)
            left -= k
        return total

    def to_text(self) -> str:
        lines = [
            f"name = {self.name}",
            f"ranks = {self.num_ranks}",
            f"suits = {self.num_suits}",
            f"hole_cards = {self.num_hole_cards}",
            f"community = {','.join(map(str, self.community_per_round))}",
            f"ante = {self.ante}",
            f"bets = {','.join(map(str, self.bet_size_per_round))}",
            f"max_raises = {self.max_raises_per_round}",
            f"blind_unit = {self.blind_unit:g}",
            f"rank_chars = {self.rank_chars}",
        ]
        return "\n".join(lines) + "\n"


def kuhn() -> GameConfig:
    return GameConfig(
        num_ranks=3, num_suits=1, num_hole_cards=1, community_per_round=(), ante=1,
        bet_size_per_round=(1,), max_raises_per_round=1, blind_unit=1, name="kuhn", rank_chars="JQK",
    )


def numeral211(num_ranks: int = 10, hole_cards: int = 2) -> GameConfig:
    """Numeral211 hold'em; smaller ``num_ranks`` gives the reduced-deck variants."""
    name = "numeral211" if num_ranks == 10 and hole_cards == 2 else f"numeral{num_ranks * 4}"
    if hole_cards != 2:
        name += f"-h{hole_cards}"
    return GameConfig(
        num_ranks=num_ranks, num_suits=4, num_hole_cards=hole_cards, community_per_round=(1, 1),
        ante=5, bet_size_per_round=(10, 20, 20), max_raises_per_round=4, blind_unit=5, name=name,
    )


PRESETS = {
    "kuhn": kuhn,
    "numeral211": numeral211,
    "numeral211-h1": lambda: numeral211(hole_cards=1),
    "numeral20": lambda: numeral211(num_ranks=5),
    "numeral24": lambda: numeral211(num_ranks=6),
    "numeral28": lambda: numeral211(num_ranks=7),
}


def preset(name: str) -> GameConfig:
    try:
        return PRESETS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown game preset {name!r}; choose from {sorted(PRESETS)}") from None


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip().strip('"').strip("'")
    return tuple(int(t) for t in text.split(",") if t.strip())


def parse_config_text(text: str) -> GameConfig:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key.lower()] = value.strip('"').strip("'")
    required = ("ranks", "suits", "hole_cards", "ante", "bets", "max_raises")
    missing = [k for k in required if k not in values]
    if missing:
        raise ValueError(f"config is missing keys: {', '.join(missing)}")
    community = _int_list(values.get("community", ""))
    ante = int(values["ante"])
    return GameConfig(
        num_ranks=int(values["ranks"]),
        num_suits=int(values["suits"]),
        num_hole_cards=int(values["hole_cards"]),
        community_per_round=community,
        ante=ante,
        bet_size_per_round=_int_list(values["bets"]),
        max_raises_per_round=int(values["max_raises"]),
        blind_unit=float(values.get("blind_unit", ante or 1)),
        name=values.get("name", "custom"),
        rank_chars=values.get("rank_chars", ""),
    )


def load_config(path: str | Path) -> GameConfig:
    return parse_config_text(Path(path).read_text())
