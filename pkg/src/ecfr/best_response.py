"""Best-response values and exploitability."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .cards import GameConfig
from .game_engine import CHANCE, TERMINAL, InfoSetKey
from .public_tree import PublicTree, public_tree
from .solver_core import HistoryTree, _sign, history_reaches, profile_to_tables

EPS_FLOOR = -1e-9


@dataclass(frozen=True)
class ExploitabilityReport:
    b1: float  # best-response value of player 1 against sigma_2
    b2: float
    blind_unit: float

    @property
    def epsilon(self) -> float:
        return self.b1 + self.b2

    @property
    def epsilon_mbg(self) -> float:
        return self.epsilon / self.blind_unit * 1000.0

    def __post_init__(self):
        if self.epsilon < EPS_FLOOR * max(1.0, abs(self.b1)):
            raise ArithmeticError(f"negative exploitability {self.epsilon!r}")

    def csv_header(self) -> str:
        return "b1,b2,epsilon,epsilon_mbg"

    def csv_row(self) -> str:
        return f"{self.b1:.12g},{self.b2:.12g},{self.epsilon:.12g},{self.epsilon_mbg:.12g}"

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"b1(sigma2)   = {self.b1:.9f} chips/game\n")
        out.write(f"b2(sigma1)   = {self.b2:.9f} chips/game\n")
        out.write(f"exploitability = {self.epsilon:.9f} chips/game = {self.epsilon_mbg:.4f} mb/g\n")
        return out.getvalue()


def _as_tables(tree: PublicTree, strategy):
    if isinstance(strategy, dict):
        return profile_to_tables(tree, strategy)
    return strategy


def best_response_values(config: GameConfig, strategy, tree: PublicTree | None = None) -> np.ndarray:
    """[b_1(sigma_2), b_2(sigma_1)] for a profile given as class tables or an infoset dict."""
    tree = tree or public_tree(config)
    return tree.best_response_values(_as_tables(tree, strategy))


def best_response_value(config: GameConfig, strategy, player: int, tree: PublicTree | None = None) -> float:
    """Value of ``player``'s best response against the other player's part of ``strategy``."""
    return float(best_response_values(config, strategy, tree)[player])


def exploitability(config: GameConfig, strategy, tree: PublicTree | None = None) -> ExploitabilityReport:
    b = best_response_values(config, strategy, tree)
    return ExploitabilityReport(float(b[0]), float(b[1]), float(config.blind_unit))


def game_value(config: GameConfig, strategy, tree: PublicTree | None = None) -> float:
    """Expected chips per game for player 1."""
    tree = tree or public_tree(config)
    return float(tree.expected_values(_as_tables(tree, strategy))[0])


def reference_best_response(tree: HistoryTree, profile: dict[InfoSetKey, np.ndarray], player: int) -> float:
    """Best-response value by explicit history recursion (small games only).

    The responder's choice at each infoset maximises the belief-weighted sum
    of continuation values over the infoset's histories; choices are made
    lazily, deeper infosets first through the recursion.
    """
    reaches = history_reaches(tree, profile)
    choice: dict[InfoSetKey, int] = {}

    def value(nid: int) -> float:
        who = tree.to_act[nid]
        if who == TERMINAL:
            return _sign(player) * tree.payoff[nid]
        if who == CHANCE:
            return sum(p * value(ch) for ch, p in zip(tree.children[nid], tree.probs[nid]))
        key = tree.keys[nid]
        if who != player:
            return sum(s * value(ch) for ch, s in zip(tree.children[nid], profile[key]))
        if key not in choice:
            totals = np.zeros(len(tree.children[nid]))
            for h in tree.infosets[key]:
                r0, r1, rc = reaches[h]
                w = (r1 if player == 0 else r0) * rc
                if w == 0.0:
                    continue
                totals += w * np.array([value(ch) for ch in tree.children[h]])
            choice[key] = int(np.argmax(totals))
        return value(tree.children[nid][choice[key]])

    return value(0)
