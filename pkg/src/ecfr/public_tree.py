"""Vectorised traversal of the public betting tree.

The betting tree is walked once per pass; at every node the private state is
carried as flat arrays over every (board, own hand) pair of the current round.
Counterfactual values include chance probability, so the root values summed
over hands give each player's expected utility.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .cards import GameConfig
from .game_engine import FOLD, BettingState, InfoBlockKey, InfoSetKey
from .hand_strength import CanonicalHand, canonicalize, class_index, enumerate_classes, rank_table

DECISION, FOLD_LEAF, SHOWDOWN_LEAF, DEAL = range(4)


@dataclass
class PublicNode:
    id: int
    kind: int
    round: int
    state: BettingState
    player: int = -1
    actions: tuple[str, ...] = ()
    children: tuple[int, ...] = ()
    index: int = -1  # position among decision nodes

    @property
    def trace(self) -> tuple[str, ...]:
        return self.state.trace

    @property
    def block_key(self) -> InfoBlockKey:
        return InfoBlockKey(self.player, self.round, self.trace)


def build_public_tree(config: GameConfig) -> list[PublicNode]:
    """Every betting node of the game in depth-first preorder."""
    nodes: list[PublicNode] = []
    decisions = 0

    def rec(state: BettingState) -> int:
        nonlocal decisions
        nid = len(nodes)
        if state.folded >= 0:
            nodes.append(PublicNode(nid, FOLD_LEAF, state.round, state))
            return nid
        if state.closed:
            if state.round == config.num_rounds - 1:
                nodes.append(PublicNode(nid, SHOWDOWN_LEAF, state.round, state))
                return nid
            node = PublicNode(nid, DEAL, state.round, state)
            nodes.append(node)
            node.children = (rec(state.next_round()),)
            return nid
        acts = state.legal_actions(config)
        node = PublicNode(nid, DECISION, state.round, state, state.to_act(), acts, index=decisions)
        decisions += 1
        nodes.append(node)
        node.children = tuple(rec(state.apply(a, config)) for a in acts)
        return nid

    rec(BettingState.initial(config))
    return nodes


@dataclass
class RoundLayout:
    """Flat (board, hand) enumeration of one round from one player's view."""

    round: int
    boards: list[tuple[tuple[int, ...], ...]]
    flat_board: np.ndarray
    flat_hand: np.ndarray  # index into the global hole list
    hand_cards: np.ndarray  # [n, H]
    class_id: np.ndarray
    num_classes: int
    chance_weight: float  # probability of one (own hole, opp hole, board) prefix
    parent: np.ndarray | None = None  # flat index at the previous round
    card_keys: np.ndarray | None = None  # [H, n] board * deck + card
    showdown: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.flat_board)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.class_id, minlength=self.num_classes)


def _boards(config: GameConfig, round_index: int):
    n = config.deck_size

    def rec(prefix, used, r):
        if r == round_index:
            yield prefix
            return
        left = [c for c in range(n) if c not in used]
        for ext in itertools.combinations(left, config.community_per_round[r]):
            yield from rec(prefix + (ext,), used | set(ext), r + 1)

    return list(rec((), set(), 0))


class GameLayout:
    """Card-side bookkeeping for the vectorised engine, built once per config."""

    def __init__(self, config: GameConfig):
        self.config = config
        n, H = config.deck_size, config.num_hole_cards
        self.holes = list(itertools.combinations(range(n), H))
        hole_index = {h: i for i, h in enumerate(self.holes)}
        self.hole_index = hole_index
        hole_arr = np.array(self.holes, dtype=np.int64)
        base = 1
        for k in (math.comb(n, H), math.comb(n - H, H)):
            base *= k
        self.rounds: list[RoundLayout] = []
        prev_pos = None
        left = n - 2 * H
        denom = base
        for r in range(config.num_rounds):
            if r > 0:
                denom *= math.comb(left, config.community_per_round[r - 1])
                left -= config.community_per_round[r - 1]
            boards = _boards(config, r)
            cidx = class_index(config, r)
            pos = np.full((len(boards), len(self.holes)), -1, dtype=np.int64)
            fb, fh, cls = [], [], []
            canon_memo: dict = {}
            for b, board in enumerate(boards):
                used = {c for g in board for c in g}
                for hi, hole in enumerate(self.holes):
                    if used.intersection(hole):
                        continue
                    pos[b, hi] = len(fb)
                    fb.append(b)
                    fh.append(hi)
                    key = (hole,) + board
                    c = canon_memo.get(key)
                    if c is None:
                        c = cidx[canonicalize(key, config)]
                        canon_memo[key] = c
                    cls.append(c)
            flat_board = np.array(fb, dtype=np.int64)
            flat_hand = np.array(fh, dtype=np.int64)
            layout = RoundLayout(
                round=r, boards=boards, flat_board=flat_board, flat_hand=flat_hand,
                hand_cards=hole_arr[flat_hand], class_id=np.array(cls, dtype=np.int64),
                num_classes=len(cidx), chance_weight=1.0 / denom,
            )
            layout.card_keys = flat_board[None, :] * n + layout.hand_cards.T
            if r > 0:
                parent_board = {bd: i for i, bd in enumerate(self.rounds[-1].boards)}
                pb = np.array([parent_board[bd[:-1]] for bd in boards], dtype=np.int64)
                layout.parent = prev_pos[pb[flat_board], flat_hand]
                assert (layout.parent >= 0).all()
            if r == config.num_rounds - 1:
                self._build_showdown(layout, boards)
            self.rounds.append(layout)
            prev_pos = pos
        self.positions = prev_pos

    def _build_showdown(self, layout: RoundLayout, boards) -> None:
        cfg = self.config
        board_arr = np.array([[c for g in bd for c in g] for bd in boards], dtype=np.int64)
        cards = np.concatenate([layout.hand_cards, board_arr.reshape(len(boards), -1)[layout.flat_board]], axis=1)
        val = rank_table(cfg).values(cards)
        M = int(val.max()) + 1
        sd = layout.showdown
        key = layout.flat_board * M + val
        order = np.argsort(key, kind="stable")
        sk = key[order]
        sd["order"] = order
        sd["lo"] = np.searchsorted(sk, key, "left")
        sd["hi"] = np.searchsorted(sk, key, "right")
        sd["start"] = np.searchsorted(sk, layout.flat_board * M, "left")
        sd["end"] = np.searchsorted(sk, (layout.flat_board + 1) * M, "left")
        sd["value"] = val
        if cfg.num_hole_cards == 2:
            # hands sharing a card with the evaluated hand, grouped per (board, card)
            n = layout.size
            gkey = layout.card_keys.reshape(-1)
            owner = np.tile(np.arange(n), 2)
            key2 = gkey * M + val[owner]
            order2 = np.argsort(key2, kind="stable")
            sk2 = key2[order2]
            sd["owner2"] = owner[order2]
            sd["lo2"] = np.searchsorted(sk2, key2, "left")
            sd["hi2"] = np.searchsorted(sk2, key2, "right")
            sd["start2"] = np.searchsorted(sk2, gkey * M, "left")
            sd["end2"] = np.searchsorted(sk2, (gkey + 1) * M, "left")

    def layout(self, round_index: int) -> RoundLayout:
        return self.rounds[round_index]

    def showdown_net(self, layout: RoundLayout, reach: np.ndarray) -> np.ndarray:
        """Opponent mass beaten minus mass beating each hand, card-removal aware.

        ``reach`` has shape [k, n]; the result has the same shape.
        """
        sd = layout.showdown
        k = reach.shape[0]
        cs = np.zeros((k, layout.size + 1))
        np.cumsum(np.take(reach, sd["order"], axis=1), axis=1, out=cs[:, 1:])
        take = lambda a, i: np.take(a, i, axis=1)  # noqa: E731
        net = (take(cs, sd["lo"]) + take(cs, sd["hi"])) - (take(cs, sd["start"]) + take(cs, sd["end"]))
        if "owner2" in sd:
            cs2 = np.zeros((k, len(sd["owner2"]) + 1))
            np.cumsum(take(reach, sd["owner2"]), axis=1, out=cs2[:, 1:])
            corr = (take(cs2, sd["lo2"]) + take(cs2, sd["hi2"])) - (take(cs2, sd["start2"]) + take(cs2, sd["end2"]))
            net -= corr.reshape(k, 2, -1).sum(axis=1)
        return net

    def compatible_mass(self, layout: RoundLayout, reach: np.ndarray) -> np.ndarray:
        """Opponent reach summed over hands that share no card with each own hand."""
        nb = len(layout.boards)
        N = self.config.deck_size
        H = self.config.num_hole_cards
        total = np.bincount(layout.flat_board, reach, minlength=nb)[layout.flat_board]
        keys = layout.card_keys
        cardsum = np.bincount(keys.reshape(-1), np.tile(reach, H), minlength=nb * N)
        out = total - cardsum[keys].sum(axis=0)
        if H == 2:
            out += reach
        return out

    def class_of(self, round_index: int, hand: CanonicalHand) -> int:
        return class_index(self.config, round_index)[hand]

    def parent_classes(self, round_index: int) -> np.ndarray:
        """Class of each class's previous-round prefix."""
        L, P = self.rounds[round_index], self.rounds[round_index - 1]
        out = np.empty(L.num_classes, dtype=np.int64)
        out[L.class_id] = P.class_id[L.parent]
        return out

    def class_pair_matrices(self, round_index: int, chunk: int = 8_000_000):
        """Dense class-by-class interaction counts of one round.

        ``fold[c, c']`` counts card-compatible (own, opponent) raw pairs with
        own class c and opponent class c' on a shared board. ``showdown`` is the
        same sum of sign(own strength - opponent strength), last round only.
        """
        L = self.rounds[round_index]
        n = L.num_classes
        nb = len(L.boards)
        nv = L.size // nb
        cards = np.zeros((len(self.holes), self.config.deck_size), dtype=np.int32)
        for i, h in enumerate(self.holes):
            cards[i, list(h)] = 1
        disjoint = (cards @ cards.T) == 0
        cls = L.class_id.reshape(nb, nv)
        gh = L.flat_hand.reshape(nb, nv)
        last = round_index == self.config.num_rounds - 1
        val = L.showdown["value"].reshape(nb, nv) if last else None
        fold = np.zeros(n * n)
        showdown = np.zeros(n * n) if last else None
        step = max(1, chunk // (nv * nv))
        for b0 in range(0, nb, step):
            g = gh[b0:b0 + step]
            c = cls[b0:b0 + step]
            comp = disjoint[g[:, :, None], g[:, None, :]].astype(float)
            keys = (c[:, :, None] * n + c[:, None, :]).ravel()
            fold += np.bincount(keys, comp.ravel(), minlength=n * n)
            if last:
                v = val[b0:b0 + step]
                sgn = np.sign(v[:, :, None] - v[:, None, :]) * comp
                showdown += np.bincount(keys, sgn.ravel(), minlength=n * n)
        fold = fold.reshape(n, n)
        return fold, (showdown.reshape(n, n) if last else None)


@lru_cache(maxsize=8)
def game_layout(config: GameConfig) -> GameLayout:
    return GameLayout(config)


StrategyFn = Callable[[PublicNode], np.ndarray]
ValueHook = Callable[[PublicNode, np.ndarray, np.ndarray, np.ndarray], None]


class PublicTree:
    """Public betting tree plus card layout; runs value and best-response passes.

    Two engines compute identical numbers. The class engine works on
    canonical-class arrays and evaluates all leaves of a round with one dense
    class-by-class product; it relies on strategies being functions of the
    canonical class, which every solver here guarantees. The flat engine
    walks (board, hand) arrays and is used for decks whose class matrices
    would not fit in memory, and as an independent cross-check.
    """

    CLASS_ENGINE_LIMIT = 5000  # largest last-round class count for the class engine

    def __init__(self, config: GameConfig, engine: str = "auto"):
        self.config = config
        self.nodes = build_public_tree(config)
        self.decisions = [nd for nd in self.nodes if nd.kind == DECISION]
        self.cards = game_layout(config)
        self._by_trace = {nd.trace: nd for nd in self.decisions}
        self.utility_range = self._utility_range()
        if engine == "auto":
            engine = "class" if self.num_classes(config.num_rounds - 1) <= self.CLASS_ENGINE_LIMIT else "flat"
        if engine not in ("class", "flat"):
            raise ValueError(f"unknown engine {engine!r}")
        self.engine = engine
        self._mats = None

    def _utility_range(self) -> float:
        hi = max(max(nd.state.contrib) for nd in self.nodes if nd.kind in (FOLD_LEAF, SHOWDOWN_LEAF))
        return 2.0 * hi

    def _class_mats(self):
        if self._mats is None:
            R = self.config.num_rounds
            pairs = [self.cards.class_pair_matrices(r) for r in range(R)]
            parents = [None] + [self.cards.parent_classes(r) for r in range(1, R)]
            counts = [L.class_counts().astype(float) for L in self.cards.rounds]
            self._mats = (pairs, parents, counts)
        return self._mats

    # -- addressing -------------------------------------------------------------------

    def num_classes(self, round_index: int) -> int:
        return self.cards.rounds[round_index].num_classes

    def node_for_trace(self, trace: tuple[str, ...]) -> PublicNode:
        try:
            return self._by_trace[tuple(trace)]
        except KeyError:
            raise KeyError(f"no decision node with betting trace {'/'.join(trace)!r}") from None

    def locate(self, key: InfoSetKey) -> tuple[PublicNode, int]:
        node = self.node_for_trace(key.trace)
        if node.player != key.player:
            raise KeyError(f"player {key.player} does not act after {'/'.join(key.trace)!r}")
        return node, self.cards.class_of(node.round, key.hand())

    def infoset_keys(self, node: PublicNode) -> list[InfoSetKey]:
        return [
            InfoSetKey(node.player, h.rounds[0], h.rounds[1:], node.trace)
            for h in enumerate_classes(self.config, node.round)
        ]

    def blocks(self) -> list[InfoBlockKey]:
        return [nd.block_key for nd in self.decisions]

    def uniform_strategy(self) -> list[np.ndarray]:
        return [
            np.full((self.num_classes(nd.round), len(nd.actions)), 1.0 / len(nd.actions))
            for nd in self.decisions
        ]

    # -- passes -----------------------------------------------------------------------

    def values(self, strategy: StrategyFn | list, best_response: bool = False,
               hook: ValueHook | None = None, engine: str | None = None) -> np.ndarray:
        """Root counterfactual values per player under a profile, shape [2, n].

        The second axis runs over round-1 canonical classes (class engine) or
        raw hands (flat engine); sums over it agree. With ``best_response``
        each player maximises at their own nodes against the other's strategy.
        ``hook(node, action_values, class_reach, sigma)`` is called at every
        decision node in expected-value mode with the acting player's per-class
        counterfactual action values [n_cls, |A|]; ``class_reach`` sums that
        player's own reach over the raw infosets of each class.
        """
        if isinstance(strategy, list):
            table = strategy
            strategy = lambda nd: table[nd.index]  # noqa: E731
        engine = engine or self.engine
        if engine == "class":
            return self._values_class(strategy, best_response, hook)
        root = self.cards.rounds[0]
        reach = np.ones((2, root.size))
        return self._rec(self.nodes[0], reach, strategy, best_response, hook)

    def _strategy_at(self, strategy, node, n_cls):
        sig = np.asarray(strategy(node), dtype=float)
        if sig.shape != (n_cls, len(node.actions)):
            raise ValueError(
                f"strategy at {node.block_key.to_text()} has shape {sig.shape}, "
                f"expected {(n_cls, len(node.actions))}"
            )
        return sig

    def _values_class(self, strategy, br, hook):
        pairs, parents, counts = self._class_mats()
        nodes = self.nodes
        reach: list = [None] * len(nodes)
        reach[0] = np.ones((2, self.num_classes(0)))
        sigmas = {}
        leaves: dict[tuple[int, int], list[int]] = {}
        for nd in nodes:
            rc = reach[nd.id]
            if nd.kind == DECISION:
                sig = self._strategy_at(strategy, nd, rc.shape[1])
                sigmas[nd.id] = sig
                for a, ch in enumerate(nd.children):
                    cr = rc.copy()
                    cr[nd.player] *= sig[:, a]
                    reach[ch] = cr
            elif nd.kind == DEAL:
                ch = nd.children[0]
                reach[ch] = rc[:, parents[nodes[ch].round]]
            else:
                leaves.setdefault((nd.kind, nd.round), []).append(nd.id)

        values: list = [None] * len(nodes)
        w_of = [L.chance_weight for L in self.cards.rounds]
        for (kind, r), ids in leaves.items():
            fold, showdown = pairs[r]
            mat = fold if kind == FOLD_LEAF else showdown
            opp = np.stack([reach[i][::-1] for i in ids])  # [k, 2, n]
            k, _, n = opp.shape
            res = (mat @ opp.reshape(2 * k, n).T).T.reshape(k, 2, n)
            for j, i in enumerate(ids):
                st = nodes[i].state
                if kind == FOLD_LEAF:
                    f = st.folded
                    u = np.array([-st.contrib[0] if f == 0 else st.contrib[f],
                                  -st.contrib[1] if f == 1 else st.contrib[f]], dtype=float)
                else:
                    u = np.array(st.contrib, dtype=float)
                values[i] = (w_of[r] * u)[:, None] * res[j]

        for nd in reversed(nodes):
            if nd.kind == DECISION:
                p, o = nd.player, 1 - nd.player
                sig = sigmas.pop(nd.id)
                vals = np.stack([values[ch] for ch in nd.children])
                for ch in nd.children:
                    values[ch] = None
                out = np.empty_like(vals[0])
                out[o] = vals[:, o].sum(axis=0)
                if br:
                    out[p] = vals[:, p].max(axis=0)
                else:
                    out[p] = np.einsum("na,an->n", sig, vals[:, p])
                    if hook is not None:
                        hook(nd, vals[:, p].T, reach[nd.id][p] * counts[nd.round], sig)
                values[nd.id] = out
            elif nd.kind == DEAL:
                ch = nd.children[0]
                pc = parents[nodes[ch].round]
                v = values[ch]
                values[ch] = None
                values[nd.id] = np.stack([np.bincount(pc, v[i], minlength=reach[nd.id].shape[1]) for i in range(2)])
            reach[nd.id] = reach[nd.id] if nd.kind == DECISION and hook is not None else None
        return values[0]

    def _rec(self, node, reach, strategy, br, hook):
        kind = node.kind
        L = self.cards.rounds[node.round]
        if kind == DECISION:
            p, o = node.player, 1 - node.player
            sig_cls = self._strategy_at(strategy, node, L.num_classes)
            sig = sig_cls[L.class_id]
            vals = np.empty((len(node.actions), 2, L.size))
            for a, child in enumerate(node.children):
                cr = reach.copy()
                cr[p] *= sig[:, a]
                vals[a] = self._rec(self.nodes[child], cr, strategy, br, hook)
            out = np.empty((2, L.size))
            out[o] = vals[:, o].sum(axis=0)
            if br:
                out[p] = vals[:, p].max(axis=0)
            else:
                out[p] = np.einsum("na,an->n", sig, vals[:, p])
                if hook is not None:
                    action_values = np.stack([
                        np.bincount(L.class_id, vals[a, p], minlength=L.num_classes)
                        for a in range(len(node.actions))
                    ], axis=1)
                    class_reach = np.bincount(L.class_id, reach[p], minlength=L.num_classes)
                    hook(node, action_values, class_reach, sig_cls)
            return out
        if kind == DEAL:
            child = self.nodes[node.children[0]]
            C = self.cards.rounds[child.round]
            v = self._rec(child, reach[:, C.parent], strategy, br, hook)
            return np.stack([np.bincount(C.parent, v[i], minlength=L.size) for i in range(2)])
        contrib = node.state.contrib
        w = L.chance_weight
        if kind == FOLD_LEAF:
            f = node.state.folded
            out = np.empty((2, L.size))
            for i in range(2):
                u = -contrib[i] if i == f else contrib[f]
                out[i] = (w * u) * self.cards.compatible_mass(L, reach[1 - i])
            return out
        net = self.cards.showdown_net(L, reach[::-1])
        return (w * contrib[0]) * net

    def expected_values(self, strategy, engine: str | None = None) -> np.ndarray:
        """Expected utility per player under a profile."""
        return self.values(strategy, engine=engine).sum(axis=1)

    def best_response_values(self, strategy, engine: str | None = None) -> np.ndarray:
        """[b_1(sigma_2), b_2(sigma_1)] in chips per game."""
        return self.values(strategy, best_response=True, engine=engine).sum(axis=1)


@lru_cache(maxsize=8)
def public_tree(config: GameConfig) -> PublicTree:
    return PublicTree(config)


def fold_action_index(node: PublicNode) -> int:
    return node.actions.index(FOLD) if FOLD in node.actions else -1
