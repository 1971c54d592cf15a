"""Tabular CFR: a dictionary reference over explicit histories and a vectorised solver.

Regrets follow the time-averaged convention R^T = (1/T) sum_t r^t; tables keep
the running sums and divide on read. The average strategy is reach-weighted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .cards import GameConfig
from .game_engine import (
    CHANCE,
    TERMINAL,
    HistoryNode,
    InfoSetKey,
    apply_action,
    chance_outcomes,
    infoset_key,
    initial_node,
    legal_actions,
    utility,
)
from .public_tree import PublicNode, PublicTree, public_tree


def regret_matching(regrets) -> np.ndarray:
    """Positive-part normalisation with a uniform fallback; works row-wise on 2-D input."""
    r = np.asarray(regrets, dtype=float)
    pos = np.maximum(r, 0.0)
    total = pos.sum(axis=-1, keepdims=True)
    uniform = np.full_like(pos, 1.0 / r.shape[-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, pos / np.where(total > 0, total, 1.0), uniform)


def normalize_rows(weights: np.ndarray) -> np.ndarray:
    """Rows scaled to sum to one; all-zero rows become uniform."""
    total = weights.sum(axis=-1, keepdims=True)
    uniform = np.full_like(weights, 1.0 / weights.shape[-1])
    return np.where(total > 0, weights / np.where(total > 0, total, 1.0), uniform)


def lemma1_check(a: float, b: float) -> bool:
    """[(a+b)_+]^2 <= a_+^2 + 2 a_+ b + b^2 (with a relative slack for rounding).

    The slack scales with the size of the summed terms: the right side can
    cancel down to far below a^2 + b^2 while carrying that much rounding.
    """
    ap = max(a, 0.0)
    lhs = max(a + b, 0.0) ** 2
    rhs = ap * ap + 2.0 * ap * b + b * b
    return lhs <= rhs + 1e-12 * max(1.0, ap * ap + abs(2.0 * ap * b) + b * b)


# ---------------------------------------------------------------------------
# reference implementation over explicit histories


@dataclass
class HistoryTree:
    """The complete game tree flattened into parallel lists (small games only)."""

    config: GameConfig
    to_act: list[int] = field(default_factory=list)
    children: list[list[int]] = field(default_factory=list)
    probs: list[list[float]] = field(default_factory=list)  # chance nodes only
    keys: list[InfoSetKey | None] = field(default_factory=list)
    actions: list[tuple] = field(default_factory=list)
    payoff: list[float] = field(default_factory=list)  # player-0 utility at terminals
    infosets: dict[InfoSetKey, list[int]] = field(default_factory=dict)

    @classmethod
    def build(cls, config: GameConfig, max_nodes: int = 2_000_000) -> "HistoryTree":
        tree = cls(config)

        def rec(node: HistoryNode) -> int:
            nid = len(tree.to_act)
            if nid >= max_nodes:
                raise ValueError(f"game tree exceeds {max_nodes} nodes; use the vectorised engine")
            who = node.to_act
            tree.to_act.append(who)
            tree.children.append([])
            tree.probs.append([])
            tree.keys.append(None)
            tree.actions.append(())
            tree.payoff.append(0.0)
            if who == TERMINAL:
                tree.payoff[nid] = float(utility(node, 0))
                return nid
            if who == CHANCE:
                outs = chance_outcomes(node)
                tree.probs[nid] = [p for _, p in outs]
                tree.children[nid] = [rec(apply_action(node, o)) for o, _ in outs]
                return nid
            key = infoset_key(node, who)
            acts = legal_actions(node)
            tree.keys[nid] = key
            tree.actions[nid] = acts
            tree.infosets.setdefault(key, []).append(nid)
            tree.children[nid] = [rec(apply_action(node, a)) for a in acts]
            return nid

        rec(initial_node(config))
        return tree

    def infoset_actions(self, key: InfoSetKey) -> tuple:
        return self.actions[self.infosets[key][0]]

    def uniform_profile(self) -> dict[InfoSetKey, np.ndarray]:
        return {k: np.full(len(self.infoset_actions(k)), 1.0 / len(self.infoset_actions(k))) for k in self.infosets}

    def random_profile(self, rng: np.random.Generator) -> dict[InfoSetKey, np.ndarray]:
        return {k: rng.dirichlet(np.ones(len(self.infoset_actions(k)))) for k in self.infosets}


def _sign(player: int) -> float:
    return 1.0 if player == 0 else -1.0


def history_reaches(tree: HistoryTree, profile) -> list[tuple[float, float, float]]:
    """(pi_0, pi_1, pi_c) for every node."""
    out = [(0.0, 0.0, 0.0)] * len(tree.to_act)
    stack = [(0, 1.0, 1.0, 1.0)]
    while stack:
        nid, r0, r1, rc = stack.pop()
        out[nid] = (r0, r1, rc)
        who = tree.to_act[nid]
        if who == TERMINAL:
            continue
        if who == CHANCE:
            for ch, p in zip(tree.children[nid], tree.probs[nid]):
                stack.append((ch, r0, r1, rc * p))
            continue
        sig = profile[tree.keys[nid]]
        for ch, s in zip(tree.children[nid], sig):
            stack.append((ch, r0 * s if who == 0 else r0, r1 * s if who == 1 else r1, rc))
    return out


def _terminal_sum(tree: HistoryTree, nid: int, profile, player: int) -> float:
    """Sum over terminals below ``nid`` of path probability times ``player``'s utility."""
    total = 0.0
    stack = [(nid, 1.0)]
    while stack:
        n, p = stack.pop()
        who = tree.to_act[n]
        if who == TERMINAL:
            total += p * _sign(player) * tree.payoff[n]
        elif who == CHANCE:
            stack.extend((ch, p * q) for ch, q in zip(tree.children[n], tree.probs[n]))
        else:
            stack.extend((ch, p * s) for ch, s in zip(tree.children[n], profile[tree.keys[n]]))
    return total


def counterfactual_value(tree: HistoryTree, profile, key: InfoSetKey, reaches=None):
    """(per-action values v(I->a), v(I)) by explicit enumeration of terminals under I."""
    reaches = reaches or history_reaches(tree, profile)
    i = key.player
    acts = tree.infoset_actions(key)
    per_action = np.zeros(len(acts))
    value = 0.0
    for h in tree.infosets[key]:
        r0, r1, rc = reaches[h]
        w = (r1 if i == 0 else r0) * rc
        value += w * _terminal_sum(tree, h, profile, i)
        for a, ch in enumerate(tree.children[h]):
            per_action[a] += w * _terminal_sum(tree, ch, profile, i)
    return per_action, value


def lemma2_check(tree: HistoryTree, profile, key: InfoSetKey, reaches=None) -> float:
    """|v(I) - sum_a sigma(I,a) v(I->a)| with both sides enumerated independently."""
    per_action, value = counterfactual_value(tree, profile, key, reaches)
    return abs(value - float(np.dot(profile[key], per_action)))


def cf_values(tree: HistoryTree, profile):
    """Per-infoset per-action counterfactual values and own-reach sums for both players."""
    cfv: dict[InfoSetKey, np.ndarray] = {k: np.zeros(len(tree.infoset_actions(k))) for k in tree.infosets}
    own: dict[InfoSetKey, float] = {k: 0.0 for k in tree.infosets}

    def walk(nid: int, r0: float, r1: float, rc: float) -> float:
        who = tree.to_act[nid]
        if who == TERMINAL:
            return tree.payoff[nid]
        if who == CHANCE:
            return sum(p * walk(ch, r0, r1, rc * p) for ch, p in zip(tree.children[nid], tree.probs[nid]))
        key = tree.keys[nid]
        sig = profile[key]
        vals = []
        for ch, s in zip(tree.children[nid], sig):
            vals.append(walk(ch, r0 * s, r1, rc) if who == 0 else walk(ch, r0, r1 * s, rc))
        vals = np.array(vals)
        opp = (r1 if who == 0 else r0) * rc
        cfv[key] += opp * _sign(who) * vals
        own[key] += r0 if who == 0 else r1
        return float(np.dot(sig, vals))

    walk(0, 1.0, 1.0, 1.0)
    return cfv, own


@dataclass
class ReferenceCFR:
    """Vanilla CFR on dictionaries; the slow, obviously-correct oracle."""

    tree: HistoryTree
    regret_sum: dict = field(default_factory=dict)
    avg_num: dict = field(default_factory=dict)
    T: int = 0

    def __post_init__(self):
        for k in self.tree.infosets:
            n = len(self.tree.infoset_actions(k))
            self.regret_sum.setdefault(k, np.zeros(n))
            self.avg_num.setdefault(k, np.zeros(n))

    def current_strategy(self) -> dict[InfoSetKey, np.ndarray]:
        return {k: regret_matching(r) for k, r in self.regret_sum.items()}

    def regrets(self) -> dict[InfoSetKey, np.ndarray]:
        return {k: r / max(self.T, 1) for k, r in self.regret_sum.items()}

    def average_strategy(self) -> dict[InfoSetKey, np.ndarray]:
        return {k: normalize_rows(a) for k, a in self.avg_num.items()}

    def iterate(self) -> None:
        cfr_iteration(self)


def cfr_iteration(tables: ReferenceCFR) -> ReferenceCFR:
    """One simultaneous-update iteration of vanilla CFR."""
    sigma = tables.current_strategy()
    cfv, own = cf_values(tables.tree, sigma)
    for k, v in cfv.items():
        tables.regret_sum[k] += v - np.dot(sigma[k], v)
        tables.avg_num[k] += own[k] * sigma[k]
    tables.T += 1
    return tables


# ---------------------------------------------------------------------------
# vectorised tabular CFR over the public tree


class TabularCFR:
    """Vanilla CFR on canonical-class tables, optionally over bucket ids.

    ``buckets[r]`` maps each class of round r to a bucket; ``None`` (or a
    ``None`` entry) keeps that round unabstracted. Bucket regrets sum the
    member classes' regrets and bucket average weights sum their reaches.
    """

    def __init__(self, config: GameConfig, buckets: list | None = None, tree: PublicTree | None = None):
        self.config = config
        self.tree = tree or public_tree(config)
        R = config.num_rounds
        self.buckets = [None] * R if buckets is None else [None if b is None else np.asarray(b, dtype=np.int64) for b in buckets]
        if len(self.buckets) != R:
            raise ValueError(f"need one bucket map entry per round ({R})")
        self.table_rows = []
        for r in range(R):
            b = self.buckets[r]
            n_cls = self.tree.num_classes(r)
            if b is not None and len(b) != n_cls:
                raise ValueError(f"bucket map for round {r + 1} covers {len(b)} classes, expected {n_cls}")
            self.table_rows.append(n_cls if b is None else int(b.max()) + 1)
        self.regret_sum = [np.zeros((self.table_rows[nd.round], len(nd.actions))) for nd in self.tree.decisions]
        self.avg_num = [np.zeros_like(r) for r in self.regret_sum]
        self.T = 0

    def _expand(self, node: PublicNode, table: np.ndarray) -> np.ndarray:
        b = self.buckets[node.round]
        return table if b is None else table[b]

    def _collapse(self, node: PublicNode, per_class: np.ndarray) -> np.ndarray:
        b = self.buckets[node.round]
        if b is None:
            return per_class
        rows = self.table_rows[node.round]
        if per_class.ndim == 1:
            return np.bincount(b, per_class, minlength=rows)
        return np.stack([np.bincount(b, per_class[:, a], minlength=rows) for a in range(per_class.shape[1])], axis=1)

    def current_strategy(self) -> list[np.ndarray]:
        return [self._expand(nd, regret_matching(r)) for nd, r in zip(self.tree.decisions, self.regret_sum)]

    def average_strategy(self) -> list[np.ndarray]:
        return [self._expand(nd, normalize_rows(a)) for nd, a in zip(self.tree.decisions, self.avg_num)]

    def regrets(self) -> list[np.ndarray]:
        return [r / max(self.T, 1) for r in self.regret_sum]

    def iterate(self) -> None:
        sigma_tables = [regret_matching(r) for r in self.regret_sum]
        strategy = [self._expand(nd, s) for nd, s in zip(self.tree.decisions, sigma_tables)]

        def hook(node, action_values, class_reach, sig):
            i = node.index
            regret = action_values - np.sum(action_values * sig, axis=1, keepdims=True)
            self.regret_sum[i] += self._collapse(node, regret)
            self.avg_num[i] += self._collapse(node, class_reach)[:, None] * sigma_tables[i]

        self.tree.values(strategy, hook=hook)
        self.T += 1

    def run(self, iterations: int, callback: Callable[[int], None] | None = None) -> None:
        for _ in range(iterations):
            self.iterate()
            if callback is not None:
                callback(self.T)

    def table_key(self, node: PublicNode, row: int) -> str:
        if self.buckets[node.round] is None:
            hand = self.tree.infoset_keys(node)[row]
            return hand.to_text(self.config)
        return f"P{node.player + 1}:bucket{row}:{'/'.join(node.trace)}"

    def save(self, path: str | Path) -> None:
        """ECFRTAB1 checkpoint: time-averaged regrets then average-strategy numerators."""
        entries = []
        for nd, reg, avg in zip(self.tree.decisions, self.regrets(), self.avg_num):
            for row in range(reg.shape[0]):
                entries.append((self.table_key(nd, row), reg[row], avg[row]))
        write_table_checkpoint(path, self.T, entries)

    @classmethod
    def load(cls, path: str | Path, config: GameConfig, buckets: list | None = None,
             tree: PublicTree | None = None) -> "TabularCFR":
        solver = cls(config, buckets, tree)
        T, table = read_table_checkpoint(path)
        solver.T = T
        for nd in solver.tree.decisions:
            for row in range(solver.table_rows[nd.round]):
                key = solver.table_key(nd, row)
                if key not in table:
                    raise KeyError(f"{path}: no entry for infoset {key}")
                reg, avg = table[key]
                solver.regret_sum[nd.index][row] = reg * T
                solver.avg_num[nd.index][row] = avg
        return solver


TAB_MAGIC = b"ECFRTAB1"


def write_table_checkpoint(path, T: int, entries) -> None:
    with open(path, "wb") as fh:
        fh.write(TAB_MAGIC)
        fh.write(struct.pack("<QQ", T, len(entries)))
        for key, reg, avg in entries:
            kb = key.encode("utf-8")
            fh.write(struct.pack("<I", len(kb)))
            fh.write(kb)
            fh.write(struct.pack("<I", len(reg)))
            fh.write(np.asarray(reg, dtype="<f8").tobytes())
            fh.write(np.asarray(avg, dtype="<f8").tobytes())


def read_table_checkpoint(path) -> tuple[int, dict[str, tuple[np.ndarray, np.ndarray]]]:
    data = Path(path).read_bytes()
    if data[:8] != TAB_MAGIC:
        raise ValueError(f"{path}: not an ECFRTAB1 checkpoint")
    T, count = struct.unpack_from("<QQ", data, 8)
    pos = 24
    out = {}
    for _ in range(count):
        (klen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        key = data[pos:pos + klen].decode("utf-8")
        pos += klen
        (na,) = struct.unpack_from("<I", data, pos)
        pos += 4
        vals = np.frombuffer(data, dtype="<f8", count=2 * na, offset=pos)
        pos += 16 * na
        out[key] = (vals[:na].copy(), vals[na:].copy())
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after {count} entries")
    return T, out


def profile_to_tables(tree: PublicTree, profile: dict[InfoSetKey, np.ndarray]) -> list[np.ndarray]:
    """Dictionary profile keyed by canonical infosets -> per-node class tables."""
    out = []
    for nd in tree.decisions:
        rows = []
        for key in tree.infoset_keys(nd):
            if key not in profile:
                raise KeyError(f"strategy undefined at infoset {key.to_text(tree.config)}")
            rows.append(profile[key])
        out.append(np.array(rows, dtype=float))
    return out


def tables_to_profile(tree: PublicTree, tables: list[np.ndarray]) -> dict[InfoSetKey, np.ndarray]:
    out = {}
    for nd, tab in zip(tree.decisions, tables):
        for key, row in zip(tree.infoset_keys(nd), tab):
            out[key] = np.array(row)
    return out
