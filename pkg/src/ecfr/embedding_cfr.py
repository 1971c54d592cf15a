"""CFR in advisor space.

Every info-block (one player's infosets sharing a betting trace) owns m
advisors. An infoset's strategy is the convex combination of its advisors'
strategies weighted by its embedding coordinates, and its immediate regrets
are pushed back to the advisors with the same weights. Per block only three
m x |A| matrices and an iteration counter are stored.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cards import GameConfig
from .embed_net import ConfigurationError, CoordinateProvider
from .game_engine import InfoBlockKey
from .public_tree import PublicNode, PublicTree, public_tree
from .solver_core import normalize_rows, regret_matching

ADV_MAGIC = b"ECFRADV1"


@dataclass
class AdvisorBlock:
    """Advisor tables of one info-block."""

    key: InfoBlockKey
    n: int  # infosets in the block
    actions: tuple[str, ...]
    regret: np.ndarray  # [m, |A|] time-averaged embedded regret
    strategy: np.ndarray  # [m, |A|] embedded immediate strategy
    average: np.ndarray  # [m, |A|] embedded average strategy
    T: int = 0

    @classmethod
    def new(cls, key: InfoBlockKey, n: int, m: int, actions: tuple[str, ...]) -> "AdvisorBlock":
        k = len(actions)
        strategy = np.full((m, k), 1.0 / k)
        return cls(key, n, tuple(actions), np.zeros((m, k)), strategy, strategy.copy())

    @property
    def m(self) -> int:
        return self.regret.shape[0]

    def storage_size(self) -> int:
        """Persistent numbers: three m x |A| matrices plus the counter."""
        return 3 * self.regret.size + 1


def query_strategy(advisor_strategy: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Strategy of infoset(s) with the given coordinates: coords @ sigma(E)."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape[-1] != advisor_strategy.shape[0]:
        raise ValueError(f"coordinates have length {coords.shape[-1]}, block has {advisor_strategy.shape[0]} advisors")
    return coords @ advisor_strategy


def accumulate_sampled_regret(block: AdvisorBlock, coords: np.ndarray, regrets: np.ndarray) -> None:
    """R(E) <- (T-1)/T R(E) + (1/T) sum_k coords_k^T r_k, with T the new iteration count.

    ``coords`` is [l, m] and ``regrets`` [l, |A|] for the l visited infosets
    (l may be zero: the block then only ages).
    """
    T = block.T + 1
    coords = np.asarray(coords, dtype=float).reshape(-1, block.m)
    regrets = np.asarray(regrets, dtype=float).reshape(-1, len(block.actions))
    push = coords.T @ regrets if len(coords) else 0.0
    block.regret = ((T - 1) / T) * block.regret + push / T
    block.T = T


def advisor_regret_matching(block: AdvisorBlock) -> None:
    block.strategy = regret_matching(block.regret)


def accumulate_average(block: AdvisorBlock) -> None:
    """Running mean: avg <- T/(T+1) avg + strategy/(T+1)."""
    T = block.T
    block.average = (T / (T + 1)) * block.average + block.strategy / (T + 1)


def recover_average_strategy(block: AdvisorBlock, coords: np.ndarray) -> np.ndarray:
    return query_strategy(block.average, coords)


# ---------------------------------------------------------------------------
# checkpoints


def save_advisor_blocks(path: str | Path, blocks: list[AdvisorBlock]) -> None:
    """ECFRADV1: block count, then per block key text, n, m, |A|, T and three matrices."""
    with open(path, "wb") as fh:
        fh.write(ADV_MAGIC)
        fh.write(struct.pack("<I", len(blocks)))
        for b in blocks:
            kb = b.key.to_text().encode("utf-8")
            fh.write(struct.pack("<I", len(kb)))
            fh.write(kb)
            fh.write(struct.pack("<QIIQ", b.n, b.m, len(b.actions), b.T))
            for mat in (b.regret, b.strategy, b.average):
                fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def load_advisor_blocks(path: str | Path) -> list[tuple[str, int, int, int, int, np.ndarray, np.ndarray, np.ndarray]]:
    """(key text, n, m, |A|, T, regret, strategy, average) per block."""
    data = Path(path).read_bytes()
    if data[:8] != ADV_MAGIC:
        raise ValueError(f"{path}: not an ECFRADV1 checkpoint")
    (count,) = struct.unpack_from("<I", data, 8)
    pos = 12
    out = []
    for _ in range(count):
        (klen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        key = data[pos:pos + klen].decode("utf-8")
        pos += klen
        n, m, na, T = struct.unpack_from("<QIIQ", data, pos)
        pos += 24
        mats = []
        for _ in range(3):
            mats.append(np.frombuffer(data, dtype="<f8", count=m * na, offset=pos).reshape(m, na).copy())
            pos += 8 * m * na
        out.append((key, n, m, na, T, *mats))
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after {count} blocks")
    return out


# ---------------------------------------------------------------------------
# solver


class EmbeddingCFR:
    """Embedding CFR over the public tree.

    Round 1 is solved tabularly on canonical classes unless
    ``tabular_first_round`` is False. Each iteration computes exact
    counterfactual regrets for every infoset under the current recovered
    profile, then pushes only those of infosets touched by ``budget`` sampled
    deals (every infoset when ``full`` is set).
    """

    def __init__(self, config: GameConfig, provider: CoordinateProvider, *, tabular_first_round: bool = True,
                 budget: int | None = None, full: bool = False, seed: int = 0,
                 weighted_average: bool = False, tree: PublicTree | None = None):
        self.config = config
        self.tree = tree or public_tree(config)
        self.provider = provider
        self.tabular_rounds = {0} if tabular_first_round else set()
        self.full = full
        last = self.tree.cards.rounds[-1]
        self.budget = int(budget) if budget is not None else last.size
        self.weighted_average = weighted_average
        self.rng = np.random.default_rng(seed)
        self.phi: dict[int, np.ndarray] = {}
        for r in range(config.num_rounds):
            if r in self.tabular_rounds:
                continue
            try:
                phi = np.asarray(provider.coords(r), dtype=float)
            except ConfigurationError as exc:
                raise ConfigurationError(f"{exc}; train an embedding for this round first") from None
            if phi.shape[0] != self.tree.num_classes(r):
                raise ConfigurationError(
                    f"round {r + 1} embedding covers {phi.shape[0]} infosets, expected {self.tree.num_classes(r)}"
                )
            self.phi[r] = phi
        self.blocks: dict[int, AdvisorBlock] = {}
        self.regret_sum: dict[int, np.ndarray] = {}
        self.avg_num: dict[int, np.ndarray] = {}
        for nd in self.tree.decisions:
            n = self.tree.num_classes(nd.round)
            if nd.round in self.tabular_rounds:
                self.regret_sum[nd.index] = np.zeros((n, len(nd.actions)))
                self.avg_num[nd.index] = np.zeros((n, len(nd.actions)))
            else:
                blk = AdvisorBlock.new(nd.block_key, n, self.phi[nd.round].shape[1], nd.actions)
                if weighted_average:
                    blk.average = np.zeros_like(blk.average)
                self.blocks[nd.index] = blk
        self.T = 0
        self._groups = self._group_blocks()

    def _group_blocks(self) -> dict[tuple[int, int], list[PublicNode]]:
        groups: dict[tuple[int, int], list[PublicNode]] = {}
        for nd in self.tree.decisions:
            if nd.index in self.blocks:
                groups.setdefault((nd.round, nd.player), []).append(nd)
        return groups

    # -- strategies -------------------------------------------------------------------

    def _query_all(self, attr: str) -> dict[int, np.ndarray]:
        out = {}
        for (r, _), nodes in self._groups.items():
            mats = [getattr(self.blocks[nd.index], attr) for nd in nodes]
            if attr == "average" and self.weighted_average:
                mats = [normalize_rows(mt) for mt in mats]
            joined = self.phi[r] @ np.concatenate(mats, axis=1)
            col = 0
            for nd, mt in zip(nodes, mats):
                out[nd.index] = joined[:, col:col + mt.shape[1]]
                col += mt.shape[1]
        return out

    def current_strategy(self) -> list[np.ndarray]:
        queried = self._query_all("strategy")
        return [
            regret_matching(self.regret_sum[nd.index]) if nd.index in self.regret_sum else queried[nd.index]
            for nd in self.tree.decisions
        ]

    def average_strategy(self) -> list[np.ndarray]:
        queried = self._query_all("average")
        return [
            normalize_rows(self.avg_num[nd.index]) if nd.index in self.avg_num else queried[nd.index]
            for nd in self.tree.decisions
        ]

    def regrets(self) -> list[np.ndarray]:
        """Time-averaged regrets: tabular per class, advisor-space per block."""
        return [
            self.regret_sum[nd.index] / max(self.T, 1) if nd.index in self.regret_sum else self.blocks[nd.index].regret
            for nd in self.tree.decisions
        ]

    # -- iteration --------------------------------------------------------------------

    def sample_visits(self) -> dict[tuple[int, int], np.ndarray]:
        """Boolean class masks per (player, round) touched by this iteration's deals."""
        layout = self.tree.cards
        R = self.config.num_rounds
        masks = {}
        if self.full:
            for r in range(R):
                for p in range(2):
                    masks[(p, r)] = np.ones(self.tree.num_classes(r), dtype=bool)
            return masks
        last = layout.rounds[-1]
        nb = len(last.boards)
        nv = last.size // nb
        B = self.budget
        board = self.rng.integers(nb, size=B)
        j1 = self.rng.integers(nv, size=B)
        j2 = self.rng.integers(nv, size=B)
        cards = last.hand_cards.reshape(nb, nv, -1)
        while True:
            c1, c2 = cards[board, j1], cards[board, j2]
            clash = (c1[:, :, None] == c2[:, None, :]).any(axis=(1, 2))
            if not clash.any():
                break
            j2[clash] = self.rng.integers(nv, size=int(clash.sum()))
        for p, j in enumerate((j1, j2)):
            cls = last.class_id[board * nv + j]
            for r in range(R - 1, -1, -1):
                mask = np.zeros(self.tree.num_classes(r), dtype=bool)
                mask[cls] = True
                masks[(p, r)] = mask
                if r > 0:
                    cls = layout.parent_classes(r)[cls]
        return masks

    def iterate(self) -> None:
        strategy = self.current_strategy()
        collected: dict[int, tuple[np.ndarray, np.ndarray]] = {}

        def hook(node, action_values, class_reach, sig):
            regret = action_values - np.sum(action_values * sig, axis=1, keepdims=True)
            collected[node.index] = (regret, class_reach)

        self.tree.values(strategy, hook=hook)
        masks = self.sample_visits()
        T = self.T + 1

        for nd in self.tree.decisions:
            if nd.index in self.regret_sum:
                regret, reach = collected[nd.index]
                visited = masks[(nd.player, nd.round)][:, None]
                self.regret_sum[nd.index] += np.where(visited, regret, 0.0)
                self.avg_num[nd.index] += reach[:, None] * strategy[nd.index]

        for (r, p), nodes in self._groups.items():
            phi_vis = self.phi[r] * masks[(p, r)][:, None]
            regrets = np.concatenate([collected[nd.index][0] for nd in nodes], axis=1)
            pushed = phi_vis.T @ regrets
            if self.weighted_average:
                played = np.concatenate(
                    [collected[nd.index][1][:, None] * strategy[nd.index] for nd in nodes], axis=1
                )
                avg_push = self.phi[r].T @ played
            col = 0
            for nd in nodes:
                blk = self.blocks[nd.index]
                k = len(nd.actions)
                blk.regret = ((T - 1) / T) * blk.regret + pushed[:, col:col + k] / T
                blk.T = T
                if self.weighted_average:
                    blk.average = blk.average + avg_push[:, col:col + k]
                advisor_regret_matching(blk)
                if not self.weighted_average:
                    accumulate_average(blk)
                col += k
        self.T = T

    def run(self, iterations: int, callback=None) -> None:
        for _ in range(iterations):
            self.iterate()
            if callback is not None:
                callback(self.T)

    # -- persistence ------------------------------------------------------------------

    def advisor_blocks(self) -> list[AdvisorBlock]:
        return [self.blocks[i] for i in sorted(self.blocks)]

    def save(self, path: str | Path) -> None:
        """Advisor tables as ECFRADV1; tabular round-1 tables go to ``<path>.round1`` (ECFRTAB1)."""
        save_advisor_blocks(path, self.advisor_blocks())
        if self.regret_sum:
            from .solver_core import write_table_checkpoint

            entries = []
            for nd in self.tree.decisions:
                if nd.index not in self.regret_sum:
                    continue
                keys = self.tree.infoset_keys(nd)
                reg = self.regret_sum[nd.index] / max(self.T, 1)
                for q, key in enumerate(keys):
                    entries.append((key.to_text(self.config), reg[q], self.avg_num[nd.index][q]))
            write_table_checkpoint(str(path) + ".round1", self.T, entries)

    @classmethod
    def load(cls, path: str | Path, config: GameConfig, provider: CoordinateProvider, **kwargs) -> "EmbeddingCFR":
        """Rebuild a solver from :meth:`save` output; sampling state restarts from ``seed``."""
        solver = cls(config, provider, **kwargs)
        by_key = {b.key.to_text(): b for b in solver.blocks.values()}
        stored = load_advisor_blocks(path)
        if len(stored) != len(by_key):
            raise ValueError(f"{path}: {len(stored)} blocks stored, solver has {len(by_key)}")
        for key, n, m, na, T, reg, strat, avg in stored:
            blk = by_key.get(key)
            if blk is None:
                raise KeyError(f"{path}: unknown info-block {key}")
            if (n, m, na) != (blk.n, blk.m, len(blk.actions)):
                raise ValueError(f"{path}: block {key} has shape {(n, m, na)}, expected {(blk.n, blk.m, len(blk.actions))}")
            blk.regret, blk.strategy, blk.average, blk.T = reg, strat, avg, T
            solver.T = T
        if solver.regret_sum:
            from .solver_core import read_table_checkpoint

            side = str(path) + ".round1"
            if not Path(side).exists():
                raise FileNotFoundError(f"missing first-round tables {side}")
            T, table = read_table_checkpoint(side)
            solver.T = T
            for nd in solver.tree.decisions:
                if nd.index not in solver.regret_sum:
                    continue
                for q, key in enumerate(solver.tree.infoset_keys(nd)):
                    reg, avg = table[key.to_text(config)]
                    solver.regret_sum[nd.index][q] = reg * T
                    solver.avg_num[nd.index][q] = avg
        return solver


# ---------------------------------------------------------------------------
# forced single-advisor scenario


@dataclass
class RegretDecreaseReport:
    advisor: int
    T: int  # iterations before the step
    S_before: float  # sum_a (R^T(e_p, a)_+)^2
    S_after: float
    threshold: float  # C = n |A| delta^2 ||phi_p||^2
    delta: float
    phi_norm_sq: float
    cross_term: float  # sum_a R^T(e_p,a)_+ r^{T+1}(e_p,a)
    regime: str  # "initial", "small" (S^T <= C/T) or "large"
    bound: float
    holds: bool
    max_action_gap: float = 0.0  # largest |v(I->a) - v(I->a')| seen in the block


def positive_square_sum(row: np.ndarray) -> float:
    return float(np.sum(np.maximum(row, 0.0) ** 2))


def single_advisor_scenario_step(block: AdvisorBlock, action_values: np.ndarray, coords: np.ndarray,
                                 advisor: int, delta: float, tol: float = 1e-9) -> RegretDecreaseReport:
    """One iteration in which every infoset of ``block`` plays advisor ``advisor``'s strategy.

    ``action_values`` [n, |A|] are the infosets' counterfactual action values
    (they do not depend on the block's own strategy); ``coords`` is [n, m].
    """
    p = advisor
    T = block.T
    R_before = block.regret[p].copy()
    sigma_p = regret_matching(R_before)
    block.strategy = np.tile(sigma_p, (block.m, 1))
    regrets = action_values - (action_values @ sigma_p)[:, None]
    pushed = coords[:, p] @ regrets
    cross = float(np.dot(np.maximum(R_before, 0.0), pushed))
    S_before = positive_square_sum(R_before)
    accumulate_sampled_regret(block, coords, regrets)
    S_after = positive_square_sum(block.regret[p])
    phi_norm_sq = float(np.sum(coords[:, p] ** 2))
    C = block.n * len(block.actions) * delta ** 2 * phi_norm_sq
    if T == 0:
        regime, bound = "initial", C / (T + 1)
    elif S_before <= C / T:
        regime, bound = "small", C / (T + 1)
    else:
        regime, bound = "large", T / (T + 1) * S_before
    gaps = action_values.max(axis=1) - action_values.min(axis=1)
    return RegretDecreaseReport(
        advisor=p, T=T, S_before=S_before, S_after=S_after, threshold=C, delta=delta,
        phi_norm_sq=phi_norm_sq, cross_term=cross, regime=regime, bound=bound,
        holds=S_after <= bound + tol, max_action_gap=float(gaps.max(initial=0.0)),
    )


@dataclass
class SingleAdvisorScenario:
    """Forces one block onto one advisor while the rest of the profile stays fixed."""

    config: GameConfig
    coords: np.ndarray  # [n, m] for the block's round
    trace: tuple[str, ...]
    advisor: int = 0
    profile: list | None = None  # class tables; uniform when omitted
    tree: PublicTree | None = None
    reports: list[RegretDecreaseReport] = field(default_factory=list)

    def __post_init__(self):
        self.tree = self.tree or public_tree(self.config)
        self.node = self.tree.node_for_trace(self.trace)
        profile = self.profile or self.tree.uniform_strategy()
        captured = {}

        def hook(node, action_values, class_reach, sig):
            if node.index == self.node.index:
                captured["v"] = action_values

        self.tree.values(profile, hook=hook)
        self.action_values = captured["v"]
        n = self.tree.num_classes(self.node.round)
        if self.coords.shape[0] != n:
            raise ValueError(f"coordinates cover {self.coords.shape[0]} infosets, block has {n}")
        self.block = AdvisorBlock.new(self.node.block_key, n, self.coords.shape[1], self.node.actions)
        self.delta = self.tree.utility_range

    def run(self, steps: int) -> list[RegretDecreaseReport]:
        for _ in range(steps):
            self.reports.append(
                single_advisor_scenario_step(self.block, self.action_values, self.coords, self.advisor, self.delta)
            )
        return self.reports
