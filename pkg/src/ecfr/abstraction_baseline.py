"""Expected-hand-strength bucketing and CFR over the resulting buckets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .best_response import exploitability
from .cards import GameConfig
from .hand_strength import class_strength_tensors, enumerate_classes, orbit_size
from .solver_core import TabularCFR


def ehs_scalar(tensor: np.ndarray, round_index: int | None = None) -> float:
    """w_w + w_d / 2 of the given round's row of a strength tensor (last row by default)."""
    t = np.asarray(tensor, dtype=float)
    row = t[-1] if round_index is None else t[round_index]
    return float(row[2] + 0.5 * row[1])


def ehs_features(config: GameConfig, round_index: int, all_rounds: bool = False) -> np.ndarray:
    """Per-class features at a round: [n, 1] current EHS, or every row flattened.

    Values are rounded to 12 decimals so float noise does not split equal hands.
    """
    tensors = class_strength_tensors(config, round_index)
    if all_rounds:
        return np.round(tensors.reshape(len(tensors), -1), 12)
    return np.round(tensors[:, -1, 2] + 0.5 * tensors[:, -1, 1], 12)[:, None]


def class_weights(config: GameConfig, round_index: int) -> np.ndarray:
    """How many raw hands each canonical class stands for."""
    return np.array([orbit_size(h, config) for h in enumerate_classes(config, round_index)], dtype=float)


@dataclass(frozen=True)
class ClusterConfig:
    k: int
    max_iter: int = 100
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"need at least one bucket, got k={self.k}")


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    history: list[float] = field(default_factory=list)  # objective after each Lloyd step of the kept restart


def _inertia(x, w, centers, labels) -> float:
    return float(np.sum(w * np.sum((x - centers[labels]) ** 2, axis=1)))


def _assign(x, centers):
    d = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1), d


def _plus_plus(x, w, k, rng):
    centers = [x[rng.choice(len(x), p=w / w.sum())]]
    nearest = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        d = nearest * w
        if d.sum() <= 0:
            c = x[rng.integers(len(x))]
        else:
            c = x[rng.choice(len(x), p=d / d.sum())]
        centers.append(c)
        nearest = np.minimum(nearest, np.sum((x - c) ** 2, axis=1))
    return np.array(centers, dtype=float)


def kmeans(features: np.ndarray, config: ClusterConfig, weights: np.ndarray | None = None) -> KMeansResult:
    """Weighted Lloyd iterations with k-means++ seeding; best of ``restarts`` by objective.

    An emptied bucket is reseeded at the point currently contributing most
    to the objective, so k buckets stay nonempty whenever there are at least
    k distinct points.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=float)
    k = min(config.k, len(x))
    rng = np.random.default_rng(config.seed)
    best = None
    for _ in range(config.restarts):
        centers = _plus_plus(x, w, k, rng)
        labels, _ = _assign(x, centers)
        history = []
        for _ in range(config.max_iter):
            for j in range(k):
                member = labels == j
                if member.any():
                    centers[j] = np.average(x[member], axis=0, weights=w[member])
            # the update above cannot raise the objective; reseed empties next
            counts = np.bincount(labels, minlength=k)
            for j in np.flatnonzero(counts == 0):
                cost = w * np.sum((x - centers[labels]) ** 2, axis=1)
                i = int(np.argmax(cost))
                if cost[i] <= 0:
                    break
                centers[j] = x[i]
                labels[i] = j
            new_labels, _ = _assign(x, centers)
            history.append(_inertia(x, w, centers, labels))
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
        inertia = _inertia(x, w, centers, labels)
        if best is None or inertia < best.inertia - 1e-15:
            best = KMeansResult(labels.copy(), centers.copy(), inertia, history)
    # drop buckets left empty (fewer distinct points than k), then relabel by center order
    used = np.unique(best.labels)
    centers = best.centers[used]
    order = np.lexsort(centers.T[::-1])
    remap = np.full(k, -1, dtype=np.int64)
    remap[used[order]] = np.arange(len(used))
    return KMeansResult(remap[best.labels], centers[order], best.inertia, best.history)


@dataclass
class BucketMap:
    """Per round, a bucket id for every canonical class; None keeps a round unabstracted."""

    config: GameConfig
    rounds: list[np.ndarray | None]

    def __post_init__(self):
        for r, b in enumerate(self.rounds):
            if b is None:
                continue
            n = len(enumerate_classes(self.config, r))
            if len(b) != n:
                raise ValueError(f"round {r + 1}: map covers {len(b)} of {n} classes")
            used = np.unique(b)
            if used[0] < 0 or len(used) != used[-1] + 1:
                raise ValueError(f"round {r + 1}: bucket ids must be 0..k-1 with no gaps")

    def num_buckets(self, round_index: int) -> int:
        b = self.rounds[round_index]
        return len(enumerate_classes(self.config, round_index)) if b is None else int(b.max()) + 1

    def bucket_of(self, round_index: int, class_id: int) -> int:
        b = self.rounds[round_index]
        return class_id if b is None else int(b[class_id])

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "canonical_hand_id", "bucket"])
            for r in range(self.config.num_rounds):
                for c in range(len(enumerate_classes(self.config, r))):
                    w.writerow([r + 1, c, self.bucket_of(r, c)])

    @classmethod
    def load(cls, path: str | Path, config: GameConfig) -> "BucketMap":
        rows: dict[int, dict[int, int]] = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.setdefault(int(rec["round"]) - 1, {})[int(rec["canonical_hand_id"])] = int(rec["bucket"])
        out = []
        for r in range(config.num_rounds):
            n = len(enumerate_classes(config, r))
            got = rows.get(r)
            if got is None:
                out.append(None)
                continue
            missing = [c for c in range(n) if c not in got]
            if missing:
                raise ValueError(f"{path}: round {r + 1} has no bucket for canonical hand {missing[0]}")
            arr = np.array([got[c] for c in range(n)], dtype=np.int64)
            out.append(None if np.array_equal(arr, np.arange(n)) else arr)
        return cls(config, out)

    @classmethod
    def identity(cls, config: GameConfig) -> "BucketMap":
        return cls(config, [None] * config.num_rounds)


def ehs_bucket_map(config: GameConfig, budgets: dict[int, int], *, restarts: int = 3, seed: int = 0,
                   max_iter: int = 100, all_rounds: bool = False) -> BucketMap:
    """Cluster each budgeted round's classes by EHS, weighting classes by orbit size."""
    rounds: list[np.ndarray | None] = [None] * config.num_rounds
    for r, k in sorted(budgets.items()):
        feats = ehs_features(config, r, all_rounds)
        res = kmeans(feats, ClusterConfig(k, max_iter, restarts, seed + r), class_weights(config, r))
        rounds[r] = res.labels
    return BucketMap(config, rounds)


def default_budgets(config: GameConfig, fraction: float = 0.4) -> dict[int, int]:
    """Bucket counts for every round after the first, as a fraction of its class count."""
    return {
        r: max(1, int(round(fraction * len(enumerate_classes(config, r)))))
        for r in range(1, config.num_rounds)
    }


@dataclass
class BucketedRun:
    solver: TabularCFR
    trace: list[tuple[int, float]]  # (iteration, exploitability in mb/g)


def bucketed_cfr(config: GameConfig, bucket_map: BucketMap, iterations: int, eval_every: int = 8,
                 callback=None) -> BucketedRun:
    """Vanilla CFR with bucket ids in place of hands; evaluated on the real game."""
    solver = TabularCFR(config, buckets=bucket_map.rounds)
    trace = []
    for t in range(1, iterations + 1):
        solver.iterate()
        if t % eval_every == 0 or t == iterations:
            eps = exploitability(config, solver.average_strategy(), solver.tree).epsilon_mbg
            trace.append((t, eps))
            if callback is not None:
                callback(t, eps)
    return BucketedRun(solver, trace)
