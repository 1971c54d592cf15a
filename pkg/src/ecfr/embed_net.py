"""Hand embedding network and coordinate providers.

A hand at round s is an image-like tensor [suits, ranks, s]. The network
applies K kernels of shape [ranks, s] to every suit channel, rectifies,
flattens to suits*K values, maps linearly to m logits and takes a softmax:
those m probabilities are the hand's embedding coordinates. A last linear map
from the coordinates predicts the hand's strength tensor [s, 3]; training
minimises the squared error of that prediction.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .cards import GameConfig
from .game_engine import InfoSetKey
from .hand_strength import CanonicalHand, class_index, class_strength_tensors, enumerate_classes, orbit_size

NET_MAGIC = b"ECFRNET1"


class ConfigurationError(RuntimeError):
    pass


def encode(hand: CanonicalHand, round_count: int, config: GameConfig) -> np.ndarray:
    """Binary [suits, ranks, round_count] tensor of a hand's first ``round_count`` rounds."""
    if hand.num_rounds < round_count:
        raise ValueError(f"hand has {hand.num_rounds} rounds, cannot encode {round_count}")
    if hand.num_rounds > round_count:
        hand = hand.prefix(round_count, config)
    S = config.num_suits
    x = np.zeros((S, config.num_ranks, round_count), dtype=np.float32)
    for r, group in enumerate(hand.rounds):
        for c in group:
            x[c % S, c // S, r] = 1.0
    return x


@dataclass
class EmbeddingParams:
    conv_w: np.ndarray  # [K, R, s]
    conv_b: np.ndarray  # [K]
    w1: np.ndarray  # [S*K, m]
    b1: np.ndarray  # [m]
    w2: np.ndarray  # [m, s*3]
    b2: np.ndarray  # [s*3]

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        """(suits, ranks, s, K, m)."""
        K, R, s = self.conv_w.shape
        return self.w1.shape[0] // K, R, s, K, self.w1.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    def astype(self, dtype) -> "EmbeddingParams":
        return EmbeddingParams(*(a.astype(dtype) for a in self.arrays()))

    def copy(self) -> "EmbeddingParams":
        return EmbeddingParams(*(a.copy() for a in self.arrays()))

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_params(suits: int, ranks: int, s: int, kernels: int, m: int, seed: int,
                dtype=np.float32) -> EmbeddingParams:
    rng = np.random.default_rng(seed)
    fan_conv = ranks * s
    return EmbeddingParams(
        conv_w=rng.normal(0.0, np.sqrt(2.0 / fan_conv), (kernels, ranks, s)).astype(dtype),
        conv_b=np.full(kernels, 0.01, dtype=dtype),
        w1=rng.normal(0.0, np.sqrt(1.0 / (suits * kernels)), (suits * kernels, m)).astype(dtype),
        b1=np.zeros(m, dtype=dtype),
        w2=rng.normal(0.0, np.sqrt(1.0 / m), (m, s * 3)).astype(dtype),
        b2=np.zeros(s * 3, dtype=dtype),
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(params: EmbeddingParams, x: np.ndarray) -> np.ndarray:
    S, R, s, _, _ = params.dims
    single = x.ndim == 3
    xb = x[None] if single else x
    if xb.ndim != 4 or xb.shape[1:] != (S, R, s):
        raise ValueError(f"input shape {x.shape} does not match network dims {(S, R, s)}")
    return xb


def _forward_cache(params: EmbeddingParams, xb: np.ndarray):
    S, R, s, K, m = params.dims
    B = xb.shape[0]
    xf = xb.reshape(B * S, R * s)
    z = xf @ params.conv_w.reshape(K, R * s).T + params.conv_b  # [B*S, K]
    h = np.maximum(z, 0).reshape(B, S * K)
    logits = h @ params.w1 + params.b1
    coords = _softmax(logits)
    pred = coords @ params.w2 + params.b2
    return xf, z, h, logits, coords, pred


def forward(params: EmbeddingParams, x: np.ndarray):
    """(coords [.., m], prediction [.., s, 3]) for one tensor or a batch."""
    xb = _check_input(params, x)
    *_, coords, pred = _forward_cache(params, xb)
    s = params.dims[2]
    pred = pred.reshape(len(xb), s, 3)
    if x.ndim == 3:
        return coords[0], pred[0]
    return coords, pred


def loss_and_grad(params: EmbeddingParams, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None):
    """Mean squared error of the strength prediction and its exact gradient."""
    xb = _check_input(params, x)
    S, R, s, K, m = params.dims
    B = xb.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    yb = y.reshape(B, s * 3)
    xf, z, h, logits, coords, pred = _forward_cache(params, xb)
    diff = pred - yb
    if weights is None:
        w = np.full((B, 1), 1.0 / B, dtype=pred.dtype)
    else:
        w = (np.asarray(weights, dtype=pred.dtype) / np.sum(weights)).reshape(B, 1)
    loss = float(np.sum(w * diff * diff) / (s * 3))
    g_pred = (2.0 / (s * 3)) * w * diff  # [B, s*3]
    g_w2 = coords.T @ g_pred
    g_b2 = g_pred.sum(axis=0)
    g_coords = g_pred @ params.w2.T
    g_logits = coords * (g_coords - np.sum(g_coords * coords, axis=1, keepdims=True))
    g_w1 = h.T @ g_logits
    g_b1 = g_logits.sum(axis=0)
    g_h = (g_logits @ params.w1.T).reshape(B * S, K)
    g_z = g_h * (z > 0)
    g_conv_w = (g_z.T @ xf).reshape(K, R, s)
    g_conv_b = g_z.sum(axis=0)
    grad = EmbeddingParams(g_conv_w, g_conv_b, g_w1, g_b1, g_w2, g_b2)
    return loss, grad


@dataclass
class TrainConfig:
    lr: float = 2.0
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    m: int = 16
    kernels: int = 125
    momentum: float = 0.0  # 0 gives plain SGD
    init_scale: float = 4.0  # multiplies the initial first linear map
    weighted: bool = False  # weight hands by their suit-orbit size

    def __post_init__(self):
        if self.lr <= 0 or self.epochs <= 0 or self.batch_size <= 0 or self.kernels <= 0:
            raise ValueError("learning rate, epochs, batch size and kernels must be positive")
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class TrainResult:
    params: EmbeddingParams
    epoch_losses: list[float]
    final_mse: float
    baseline_mse: float  # predicting the (weighted) mean target


def round_dataset(config: GameConfig, round_index: int):
    """(X [n, S, R, s], Y [n, s, 3], orbit weights [n]) over every class of a round."""
    hands = enumerate_classes(config, round_index)
    s = round_index + 1
    X = np.stack([encode(h, s, config) for h in hands])
    Y = class_strength_tensors(config, round_index).astype(np.float32)
    W = np.array([orbit_size(h, config) for h in hands], dtype=np.float64)
    return X, Y, W


def mean_predictor_mse(Y: np.ndarray, weights: np.ndarray | None = None) -> float:
    flat = Y.reshape(len(Y), -1).astype(np.float64)
    w = np.full(len(Y), 1.0 / len(Y)) if weights is None else weights / weights.sum()
    mean = (w[:, None] * flat).sum(axis=0)
    return float((w[:, None] * (flat - mean) ** 2).sum() / flat.shape[1])


def train_round(config: TrainConfig, X: np.ndarray, Y: np.ndarray, weights: np.ndarray | None = None) -> TrainResult:
    """Plain minibatch SGD with seeded shuffling; deterministic under the seed."""
    n, S, R, s = X.shape
    params = init_params(S, R, s, config.kernels, config.m, config.seed)
    params.w1 *= np.float32(config.init_scale)
    velocity = [np.zeros_like(a) for a in params.arrays()]
    mu, lr = np.float32(config.momentum), np.float32(config.lr)
    X = X.astype(np.float32)
    Y = Y.reshape(n, s * 3).astype(np.float32)
    w_all = weights if (config.weighted and weights is not None) else None
    rng = np.random.default_rng(config.seed + 1)
    losses = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            wb = None if w_all is None else w_all[idx]
            _, grad = loss_and_grad(params, X[idx], Y[idx], wb)
            for p, v, g in zip(params.arrays(), velocity, grad.arrays()):
                v *= mu
                v -= lr * g.astype(np.float32)
                p += v
        losses.append(dataset_mse(params, X, Y, w_all))
    return TrainResult(params, losses, losses[-1], mean_predictor_mse(Y, w_all))


def dataset_mse(params: EmbeddingParams, X: np.ndarray, Y: np.ndarray, weights=None) -> float:
    _, pred = forward(params, X)
    diff = pred.reshape(len(X), -1).astype(np.float64) - Y.reshape(len(X), -1)
    w = np.full(len(X), 1.0 / len(X)) if weights is None else weights / weights.sum()
    return float((w[:, None] * diff * diff).sum() / diff.shape[1])


def default_m(num_classes: int, fraction: float = 0.1) -> int:
    return max(4, int(num_classes * fraction))


def coordinates(params: EmbeddingParams, X: np.ndarray) -> np.ndarray:
    """Softmax coordinates in float64 (logits from the float32 network)."""
    xb = _check_input(params, X)
    *_, logits, _, _ = _forward_cache(params, xb)
    return _softmax(logits.astype(np.float64))


# ---------------------------------------------------------------------------
# checkpoints


def save_params(path: str | Path, params: EmbeddingParams) -> None:
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(struct.pack("<5i", *params.dims))
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_params(path: str | Path) -> EmbeddingParams:
    data = Path(path).read_bytes()
    if data[:8] != NET_MAGIC:
        raise ValueError(f"{path}: not an ECFRNET1 checkpoint")
    S, R, s, K, m = struct.unpack_from("<5i", data, 8)
    shapes = [(K, R, s), (K,), (S * K, m), (m,), (m, s * 3), (s * 3,)]
    pos = 28
    arrays = []
    for shp in shapes:
        count = int(np.prod(shp))
        arrays.append(np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shp).astype(np.float32))
        pos += 4 * count
    if pos != len(data):
        raise ValueError(f"{path}: size does not match dims {(S, R, s, K, m)}")
    return EmbeddingParams(*arrays)


# ---------------------------------------------------------------------------
# coordinate providers


class CoordinateProvider:
    """Source of embedding coordinates: row q of ``coords(r)`` is class q's vector."""

    def __init__(self, config: GameConfig):
        self.config = config

    def coords(self, round_index: int) -> np.ndarray:
        raise NotImplementedError

    def has_round(self, round_index: int) -> bool:
        try:
            self.coords(round_index)
        except ConfigurationError:
            return False
        return True

    def m(self, round_index: int) -> int:
        return self.coords(round_index).shape[1]

    def embed(self, key: InfoSetKey) -> np.ndarray:
        """Coordinates of an infoset; depends on its cards only, never the betting trace."""
        q = class_index(self.config, key.round)[key.hand()]
        return self.coords(key.round)[q]

    def write_csv(self, path: str | Path, round_index: int) -> None:
        phi = self.coords(round_index)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["canonical_hand_id"] + [f"phi_{p}" for p in range(phi.shape[1])])
            for q, row in enumerate(phi):
                w.writerow([q] + [f"{v:.17g}" for v in row])


class MatrixProvider(CoordinateProvider):
    def __init__(self, config: GameConfig, matrices: dict[int, np.ndarray], check: bool = True):
        super().__init__(config)
        self.matrices = {r: np.asarray(m, dtype=np.float64) for r, m in matrices.items()}
        if check:
            for r, m in self.matrices.items():
                n = len(enumerate_classes(config, r))
                if m.shape[0] != n:
                    raise ValueError(f"round {r + 1} coordinates have {m.shape[0]} rows, expected {n}")
                if (m < 0).any() or not np.allclose(m.sum(axis=1), 1.0, atol=1e-9):
                    raise ValueError(f"round {r + 1} coordinates are not probability vectors")

    def coords(self, round_index: int) -> np.ndarray:
        try:
            return self.matrices[round_index]
        except KeyError:
            raise ConfigurationError(f"no embedding for round {round_index + 1}") from None


def identity_provider(config: GameConfig, rounds=None) -> MatrixProvider:
    rounds = range(config.num_rounds) if rounds is None else rounds
    return MatrixProvider(config, {r: np.eye(len(enumerate_classes(config, r))) for r in rounds})


def dirichlet_provider(config: GameConfig, m: dict[int, int], seed: int, alpha: float = 1.0) -> MatrixProvider:
    rng = np.random.default_rng(seed)
    mats = {}
    for r in sorted(m):
        n = len(enumerate_classes(config, r))
        mats[r] = rng.dirichlet(np.full(m[r], alpha), size=n)
    return MatrixProvider(config, mats)


def single_advisor_provider(config: GameConfig, m: dict[int, int], advisor: int = 0) -> MatrixProvider:
    """Every infoset puts all confidence on one advisor."""
    mats = {}
    for r, mr in m.items():
        mat = np.zeros((len(enumerate_classes(config, r)), mr))
        mat[:, advisor] = 1.0
        mats[r] = mat
    return MatrixProvider(config, mats)


class NetworkProvider(CoordinateProvider):
    """Coordinates from trained networks, computed once per round and cached."""

    def __init__(self, config: GameConfig, params: dict[int, EmbeddingParams]):
        super().__init__(config)
        self.params = params
        self._cache: dict[int, np.ndarray] = {}

    def coords(self, round_index: int) -> np.ndarray:
        if round_index not in self.params:
            raise ConfigurationError(f"no trained network for round {round_index + 1}")
        got = self._cache.get(round_index)
        if got is None:
            X, _, _ = _round_inputs(self.config, round_index)
            got = coordinates(self.params[round_index], X)
            self._cache[round_index] = got
        return got


@lru_cache(maxsize=16)
def _round_inputs(config: GameConfig, round_index: int):
    hands = enumerate_classes(config, round_index)
    return np.stack([encode(h, round_index + 1, config) for h in hands]), None, None
