import numpy as np
import pytest

from ecfr.cards import preset
from ecfr.embed_net import (
    ConfigurationError,
    EmbeddingParams,
    NetworkProvider,
    TrainConfig,
    coordinates,
    default_m,
    dirichlet_provider,
    encode,
    forward,
    identity_provider,
    init_params,
    load_params,
    loss_and_grad,
    mean_predictor_mse,
    round_dataset,
    save_params,
    train_round,
)
from ecfr.game_engine import InfoSetKey
from ecfr.hand_strength import canonicalize

from conftest import finite_difference_check, random_tiny_net

N211 = preset("numeral211")


def test_encode_isomorphic_hands():
    c = N211.parse_cards
    x = canonicalize([c("AcTc"), c("9d"), c("2c")], N211)
    y = canonicalize([c("AhTh"), c("9s"), c("2h")], N211)
    tx, ty = encode(x, 3, N211), encode(y, 3, N211)
    assert tx.shape == (4, 10, 3)
    assert np.array_equal(tx, ty)
    assert tx.sum() == 4
    assert np.array_equal(encode(x, 2, N211), encode(y, 2, N211))
    assert encode(x, 2, N211).sum() == 3
    assert np.array_equal(encode(canonicalize(x.rounds, N211), 3, N211), tx)
    with pytest.raises(ValueError):
        encode(x.prefix(1, N211), 2, N211)


def tiny_params():
    return EmbeddingParams(
        conv_w=np.array([[[1.0], [2.0]]]),
        conv_b=np.array([0.5]),
        w1=np.array([[1.0, -1.0]]),
        b1=np.zeros(2),
        w2=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        b2=np.array([0.0, 0.0, 0.25]),
    )


def test_forward_by_hand():
    # conv: 1*1 + 2*0 + 0.5 = 1.5; logits (1.5, -1.5); softmax = (e^3, 1) / (1 + e^3)
    coords, pred = forward(tiny_params(), np.array([[[1.0], [0.0]]]))
    np.testing.assert_allclose(coords, [0.9525741268224334, 0.04742587317756678], rtol=1e-14)
    np.testing.assert_allclose(pred, [[0.9525741268224334, 0.04742587317756678, 0.25]], rtol=1e-14)


def test_forward_zero_input_uniform():
    p = init_params(4, 5, 2, 3, 6, seed=1)
    p.conv_b[:] = 0
    p.b1[:] = 0
    coords, pred = forward(p, np.zeros((4, 5, 2), dtype=np.float32))
    np.testing.assert_allclose(coords, 1 / 6, atol=1e-7)
    assert pred.shape == (2, 3)


def test_forward_shape_mismatch():
    with pytest.raises(ValueError):
        forward(init_params(4, 5, 2, 3, 6, seed=1), np.zeros((4, 5, 3)))


def test_coords_are_distributions(rng):
    p = init_params(4, 5, 3, 8, 7, seed=2)
    x = (rng.random((20, 4, 5, 3)) < 0.3).astype(np.float32)
    coords, _ = forward(p, x)
    assert np.all(coords > 0)
    np.testing.assert_allclose(coords.sum(axis=1), 1, atol=1e-6)
    np.testing.assert_allclose(coordinates(p, x).sum(axis=1), 1, atol=1e-12)


def test_zero_loss_at_target():
    p = init_params(2, 3, 2, 2, 3, seed=3, dtype=np.float64)
    x = np.ones((2, 2, 3, 2))
    _, pred = forward(p, x)
    loss, grad = loss_and_grad(p, x, pred)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grad.arrays())


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    params, x, y = random_tiny_net(seed)
    assert finite_difference_check(params, x, y) < 1e-4


def test_loss_decreases_on_toy_set(rng):
    p = init_params(2, 3, 1, 4, 3, seed=0, dtype=np.float64)
    x = (rng.random((10, 2, 3, 1)) < 0.5).astype(np.float64)
    y = rng.dirichlet(np.ones(3), size=(10, 1))
    losses = []
    for _ in range(50):
        loss, g = loss_and_grad(p, x, y)
        losses.append(loss)
        for a, da in zip(p.arrays(), g.arrays()):
            a -= 0.05 * da
    smooth = np.convolve(losses, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smooth) < 0)


def test_kuhn_round_trains_to_small_loss(kuhn):
    X, Y, W = round_dataset(kuhn, 0)
    res = train_round(TrainConfig(m=3, epochs=400, batch_size=3), X, Y)
    assert res.final_mse < 1e-3


def test_training_is_reproducible(kuhn):
    X, Y, _ = round_dataset(kuhn, 0)
    a = train_round(TrainConfig(m=3, epochs=20, seed=5), X, Y)
    b = train_round(TrainConfig(m=3, epochs=20, seed=5), X, Y)
    assert all(np.array_equal(u, v) for u, v in zip(a.params.arrays(), b.params.arrays()))
    assert a.epoch_losses == b.epoch_losses


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(m=1)
    with pytest.raises(ValueError):
        TrainConfig(lr=0)


def test_mean_predictor_baseline():
    Y = np.array([[[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]]])
    # mean is (0.5, 0, 0.5); each row is off by 0.25 + 0 + 0.25 over three entries
    assert mean_predictor_mse(Y) == pytest.approx(1 / 6)
    assert default_m(3185) == 318 and default_m(10) == 4


def test_checkpoint_round_trip(tmp_path):
    p = init_params(4, 5, 2, 3, 6, seed=4)
    path = tmp_path / "n.ecfrnet"
    save_params(path, p)
    data = path.read_bytes()
    assert data[:8] == b"ECFRNET1"
    assert len(data) == 8 + 20 + 4 * sum(a.size for a in p.arrays())
    q = load_params(path)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    path.write_bytes(data[:-4])
    with pytest.raises(ValueError):
        load_params(path)


def test_network_provider(numeral20, tmp_path):
    X, Y, W = round_dataset(numeral20, 1)
    res = train_round(TrainConfig(m=8, epochs=2), X, Y)
    prov = NetworkProvider(numeral20, {1: res.params})
    phi = prov.coords(1)
    assert phi.shape == (255, 8)
    np.testing.assert_allclose(phi.sum(axis=1), 1, atol=1e-12)
    assert prov.coords(1) is phi  # cached
    np.testing.assert_array_equal(phi, coordinates(res.params, X))
    hand = canonicalize([numeral20.parse_cards("AsTs"), numeral20.parse_cards("9h")], numeral20)
    a = InfoSetKey(0, hand.rounds[0], hand.rounds[1:], ("cc", "c"))
    b = InfoSetKey(1, hand.rounds[0], hand.rounds[1:], ("rc", "r"))
    assert np.array_equal(prov.embed(a), prov.embed(b))
    assert prov.m(1) == 8
    with pytest.raises(ConfigurationError):
        prov.coords(2)
    assert not prov.has_round(0)
    prov.write_csv(tmp_path / "phi.csv", 1)
    assert (tmp_path / "phi.csv").read_text().count("\n") == 256


def test_matrix_providers(kuhn, numeral20):
    assert np.array_equal(identity_provider(kuhn).coords(0), np.eye(3))
    d = dirichlet_provider(numeral20, {1: 5}, seed=0)
    np.testing.assert_allclose(d.coords(1).sum(axis=1), 1)
    from ecfr.embed_net import MatrixProvider

    with pytest.raises(ValueError):
        MatrixProvider(kuhn, {0: np.ones((3, 2))})
