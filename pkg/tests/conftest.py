import numpy as np
import pytest

from ecfr.cards import GameConfig, preset


def tiny_config(hole_cards: int = 1) -> GameConfig:
    """Two rounds, 3 ranks x 2 suits: small enough for explicit history trees."""
    return GameConfig(
        num_ranks=3, num_suits=2, num_hole_cards=hole_cards, community_per_round=(1,), ante=1,
        bet_size_per_round=(1, 2), max_raises_per_round=2, blind_unit=1, name=f"tiny-h{hole_cards}",
    )


def toy_three_round() -> GameConfig:
    """Three rounds on a 4 x 2 deck, for strength and engine checks with a middle round."""
    return GameConfig(
        num_ranks=4, num_suits=2, num_hole_cards=1, community_per_round=(1, 1), ante=1,
        bet_size_per_round=(1, 2, 2), max_raises_per_round=1, blind_unit=1, name="toy3",
    )


@pytest.fixture(scope="session")
def kuhn():
    return preset("kuhn")


@pytest.fixture(scope="session")
def numeral20():
    return preset("numeral20")


@pytest.fixture(scope="session")
def tiny():
    return tiny_config(1)


@pytest.fixture(scope="session")
def tiny2():
    return tiny_config(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def finite_difference_check(params, x, y, h=1e-6):
    """Max relative error between the analytic gradient and central differences over every parameter."""
    from ecfr.embed_net import loss_and_grad

    _, grad = loss_and_grad(params, x, y)
    worst = 0.0
    for p, g in zip(params.arrays(), grad.arrays()):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up, _ = loss_and_grad(params, x, y)
            flat[i] = old - h
            down, _ = loss_and_grad(params, x, y)
            flat[i] = old
            num = (up - down) / (2 * h)
            worst = max(worst, abs(num - gflat[i]) / max(abs(num) + abs(gflat[i]), 1e-10))
    return worst


def random_tiny_net(seed):
    """Random float64 network and batch with small dims; returns (params, x, y)."""
    from ecfr.embed_net import init_params

    rng = np.random.default_rng(seed)
    S, R, s = int(rng.integers(1, 4)), int(rng.integers(2, 5)), int(rng.integers(1, 4))
    K, m, B = int(rng.integers(1, 4)), int(rng.integers(2, 5)), int(rng.integers(1, 5))
    params = init_params(S, R, s, K, m, seed=seed, dtype=np.float64)
    # keep conv pre-activations away from the rectifier kink
    params.conv_b[:] = rng.uniform(0.2, 0.5, size=K)
    x = (rng.random((B, S, R, s)) < 0.4).astype(np.float64)
    y = rng.dirichlet(np.ones(3), size=(B, s))
    return params, x, y


# one pass/fail line per acceptance criterion, printed after the run
_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(code, text): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    code, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _criteria[code] = ("PASS" if rep.passed else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_criteria):
        status, text = _criteria[code]
        terminalreporter.write_line(f"{code} {status}  {text}")
