import numpy as np
import pytest

from bpinn_ageing.dropout import (
    check_rate,
    deterministic_predict,
    dropout_masks,
    mc_predict,
    train_dropout,
)
from bpinn_ageing.fem_oracle import GridSpec
from bpinn_ageing.network import TanhMLP
from bpinn_ageing.pinn import ConfigError, LossWeights, TrainConfig, sample_points, train
from bpinn_ageing.thermal_model import manufactured_problem


def cfg(epochs=30):
    return TrainConfig(epochs=epochs, batch_size=32, n_colloc=32, log_every=10)


@pytest.fixture(scope="module")
def setup():
    prob = manufactured_problem()
    return prob, sample_points(prob, (20, 40, 100), 0)


@pytest.mark.parametrize("rate", [-0.1, 1.0])
def test_rate_bounds(rate):
    with pytest.raises(ConfigError):
        check_rate(rate)


def test_zero_rate_is_bitwise_plain_pinn(setup):
    prob, pts = setup
    w = LossWeights(1, 1, 0.01)
    d = train_dropout(TanhMLP([20, 20, 20]), prob, pts, w, 0.0, cfg(), seed=5)
    p = train(TanhMLP([20, 20, 20]), prob, pts, w, cfg(), seed=5)
    assert d.theta.tobytes() == p.theta.tobytes()
    g = GridSpec(9, 7)
    net = TanhMLP([20, 20, 20])
    assert deterministic_predict(net, d.theta, g).tobytes() == deterministic_predict(net, p.theta, g).tobytes()


def test_inverted_scaling_preserves_expectation():
    rng = np.random.default_rng(0)
    (m,) = dropout_masks(rng, [1], 100_000, 0.2)
    assert set(np.unique(m)) == {0.0, 1.25}
    activation = 0.37
    assert abs(np.mean(m[:, 0] * activation) - activation) <= 0.01 * activation


def test_same_seed_same_masks_and_training(setup):
    prob, pts = setup
    a = [dropout_masks(np.random.default_rng(3), [4, 5], 6, 0.3) for _ in range(2)]
    assert all(np.array_equal(x, y) for x, y in zip(*a))
    r1 = train_dropout(TanhMLP([8, 8]), prob, pts, LossWeights(1, 1, 0.01), 0.1, cfg(), seed=2)
    r2 = train_dropout(TanhMLP([8, 8]), prob, pts, LossWeights(1, 1, 0.01), 0.1, cfg(), seed=2)
    assert r1.theta.tobytes() == r2.theta.tobytes()
    assert dropout_masks(np.random.default_rng(0), [3], 2, 0.0) is None


def test_extreme_rate_is_flagged_not_fatal(setup):
    prob, pts = setup
    res = train_dropout(TanhMLP([20, 20, 20]), prob, pts, LossWeights(1, 1, 0.01), 0.99, cfg(60), seed=0)
    assert res.degenerate and res.rate == 0.99


def test_moderate_rate_trains(setup):
    prob, pts = setup
    res = train_dropout(TanhMLP([20, 20, 20]), prob, pts, LossWeights(1, 1, 0.01), 0.05, cfg(100), seed=0)
    assert not res.degenerate


def test_zero_rate_prediction_has_no_spread():
    net = TanhMLP([6, 6])
    pred = mc_predict(net, net.init_params(0), 0.0, GridSpec(5, 5), K=7, seed=0)
    assert np.all(pred.std == 0) and pred.n_samples == 7


def test_mc_std_stable_under_doubling_passes():
    net = TanhMLP([20, 20, 20])
    theta = net.init_params(1)
    g = GridSpec(6, 6)
    k1 = mc_predict(net, theta, 0.1, g, K=2000, seed=0, keep_samples=False)
    k2 = mc_predict(net, theta, 0.1, g, K=4000, seed=0, keep_samples=False)
    assert abs(np.median(k1.std) / np.median(k2.std) - 1) <= 0.05


def test_mc_pass_shares_mask_across_grid():
    # with one hidden unit and rate 0.5 every pass is either the full or the zero-hidden network
    net = TanhMLP([1])
    theta = net.init_params(0)
    theta[-1] = 0.0
    g = GridSpec(4, 4)
    kept = 2.0 * deterministic_predict(net, theta, g)
    pred = mc_predict(net, theta, 0.5, g, K=20, seed=1)
    for s in pred.samples:
        assert np.all(s == 0) or np.array_equal(s, kept)


def test_mc_requires_two_passes():
    net = TanhMLP([3])
    with pytest.raises(ValueError):
        mc_predict(net, net.init_params(0), 0.1, GridSpec(3, 3), K=1)
