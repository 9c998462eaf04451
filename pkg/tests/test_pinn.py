import numpy as np
import pytest
from numpy.testing import assert_allclose

from bpinn_ageing.adam import Adam, AdamConfig
from bpinn_ageing.fem_oracle import GridSpec
from bpinn_ageing.network import TanhMLP
from bpinn_ageing.pinn import (
    Batch,
    BatchSchedule,
    ConfigError,
    LossWeights,
    PhysicsModel,
    TrainConfig,
    TrainingDivergence,
    TrainingPoints,
    loss_terms,
    sample_points,
    train,
)
from bpinn_ageing.predictive import evaluate_grid
from bpinn_ageing.thermal_model import DiffusionProblem, manufactured_problem


def zero_problem():
    z = lambda s: np.zeros_like(np.asarray(s, dtype=float))  # noqa: E731
    return DiffusionProblem(1.0, 0.5, z, z, z, z)


def textbook_adam(theta, grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh, vh = m / (1 - b1 ** t), v / (1 - b2 ** t)
        theta = theta - lr * mh / (np.sqrt(vh) + eps)
    return theta


def test_adam_matches_textbook_form():
    rng = np.random.default_rng(0)
    grads = rng.standard_normal((50, 7))
    theta = rng.standard_normal(7)
    opt = Adam(7, AdamConfig(lr=0.03))
    p = theta.copy()
    for g in grads:
        opt.step(p, g)
    assert_allclose(p, textbook_adam(theta, grads, lr=0.03), rtol=1e-12, atol=1e-14)


def test_adam_first_step_is_lr_times_sign():
    p = np.array([1.0, -2.0, 3.0])
    Adam(3, AdamConfig(lr=0.1)).step(p, np.array([5.0, -1e-3, 0.2]))
    assert_allclose(p, [0.9, -1.9, 2.9], rtol=1e-6)


def test_adam_minimises_quadratic():
    p = np.array([3.0, -4.0])
    opt = Adam(2, AdamConfig(lr=0.05))
    for _ in range(2000):
        opt.step(p, 2 * p)
    assert np.all(np.abs(p) < 1e-3)


@pytest.mark.parametrize("bad", [dict(lr=0), dict(beta1=1.0), dict(eps=0)])
def test_adam_config_validation(bad):
    with pytest.raises(ValueError):
        AdamConfig(**bad)


def test_point_counts_at_full_scale():
    pts = sample_points(manufactured_problem(), (200, 11520, 10000), 0)
    assert (pts.n0, pts.nb, pts.nr) == (200, 11520, 10000)
    assert np.all(pts.t0 == 0)
    assert set(np.unique(pts.xb)) == {0.0, 1.0}
    assert np.all((pts.xr > 0) & (pts.xr < 1) & (pts.tr > 0) & (pts.tr < 1))


def test_same_seed_same_points():
    a = sample_points(manufactured_problem(), (10, 20, 30), 7)
    b = sample_points(manufactured_problem(), (10, 20, 30), 7)
    for name in ("x0", "u0", "xb", "tb", "ub", "xr", "tr"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_targets_come_from_problem():
    prob = manufactured_problem()
    pts = sample_points(prob, (10, 20, 0), 1)
    assert_allclose(pts.u0, np.sin(np.pi * pts.x0))
    assert np.all(pts.ub == 0)


@pytest.mark.parametrize("counts", [(0, 0, 0), (-1, 3, 3)])
def test_bad_counts(counts):
    with pytest.raises(ConfigError):
        sample_points(manufactured_problem(), counts, 0)


@pytest.mark.parametrize(
    "field,value",
    [("t0", [0.1]), ("xb", [0.5]), ("xr", [1.0]), ("tr", [0.0])],
)
def test_point_set_invariants(field, value):
    kw = dict(x0=[0.5], t0=[0.0], u0=[0.0], xb=[0.0], tb=[0.5], ub=[0.0], xr=[0.5], tr=[0.5])
    kw[field] = value
    with pytest.raises(ConfigError):
        TrainingPoints(**kw)


def test_negative_weight_rejected():
    with pytest.raises(ConfigError):
        LossWeights(lambda_r=-1.0)
    assert LossWeights() == LossWeights(1.0, 1.0, 1e-6)


def test_zero_network_has_zero_residual_on_homogeneous_problem():
    net = TanhMLP([5, 5])
    prob = zero_problem()
    pts = sample_points(prob, (5, 5, 40), 0)
    r = PhysicsModel(net, prob, pts).residual_at(np.zeros(net.n_params), pts.xr, pts.tr)
    assert np.all(r == 0.0)


def test_loss_decomposition_is_exact():
    prob = manufactured_problem()
    net = TanhMLP([8, 8])
    theta = net.init_params(0)
    pts = sample_points(prob, (13, 17, 19), 0)
    model = PhysicsModel(net, prob, pts)
    w = LossWeights(0.7, 1.3, 0.01)
    lb = loss_terms(model, theta, w)
    assert lb.total == w.lambda_0 * lb.L0 + w.lambda_b * lb.Lb + w.lambda_r * lb.Lr
    u0 = net.forward(theta, pts.x0, pts.t0)
    assert_allclose(lb.L0, np.mean((u0 - pts.u0) ** 2), rtol=1e-14)
    ub = net.forward(theta, pts.xb, pts.tb)
    assert_allclose(lb.Lb, np.mean((ub - pts.ub) ** 2), rtol=1e-14)
    r = model.residual_at(theta, pts.xr, pts.tr)
    assert_allclose(lb.Lr, np.mean(r ** 2), rtol=1e-12)


def test_batch_gradient_matches_finite_differences():
    prob = manufactured_problem()
    net = TanhMLP([6, 6])
    theta = net.init_params(1)
    pts = sample_points(prob, (4, 6, 8), 2).with_noise(0.1, 0.1, 3)
    model = PhysicsModel(net, prob, pts)
    batch = Batch(np.arange(4), np.arange(6), np.arange(8))
    w = (0.3, 0.5, 0.02)

    def f(th):
        t, _ = model.grad(th, batch, *w)
        return w[0] * t.sse0 + w[1] * t.sseb + w[2] * t.sser

    _, g = model.grad(theta, batch, *w)
    h = 1e-6
    fd = np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])
    big = np.abs(fd) > 1e-8
    assert np.all(np.abs(g[big] - fd[big]) <= 1e-4 * np.abs(fd[big]))


def test_schedule_covers_every_data_point_once_per_epoch():
    pts = sample_points(manufactured_problem(), (10, 37, 50), 0)
    sched = BatchSchedule(pts, 16, 8, np.random.default_rng(0))
    batches = list(sched.epoch())
    assert len(batches) == 3
    assert sorted(np.concatenate([b.i0 for b in batches])) == list(range(10))
    assert sorted(np.concatenate([b.ib for b in batches])) == list(range(37))
    assert all(b.ir.size == 8 for b in batches)


def quick(epochs=200, **kw):
    return TrainConfig(epochs=epochs, batch_size=64, n_colloc=64, log_every=50, **kw)


def test_training_is_bit_reproducible():
    prob = manufactured_problem()
    pts = sample_points(prob, (20, 40, 200), 0)
    runs = [train(TanhMLP([10, 10]), prob, pts, LossWeights(1, 1, 0.01), quick(50), seed=4) for _ in range(2)]
    assert runs[0].theta.tobytes() == runs[1].theta.tobytes()
    assert runs[0].history_jsonl() == runs[1].history_jsonl()


def test_history_records_each_term():
    prob = manufactured_problem()
    pts = sample_points(prob, (20, 40, 200), 0)
    res = train(TanhMLP([10]), prob, pts, LossWeights(1, 1, 0.01), quick(100), seed=0)
    assert [r["epoch"] for r in res.history] == [50, 100]
    for r in res.history:
        assert set(r) == {"epoch", "L0", "Lb", "Lr", "total"}
        assert_allclose(r["total"], r["L0"] + r["Lb"] + 0.01 * r["Lr"], rtol=1e-14)


def test_data_only_fit_without_residual():
    prob = manufactured_problem()
    pts = sample_points(prob, (50, 50, 0), 0)
    res = train(TanhMLP([10, 10]), prob, pts, LossWeights(1, 1, 0), quick(400), seed=0)
    assert res.history[-1]["Lr"] == 0.0
    assert res.history[-1]["L0"] + res.history[-1]["Lb"] < 0.1 * (res.history[0]["L0"] + res.history[0]["Lb"])


def test_residual_drops_tenfold_during_training():
    prob = manufactured_problem()
    pts = sample_points(prob, (64, 64, 512), 0)
    net = TanhMLP([20, 20])
    model = PhysicsModel(net, prob, pts)
    cfg = TrainConfig(epochs=1500, batch_size=128, n_colloc=128, log_every=500)
    theta0 = net.init_params(np.random.default_rng(9))
    res = train(net, prob, pts, LossWeights(1, 1, 0.05), cfg, seed=9, theta0=theta0)
    before = np.mean(np.abs(model.residual_at(theta0, pts.xr, pts.tr)))
    after = np.mean(np.abs(model.residual_at(res.theta, pts.xr, pts.tr)))
    assert after <= before / 10
    g = GridSpec(21, 21)
    field = evaluate_grid(lambda x, t: net.forward(res.theta, x, t), g)
    X, T = np.meshgrid(g.x, g.t, indexing="ij")
    assert np.linalg.norm(field - prob.exact(X, T)) / np.linalg.norm(prob.exact(X, T)) < 0.2


def test_nan_loss_reports_epoch_and_term():
    prob = manufactured_problem()
    prob.source = lambda s: np.full(np.shape(s), np.nan)
    pts = sample_points(prob, (5, 5, 5), 0)
    with pytest.raises(TrainingDivergence) as info:
        train(TanhMLP([4]), prob, pts, LossWeights(1, 1, 1), quick(5), seed=0)
    assert info.value.epoch == 1 and info.value.term == "Lr"
