import numpy as np
import pytest
from scipy import stats

from harness import fd_gradient_error, random_gradcheck_case, run_bandit
from slicesim.association import WeightPair
from slicesim.config import AgentConfig
from slicesim.dqn import (
    Adam, AgentRngs, DqnAgent, NonFiniteLoss, QNetwork, ReplayBuffer, action_to_weights,
    build_state, epsilon_after, loss_and_grads, reward, select_action, state_dim, sync_target,
    td_target, train_step, weights_to_action,
)
from slicesim.network import SliceId
from slicesim.rng import stream
from slicesim.snapshot import NetworkSnapshot


# ----------------------------------------------------------------- actions

def test_action_examples():
    assert action_to_weights(0, 10) == WeightPair(0.1, 0.1)
    assert action_to_weights(99, 10) == WeightPair(1.0, 1.0)
    assert action_to_weights(37, 10) == WeightPair(0.4, 0.8)
    with pytest.raises(ValueError):
        action_to_weights(100, 10)


@pytest.mark.parametrize("N", [4, 10, 16])
def test_action_round_trip(N):
    for a in range(N * N):
        w = action_to_weights(a, N)
        assert 0 < w.w1 <= 1 and 0 < w.w2 <= 1
        assert weights_to_action(w, N) == a


# ------------------------------------------------------------------- state

def _snap(K=5, M=4, packets=None):
    rng = np.random.default_rng(0)
    gain = 10 ** (rng.uniform(-150, -50, (K, M)) / 10)
    return NetworkSnapshot(0, rng.uniform(0, 100, (K, 2)), rng.uniform(1, 140, (K, M)), gain,
                           np.full(M, 200.0), 1e-15, np.zeros(K, np.int64),
                           np.zeros(K, np.int64) if packets is None else np.asarray(packets))


def test_state_layout():
    cfg = AgentConfig()
    s = build_state(_snap(), np.arange(5), cfg, (100.0, 100.0))
    assert s.shape == (45,) and state_dim(5, 4) == 45
    assert ((s >= 0) & (s <= 1)).all()
    assert (s[20:25] == 0).all()  # empty buffers


def test_state_clamp_endpoints_and_order():
    cfg = AgentConfig()
    snap = _snap(K=2, M=2, packets=[64, 200])
    gain = np.array([[1e-16, 1e-4], [1e-20, 1e-3]])  # -160, -40, below, above
    snap = NetworkSnapshot(**{**snap.__dict__, "gain": gain})
    s = build_state(snap, np.arange(2), cfg, (100.0, 100.0))
    # ORU-major: (m0,k0), (m0,k1), (m1,k0), (m1,k1)
    np.testing.assert_allclose(s[:4], [0.0, 0.0, 1.0, 1.0], atol=1e-12)
    assert s[4:6].tolist() == [1.0, 1.0]
    np.testing.assert_allclose(s[6:], snap.distance.T.ravel() / np.hypot(100, 100))


# ------------------------------------------------------------------ reward

def test_reward_examples():
    assert reward([20e6], [5.0], 16e6, 10.0, 0.7) == pytest.approx(0.325, abs=1e-12)
    assert reward([3.8e6], [1.0], 3.8e6, 2.0, 0.4) == pytest.approx(0.3, abs=1e-12)
    assert reward([16e6, 16e6], [10.0, 10.0], 16e6, 10.0, 0.7) == 0.0
    # a user without completed packets contributes a zero delay term
    assert reward([16e6], [np.nan], 16e6, 10.0, 0.7) == 0.0


# ----------------------------------------------------------------- network

def test_zero_network_outputs_zero():
    net = QNetwork((3, 4, 2))
    assert np.array_equal(net.forward(np.ones((2, 3))), np.zeros((2, 2)))


def test_hand_sized_forward():
    net = QNetwork((2, 2, 2))
    net.W[0][...] = [[1.0, -1.0], [2.0, 0.5]]
    net.b[0][...] = [0.0, 0.25]
    net.W[1][...] = [[1.0, 2.0], [-1.0, 3.0]]
    net.b[1][...] = [0.5, -0.5]
    x = np.array([1.0, 1.0])
    # hidden: relu([3, -0.25]) = [3, 0]; out: [3 + 0.5, 6 - 0.5]
    assert net.forward(x).tolist() == [3.5, 5.5]
    assert np.array_equal(net.forward(x), net.forward(x))


def test_he_uniform_bounds():
    net = QNetwork((45, 256, 256, 100), np.random.default_rng(0))
    for W in net.W:
        assert np.abs(W).max() <= np.sqrt(6 / W.shape[0])
    assert all((b == 0).all() for b in net.b)


def test_td_target_examples():
    zero = QNetwork((2, 3))
    assert td_target(np.array([1.5]), np.ones((1, 2)), zero, 0.995).tolist() == [1.5]
    net = QNetwork((1, 2))
    net.b[0][...] = [2.0, -1.0]
    assert td_target(np.array([1.0]), np.zeros((1, 1)), net, 0.995)[0] == pytest.approx(2.99)
    assert td_target(np.array([1.0]), np.zeros((1, 1)), net, 0.0)[0] == 1.0


def test_gradient_check_toy():
    net, s, a, y = random_gradcheck_case(0)
    assert fd_gradient_error(net, s, a, y) < 1e-4


def test_gradient_check_six_parameters():
    # 1 -> 1 -> 2: weights 1 + 2, biases 1 + 2
    rng = np.random.default_rng(3)
    net = QNetwork((1, 1, 2), rng)
    net.b[0][...] = [0.3]
    assert sum(p.size for p in net.params) == 6
    s = rng.uniform(0.5, 1.5, size=(4, 1)) * np.sign(net.W[0][0, 0])  # keep the unit active
    assert fd_gradient_error(net, s, np.array([0, 1, 1, 0]), rng.normal(size=4)) < 1e-4


def test_zero_error_means_zero_update():
    net = QNetwork((3, 8, 4), np.random.default_rng(1))
    s = np.random.default_rng(2).normal(size=(5, 3))
    a = np.array([0, 1, 2, 3, 0])
    y = net.forward(s)[np.arange(5), a]
    loss, grads = loss_and_grads(net, s, a, y)
    assert loss == 0.0 and all((g == 0).all() for g in grads)
    before = [p.copy() for p in net.params]
    Adam(net.params).step(net.params, grads)
    assert all(np.array_equal(p, q) for p, q in zip(before, net.params))


def test_overfit_one_transition():
    rng = np.random.default_rng(4)
    net = QNetwork((6, 32, 32, 5), rng)
    target = QNetwork((6, 32, 32, 5))  # zero target: y = r
    opt = Adam(net.params, lr=1e-3)
    batch = (rng.normal(size=(1, 6)), np.array([2]), np.array([0.75]), rng.normal(size=(1, 6)))
    losses = [train_step(net, target, batch, opt, 0.995) for _ in range(500)]
    assert losses[-1] < 1e-6 * max(losses[0], 1.0)
    assert losses[-1] < losses[0]


def test_non_finite_loss_aborts_before_update():
    net = QNetwork((2, 3), np.random.default_rng(0))
    before = [p.copy() for p in net.params]
    batch = (np.ones((1, 2)), np.array([0]), np.array([np.inf]), np.ones((1, 2)))
    with pytest.raises(NonFiniteLoss):
        train_step(net, QNetwork((2, 3)), batch, Adam(net.params), 0.9)
    assert all(np.array_equal(p, q) for p, q in zip(before, net.params))


# ------------------------------------------------------------- exploration

def test_greedy_argmax_lowest_tie():
    net = QNetwork((2, 4))
    net.b[0][...] = [0.0, 3.0, 3.0, 1.0]
    rng = np.random.default_rng(0)
    assert all(select_action(net, np.zeros(2), 0.0, rng) == 1 for _ in range(10))


def test_uniform_exploration_chi_square():
    net = QNetwork((2, 100))
    rng = np.random.default_rng(12)
    draws = [select_action(net, np.zeros(2), 1.0, rng) for _ in range(10_000)]
    counts = np.bincount(draws, minlength=100)
    assert stats.chisquare(counts).pvalue > 0.01


def test_epsilon_schedule():
    cfg = AgentConfig()
    agent = DqnAgent(4, cfg, AgentRngs(*(np.random.default_rng(i) for i in range(3))))
    for k in range(1, 600):
        agent.decay()
        assert agent.eps == pytest.approx(max(0.99 ** k, 0.01), rel=1e-9)
        assert agent.eps == pytest.approx(epsilon_after(k), rel=1e-9)
    assert epsilon_after(0) == 1.0 and epsilon_after(10_000) == 0.01


def test_target_sync():
    net = QNetwork((3, 4), np.random.default_rng(0))
    target = net.clone()
    for step in range(1, 100):
        net.W[0] += 0.01
        assert not sync_target(net, target, step)
    assert not np.array_equal(net.W[0], target.W[0])
    assert sync_target(net, target, 100)
    assert all(np.array_equal(p, q) for p, q in zip(net.params, target.params))
    net.W[0] += 1.0
    assert sync_target(net, target, 200)
    assert np.array_equal(net.W[0], target.W[0])


# ------------------------------------------------------------------ replay

def test_replay_ring_and_sampling():
    buf = ReplayBuffer(64, 2)
    for i in range(64):
        buf.push([i, i], i % 4, float(i), [i + 1, i + 1])
    s, a, r, s2 = buf.sample(64, np.random.default_rng(0))
    assert sorted(r.tolist()) == list(range(64))
    buf.push([99, 99], 0, 99.0, [0, 0])
    assert len(buf) == 64 and 99.0 in buf.r and 0.0 not in buf.r
    with pytest.raises(ValueError):
        ReplayBuffer(8, 2).sample(4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        buf.push([0, 0], 0, np.nan, [0, 0])


# -------------------------------------------------------------- checkpoint

def _agent(seed=0, cfg=AgentConfig(hidden=(16, 16), warmup=8, batch_size=8)):
    return DqnAgent(7, cfg, AgentRngs(stream(seed, "agent-init"), stream(seed, "exploration"),
                                      stream(seed, "replay")))


def test_checkpoint_bit_round_trip(tmp_path):
    a = _agent()
    rng = np.random.default_rng(1)
    for _ in range(40):
        s, s2 = rng.random(7), rng.random(7)
        act = a.act(s)
        a.observe(s, act, rng.normal(), s2)
        a.learn()
        a.decay()
    path = a.save(tmp_path / "ck.npz")
    b = _agent(seed=5)
    b.load(path)
    for x, y in zip(a.net.params + a.target.params + a.opt.m + a.opt.v,
                    b.net.params + b.target.params + b.opt.m + b.opt.v):
        assert x.tobytes() == y.tobytes()
    assert (a.eps, a.steps, a.train_steps, a.opt.t) == (b.eps, b.steps, b.train_steps, b.opt.t)
    # resaving gives the same bytes
    assert path.read_bytes() == b.save(tmp_path / "ck2.npz").read_bytes()


def test_checkpoint_shape_mismatch(tmp_path):
    path = _agent().save(tmp_path / "a.npz")
    other = DqnAgent(9, AgentConfig(hidden=(16, 16)), AgentRngs(*(np.random.default_rng(i) for i in range(3))))
    with pytest.raises(ValueError):
        other.load(path)


def test_bandit_single_trial():
    greedy, best = run_bandit(3)
    assert greedy == best


def test_agent_determinism():
    def trace(seed):
        a = _agent(seed)
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(30):
            s = rng.random(7)
            act = a.act(s)
            a.observe(s, act, float(act) / 10, s)
            out.append((act, a.learn()))
            a.decay()
        return out
    assert trace(2) == trace(2)
