import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stress_sched.dqn_agent import (
    Agent, QNetwork, ReplayBuffer, Transition, agent_state, record_and_train, select_operator,
    softmax, td_gradients, td_loss, td_targets,
)


def _constant_net(q):
    """Network whose output is ``q`` for every input."""
    net = QNetwork.init(hidden=8, rng_seed=0)
    net.weights[-1] = np.zeros_like(net.weights[-1])
    net.biases[-1] = np.array(q, dtype=float)
    return net


def test_state_features():
    s = agent_state(120.0, 100.0, 5.0, 3, 12, 2)
    assert np.allclose(s, [1.2, 0.05, 0.25, 0.5])
    with pytest.raises(ValueError):
        agent_state(1.0, 0.0, 0.0, 1, 1, 0)


def test_equal_q_gives_uniform_choice():
    assert np.allclose(softmax(np.zeros(4)), 0.25)
    assert softmax(np.array([1.0, -1e6, -1e6, -1e6]))[0] == pytest.approx(1.0)


def test_softmax_sampling_frequency():
    net = _constant_net([np.log(2.0), 0, 0, 0])
    rng = np.random.default_rng(0)
    draws = [select_operator(net, np.zeros(4), rng) for _ in range(10_000)]
    assert np.mean(np.array(draws) == 1) == pytest.approx(0.4, abs=0.02)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=4), st.floats(0.05, 5.0))
def test_softmax_sums_to_one(q, temp):
    p = softmax(np.array(q), temp)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert (p >= 0).all()


def test_bellman_loss_example():
    net = _constant_net([0.2, 0.4, 0.0, 0.0])
    t = Transition(np.zeros(4), 1, 0.1, np.ones(4))
    y = td_targets(net, [t], gamma=0.85)
    assert y[0] == pytest.approx(0.44)
    assert td_loss(net, np.zeros((1, 4)), [1], y) == pytest.approx(0.0576)


def test_terminal_target_is_reward():
    net = _constant_net([0.2, 0.4, 0.0, 0.0])
    y = td_targets(net, [Transition(np.zeros(4), 2, 0.3, None)], gamma=0.85)
    assert y[0] == pytest.approx(0.3)


def test_transition_checks():
    with pytest.raises(ValueError):
        Transition(np.zeros(4), 5, 0.0, None)
    with pytest.raises(ValueError):
        Transition(np.zeros(4), 1, -0.1, None)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    net = QNetwork.init(hidden=16, rng_seed=3)
    S = rng.uniform(0, 2, size=(32, 4))
    A = rng.integers(1, 5, size=32)
    y = rng.uniform(0, 1, size=32)
    _, grads = td_gradients(net, S, A, y)
    params = net.params()
    h = 1e-6
    worst = 0.0
    for pi, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = td_loss(net, S, A, y)
            p[idx] = old - h
            down = td_loss(net, S, A, y)
            p[idx] = old
            num = (up - down) / (2 * h)
            g = grads[pi][idx]
            if abs(num) > 1e-7 or abs(g) > 1e-7:
                worst = max(worst, abs(num - g) / max(abs(num), abs(g)))
    assert worst <= 1e-4


def test_no_update_before_warmup():
    net = QNetwork.init(rng_seed=1)
    before = [p.copy() for p in net.params()]
    buf = ReplayBuffer()
    rng = np.random.default_rng(0)
    for _ in range(63):
        changed = record_and_train(net, buf, Transition(np.ones(4), 1, 1.0, np.ones(4)), 0.85, rng)
        assert not changed
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))
    assert record_and_train(net, buf, Transition(np.ones(4), 1, 1.0, np.ones(4)), 0.85, rng)


def test_ring_buffer_wraps():
    buf = ReplayBuffer(capacity=3)
    for r in range(5):
        buf.add(Transition(np.zeros(4), 1, float(r), None))
    assert len(buf) == 3
    assert sorted(t.r for t in buf.items) == [2.0, 3.0, 4.0]


def test_nonfinite_step_is_rejected():
    net = QNetwork.init(rng_seed=0)
    buf = ReplayBuffer()
    rng = np.random.default_rng(0)
    for _ in range(70):
        buf.add(Transition(np.full(4, 1e200), 1, 1e300, np.full(4, 1e200)))
    before = [p.copy() for p in net.params()]
    assert not record_and_train(net, buf, Transition(np.full(4, 1e200), 1, 1e300, None), 0.85, rng)
    assert net.skipped_updates == 1
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_checkpoint_roundtrip(tmp_path):
    net = QNetwork.init(rng_seed=4)
    net.save(tmp_path / "q.json")
    back = QNetwork.load(tmp_path / "q.json")
    s = np.array([1.1, 0.01, 0.5, 0.75])
    assert np.array_equal(net.q_values(s), back.q_values(s))


def _bandit(seed, n=2000):
    agent = Agent(seed=seed, temperature=0.2)
    s = agent_state(1.0, 1.0, 0.0, 1, 2, 0)
    picks = []
    for _ in range(n):
        op = agent.select(s)
        s_next = agent_state(1.0, 1.0, 0.0, 1, 2, op)
        agent.record(Transition(s, op, 1.0 if op == 3 else 0.0, s_next))
        picks.append(op)
        s = s_next
    return agent, picks


@pytest.mark.parametrize("seed", range(5))
def test_bandit_concentrates_on_rewarding_operator(seed):
    _, picks = _bandit(seed)
    assert np.mean(np.array(picks[-200:]) == 3) > 0.9


def test_training_is_deterministic():
    a, pa = _bandit(7, 300)
    b, pb = _bandit(7, 300)
    assert pa == pb
    assert all(np.array_equal(x, y) for x, y in zip(a.net.params(), b.net.params()))


def test_uniform_selector_never_trains():
    agent = Agent(seed=0, uniform=True)
    before = [p.copy() for p in agent.net.params()]
    s = np.zeros(4)
    for _ in range(100):
        agent.record(Transition(s, agent.select(s), 1.0, s))
    assert all(np.array_equal(a, b) for a, b in zip(before, agent.net.params()))
    assert np.allclose(agent.probabilities(s), 0.25)
