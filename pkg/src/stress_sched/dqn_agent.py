"""Small numpy Q-network that picks a local-search operator.

The state is ``(f/f_best, delta_f/f_best, rank/N_P, last_op/4)``; the four
outputs score LS1..LS4. Training is one-step Q-learning from a replay buffer
with the same network on both sides of the Bellman target.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text, load_defaults

log = logging.getLogger(__name__)

N_OPS = 4
STATE_DIM = 4


def agent_state(f: float, f_best: float, delta_f: float, rank: int, pop_size: int,
                last_op: int) -> np.ndarray:
    """Feature vector for one solution. ``last_op`` is 0 before any move, else 1..4."""
    if f_best <= 0:
        raise ValueError("f_best must be positive")
    return np.array([f / f_best, delta_f / f_best, rank / pop_size, last_op / N_OPS])


@dataclass
class QNetwork:
    weights: list            # [W1 (4,H), W2 (H,H), W3 (H,4)]
    biases: list
    adam_m: list = field(default_factory=list)
    adam_v: list = field(default_factory=list)
    adam_t: int = 0
    skipped_updates: int = 0

    def __post_init__(self):
        if not self.adam_m:
            self.adam_m = [np.zeros_like(p) for p in self.params()]
            self.adam_v = [np.zeros_like(p) for p in self.params()]

    @classmethod
    def init(cls, hidden: int = 32, rng_seed: int = 0) -> "QNetwork":
        rng = np.random.default_rng(rng_seed)
        sizes = [STATE_DIM, hidden, hidden, N_OPS]
        W, b = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            W.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            b.append(np.zeros(fan_out))
        return cls(W, b)

    def params(self) -> list:
        return [*self.weights, *self.biases]

    def set_params(self, ps) -> None:
        n = len(self.weights)
        self.weights = [np.array(p, dtype=float) for p in ps[:n]]
        self.biases = [np.array(p, dtype=float) for p in ps[n:]]

    def forward(self, S, keep: bool = False):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        acts = [S]
        pre = []
        x = S
        for li, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = x @ W + b
            pre.append(z)
            x = np.maximum(z, 0.0) if li < len(self.weights) - 1 else z
            acts.append(x)
        return (x, acts, pre) if keep else x

    def q_values(self, s) -> np.ndarray:
        q = self.forward(s)
        return q[0] if np.ndim(s) == 1 else q

    def to_dict(self) -> dict:
        return {"weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases],
                "adam_m": [a.tolist() for a in self.adam_m],
                "adam_v": [a.tolist() for a in self.adam_v],
                "adam_t": self.adam_t, "skipped_updates": self.skipped_updates}

    @classmethod
    def from_dict(cls, d: dict) -> "QNetwork":
        net = cls([np.array(w) for w in d["weights"]], [np.array(b) for b in d["biases"]])
        if d.get("adam_m"):
            net.adam_m = [np.array(a) for a in d["adam_m"]]
            net.adam_v = [np.array(a) for a in d["adam_v"]]
        net.adam_t = int(d.get("adam_t", 0))
        net.skipped_updates = int(d.get("skipped_updates", 0))
        return net

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "QNetwork":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def softmax(q: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(q, dtype=float) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def select_operator(net: QNetwork, s, rng, temperature: float = 1.0) -> int:
    """Sample an operator index 1..4 from the softmax of Q(s, .)."""
    p = softmax(net.q_values(s), temperature)
    return int(rng.choice(N_OPS, p=p)) + 1


@dataclass
class Transition:
    s: np.ndarray
    a: int                      # 1..4
    r: float
    s_next: np.ndarray | None   # None marks a terminal transition

    def __post_init__(self):
        if not 1 <= self.a <= N_OPS:
            raise ValueError(f"operator index must be in 1..{N_OPS}")
        if not (self.r >= 0 and math.isfinite(self.r)):
            raise ValueError("reward must be finite and non-negative")


class ReplayBuffer:
    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self.items: list[Transition] = []
        self.pos = 0

    def __len__(self):
        return len(self.items)

    def add(self, t: Transition) -> None:
        if len(self.items) < self.capacity:
            self.items.append(t)
        else:
            self.items[self.pos] = t
        self.pos = (self.pos + 1) % self.capacity

    def sample(self, n: int, rng) -> list[Transition]:
        idx = rng.integers(0, len(self.items), size=n)
        return [self.items[i] for i in idx]


def td_targets(net: QNetwork, batch, gamma: float, reward_scale: float = 1.0) -> np.ndarray:
    """r + gamma * max Q(s', .), or r alone for terminal transitions."""
    r = np.array([t.r for t in batch]) / reward_scale
    live = np.array([t.s_next is not None for t in batch])
    y = r.copy()
    if live.any():
        S2 = np.array([t.s_next for t in batch if t.s_next is not None])
        y[live] += gamma * net.q_values(S2).max(axis=1)
    return y


def td_loss(net: QNetwork, S, A, y) -> float:
    """Mean squared TD error with the targets ``y`` held fixed. A holds 1..4."""
    q = net.forward(S)
    pred = q[np.arange(len(A)), np.asarray(A) - 1]
    return float(np.mean((y - pred) ** 2))


def td_gradients(net: QNetwork, S, A, y):
    """Loss and gradients w.r.t. (W1, W2, W3, b1, b2, b3) for fixed targets."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    A = np.asarray(A) - 1
    n = S.shape[0]
    out, acts, pre = net.forward(S, keep=True)
    err = out[np.arange(n), A] - y
    loss = float(np.mean(err ** 2))
    delta = np.zeros_like(out)
    delta[np.arange(n), A] = 2.0 * err / n
    gW = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    for li in range(len(net.weights) - 1, -1, -1):
        gW[li] = acts[li].T @ delta
        gb[li] = delta.sum(axis=0)
        if li > 0:
            delta = (delta @ net.weights[li].T) * (pre[li - 1] > 0)
    return loss, gW + gb


def adam_step(net: QNetwork, grads, lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999,
              eps: float = 1e-8) -> bool:
    """In-place adaptive-moment update. A non-finite result is rejected."""
    t = net.adam_t + 1
    params = net.params()
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, net.adam_m, net.adam_v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        new_p.append(p - lr * mh / (np.sqrt(vh) + eps))
        new_m.append(m)
        new_v.append(v)
    if not all(np.isfinite(p).all() for p in new_p):
        net.skipped_updates += 1
        log.warning("rejected non-finite Q-network update")
        return False
    net.set_params(new_p)
    net.adam_m, net.adam_v, net.adam_t = new_m, new_v, t
    return True


class Agent:
    """Operator selector: Q-network, replay buffer and reward scaling.

    Rewards are divided by the running mean of the positive rewards seen so
    far, so the size of Q-value gaps does not depend on the objective scale.
    """

    def __init__(self, seed: int = 0, gamma: float = 0.85, hidden: int | None = None,
                 lr: float | None = None, buffer_capacity: int | None = None,
                 batch_size: int | None = None, warmup: int | None = None,
                 temperature: float | None = None, uniform: bool = False):
        cfg = load_defaults()["dqn"]
        self.gamma = gamma
        self.lr = lr if lr is not None else cfg["learning_rate"]
        self.batch_size = batch_size or cfg["batch_size"]
        self.warmup = warmup or cfg["warmup"]
        self.temperature = temperature or cfg["temperature"]
        self.uniform = uniform
        self.net = QNetwork.init(hidden or cfg["hidden"], rng_seed=seed)
        self.buffer = ReplayBuffer(buffer_capacity or cfg["buffer_capacity"])
        self.rng = np.random.default_rng([seed, 7])
        self._pos_sum = 0.0
        self._pos_n = 0
        self.counts = np.zeros(N_OPS, dtype=np.int64)
        self.steps = 0

    @property
    def reward_scale(self) -> float:
        return self._pos_sum / self._pos_n if self._pos_n else 1.0

    def select(self, s) -> int:
        if self.uniform:
            op = int(self.rng.integers(N_OPS)) + 1
        else:
            op = select_operator(self.net, s, self.rng, self.temperature)
        self.counts[op - 1] += 1
        return op

    def probabilities(self, s) -> np.ndarray:
        if self.uniform:
            return np.full(N_OPS, 1.0 / N_OPS)
        return softmax(self.net.q_values(s), self.temperature)

    def record(self, t: Transition) -> bool:
        if t.r > 0:
            self._pos_sum += t.r
            self._pos_n += 1
        if self.uniform:
            return False
        return record_and_train(self.net, self.buffer, t, self.gamma, self.rng, lr=self.lr,
                                batch_size=self.batch_size, warmup=self.warmup,
                                reward_scale=self.reward_scale)


def record_and_train(net: QNetwork, buffer: ReplayBuffer, t: Transition, gamma: float, rng,
                     lr: float = 1e-3, batch_size: int = 32, warmup: int = 64,
                     reward_scale: float = 1.0) -> bool:
    """Store ``t``; once ``warmup`` transitions exist, take one minibatch step.

    Returns True when the parameters changed.
    """
    buffer.add(t)
    if len(buffer) < warmup:
        return False
    batch = buffer.sample(batch_size, rng)
    S = np.array([b.s for b in batch])
    A = np.array([b.a for b in batch])
    with np.errstate(over="ignore", invalid="ignore"):   # caught by the finiteness check
        y = td_targets(net, batch, gamma, reward_scale)
        loss, grads = td_gradients(net, S, A, y)
    if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
        net.skipped_updates += 1
        return False
    return adam_step(net, grads, lr)
