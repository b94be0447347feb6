"""Per-slice deep Q-learning agent on a small numpy MLP.

The network is a plain ReLU MLP with analytic backprop and an Adam optimizer.
Actions index an N x N grid of association weights (w1, w2).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .association import WeightPair
from .config import AgentConfig
from .snapshot import NetworkSnapshot

CHECKPOINT_VERSION = 1


class NonFiniteLoss(FloatingPointError):
    pass


# ---------------------------------------------------------------- action space

def action_to_weights(a: int, N: int) -> WeightPair:
    if not 0 <= a < N * N:
        raise ValueError(f"action {a} outside [0, {N * N})")
    return WeightPair((a // N + 1) / N, (a % N + 1) / N)


def weights_to_action(w: WeightPair, N: int) -> int:
    i = round(w.w1 * N) - 1
    j = round(w.w2 * N) - 1
    if not (0 <= i < N and 0 <= j < N):
        raise ValueError(f"weights {w} are not on the {N}x{N} grid")
    return i * N + j


# ----------------------------------------------------------------------- state

def state_dim(K: int, M: int) -> int:
    return 2 * M * K + K


def build_state(snapshot: NetworkSnapshot, users: np.ndarray, cfg: AgentConfig,
                area: tuple[float, float]) -> np.ndarray:
    """[gains (M x K), packet counts (K), distances (M x K)] scaled into [0, 1].

    Matrices are ORU-major: element (m, k) sits at m * K + k.
    """
    gain_db = 10 * np.log10(snapshot.gain[users].T)
    h = np.clip((gain_db - cfg.gain_db_low) / (cfg.gain_db_high - cfg.gain_db_low), 0.0, 1.0)
    p = np.minimum(snapshot.packet_count[users] / cfg.packet_cap, 1.0)
    diag = float(np.hypot(*area))
    d = np.clip(snapshot.distance[users].T / diag, 0.0, 1.0)
    return np.concatenate([h.ravel(), p, d.ravel()]).astype(float)


# ---------------------------------------------------------------------- reward

def reward(throughput, delay, r_min: float, d_max: float, alpha: float) -> float:
    """Normalized QoS surplus averaged over the slice's users.

    Users that completed no packet in the window get delay = d_max, which makes
    their delay term exactly zero.
    """
    thr = np.asarray(throughput, dtype=float)
    dl = np.asarray(delay, dtype=float)
    dl = np.where(np.isnan(dl), d_max, dl)
    beta = 1.0 - alpha
    total = alpha * np.sum((thr - r_min) / r_min) + beta * np.sum((d_max - dl) / d_max)
    return float(total / thr.size)


# --------------------------------------------------------------------- network

class QNetwork:
    def __init__(self, sizes, rng: np.random.Generator | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        self.W = [np.zeros((a, b)) for a, b in zip(self.sizes[:-1], self.sizes[1:])]
        self.b = [np.zeros(b) for b in self.sizes[1:]]
        if rng is not None:
            for W in self.W:
                lim = np.sqrt(6.0 / W.shape[0])
                W[...] = rng.uniform(-lim, lim, size=W.shape)

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.W, self.b) for p in pair]

    def copy_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def clone(self) -> "QNetwork":
        net = QNetwork(self.sizes)
        net.copy_from(self)
        return net

    def forward(self, x, cache: list | None = None) -> np.ndarray:
        a = np.asarray(x, dtype=float)
        if a.shape[-1] != self.sizes[0]:
            raise ValueError(f"input length {a.shape[-1]} != {self.sizes[0]}")
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            if cache is not None:
                cache.append(a)
            z = a @ W + b
            a = z if i == last else np.maximum(z, 0.0)
        return a

    def backward(self, cache: list, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients (in `params` order) given dLoss/dOutput for a batch."""
        grads = [None] * (2 * len(self.W))
        g = grad_out
        for i in range(len(self.W) - 1, -1, -1):
            a_in = cache[i]
            grads[2 * i] = a_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.W[i].T) * (a_in > 0)
        return grads


def q_forward(net: QNetwork, s) -> np.ndarray:
    return net.forward(s)


class Adam:
    def __init__(self, params, lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def td_target(r, s_next, target_net: QNetwork, gamma: float):
    q_next = target_net.forward(s_next)
    return np.asarray(r) + gamma * q_next.max(axis=-1)


def loss_and_grads(net: QNetwork, states, actions, targets):
    cache: list = []
    q = net.forward(states, cache)
    B = q.shape[0]
    rows = np.arange(B)
    err = q[rows, actions] - targets
    loss = float(np.mean(err ** 2))
    grad_out = np.zeros_like(q)
    grad_out[rows, actions] = 2.0 * err / B
    return loss, net.backward(cache, grad_out)


def train_step(net: QNetwork, target_net: QNetwork, batch, opt: Adam, gamma: float) -> float:
    """One Adam step on the mean squared TD error; the target is held fixed."""
    s, a, r, s2 = batch
    y = td_target(r, s2, target_net, gamma)
    loss, grads = loss_and_grads(net, s, a, y)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"non-finite loss {loss} (max |y| = {np.max(np.abs(y))})")
    opt.step(net.params, grads)
    return loss


def select_action(net: QNetwork, s, eps: float, rng: np.random.Generator) -> int:
    # always consume one uniform so the stream position is policy-independent
    explore = rng.random() < eps
    n = net.sizes[-1]
    if explore:
        return int(rng.integers(n))
    return int(np.argmax(net.forward(s)))


def epsilon_after(k: int, eps0: float = 1.0, decay: float = 0.99, eps_min: float = 0.01) -> float:
    return max(eps0 * decay ** k, eps_min)


# ---------------------------------------------------------------------- replay

class ReplayBuffer:
    def __init__(self, capacity: int, dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, dim))
        self.size = 0
        self.pos = 0

    def __len__(self) -> int:
        return self.size

    def push(self, s, a, r, s2) -> None:
        if not np.isfinite(r):
            raise ValueError("transition reward must be finite")
        i = self.pos
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator):
        if self.size < n:
            raise ValueError(f"replay holds {self.size} transitions, need {n}")
        idx = rng.choice(self.size, size=n, replace=False)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx]


# ----------------------------------------------------------------------- agent

@dataclass
class AgentRngs:
    init: np.random.Generator
    explore: np.random.Generator
    replay: np.random.Generator


class DqnAgent:
    def __init__(self, dim: int, cfg: AgentConfig, rngs: AgentRngs):
        self.cfg = cfg
        self.N = cfg.grid_size
        self.n_actions = self.N * self.N
        self.net = QNetwork((dim, *cfg.hidden, self.n_actions), rngs.init)
        self.target = self.net.clone()
        self.opt = Adam(self.net.params, cfg.learning_rate)
        self.replay = ReplayBuffer(cfg.replay_capacity, dim)
        self.rngs = rngs
        self.eps = cfg.eps_start
        self.steps = 0  # agent decisions taken
        self.train_steps = 0

    def act(self, s, greedy: bool = False) -> int:
        return select_action(self.net, s, 0.0 if greedy else self.eps, self.rngs.explore)

    def weights(self, a: int) -> WeightPair:
        return action_to_weights(a, self.N)

    def observe(self, s, a, r, s2) -> None:
        self.replay.push(s, a, r, s2)

    def learn(self) -> float | None:
        """Train once if the replay is warm; returns the loss or None."""
        if len(self.replay) < self.cfg.warmup:
            return None
        batch = self.replay.sample(self.cfg.batch_size, self.rngs.replay)
        loss = train_step(self.net, self.target, batch, self.opt, self.cfg.gamma)
        self.train_steps += 1
        sync_target(self.net, self.target, self.train_steps, self.cfg.target_update)
        return loss

    def decay(self) -> None:
        self.steps += 1
        self.eps = max(self.eps * self.cfg.eps_decay, self.cfg.eps_min)

    # checkpoints -------------------------------------------------------------

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {"version": np.array(CHECKPOINT_VERSION), "sizes": np.array(self.net.sizes),
                  "eps": np.array(self.eps), "steps": np.array(self.steps),
                  "train_steps": np.array(self.train_steps), "adam_t": np.array(self.opt.t)}
        for i, p in enumerate(self.net.params):
            arrays[f"net_{i}"] = p
        for i, p in enumerate(self.target.params):
            arrays[f"target_{i}"] = p
        for i, (m, v) in enumerate(zip(self.opt.m, self.opt.v)):
            arrays[f"adam_m_{i}"] = m
            arrays[f"adam_v_{i}"] = v
        with path.open("wb") as f:
            np.savez(f, **arrays)
        return path

    def load(self, path) -> None:
        with np.load(path) as z:
            if int(z["version"]) != CHECKPOINT_VERSION:
                raise ValueError(f"checkpoint version {int(z['version'])} unsupported")
            if tuple(z["sizes"].tolist()) != self.net.sizes:
                raise ValueError(f"checkpoint layer sizes {z['sizes'].tolist()} != {self.net.sizes}")
            for i, p in enumerate(self.net.params):
                p[...] = z[f"net_{i}"]
            for i, p in enumerate(self.target.params):
                p[...] = z[f"target_{i}"]
            for i, (m, v) in enumerate(zip(self.opt.m, self.opt.v)):
                m[...] = z[f"adam_m_{i}"]
                v[...] = z[f"adam_v_{i}"]
            self.opt.t = int(z["adam_t"])
            self.eps = float(z["eps"])
            self.steps = int(z["steps"])
            self.train_steps = int(z["train_steps"])


def sync_target(net: QNetwork, target: QNetwork, step: int, every: int = 100) -> bool:
    if step > 0 and step % every == 0:
        target.copy_from(net)
        return True
    return False
