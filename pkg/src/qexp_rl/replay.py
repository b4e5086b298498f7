"""Experience storage: in-memory ring replay buffer and the on-disk
transition dataset container.

Dataset file layout (little-endian), version 1:

    magic   4 bytes  b"QXPD"
    version u32
    namelen u16, then env name utf-8
    n_state u32
    n_action u32
    count   u64
    records count * (state f64[n_state], action f64[n_action], reward f64,
                     next_state f64[n_state], terminated u8,
                     behavior_log_prob f64)

The record block is a packed numpy structured array, so write/read
round-trips are bitwise exact.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .samplers import Rng

_MAGIC = b"QXPD"
_VERSION = 1


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminated: bool
    behavior_log_prob: float = np.nan


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminated: np.ndarray
    behavior_log_probs: np.ndarray

    def __len__(self):
        return self.states.shape[0]


def _record_dtype(n_state, n_action):
    return np.dtype([
        ("state", "<f8", (n_state,)),
        ("action", "<f8", (n_action,)),
        ("reward", "<f8"),
        ("next_state", "<f8", (n_state,)),
        ("terminated", "u1"),
        ("behavior_log_prob", "<f8"),
    ])


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int, n_state: int, n_action: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, n_state))
        self.actions = np.zeros((capacity, n_action))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, n_state))
        self.terminated = np.zeros(capacity, dtype=bool)
        self.behavior_log_probs = np.full(capacity, np.nan)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, state, action, reward, next_state, terminated, behavior_log_prob=np.nan):
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminated[i] = terminated
        self.behavior_log_probs[i] = behavior_log_prob
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: Rng) -> Batch:
        if self.size == 0:
            raise ValueError("buffer is empty")
        idx = rng.gen.integers(0, self.size, size=batch_size)
        return Batch(
            states=self.states[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            next_states=self.next_states[idx],
            terminated=self.terminated[idx],
            behavior_log_probs=self.behavior_log_probs[idx],
        )


class Dataset:
    """Immutable transition set backed by the binary container format."""

    def __init__(self, env_name, states, actions, rewards, next_states, terminated, behavior_log_probs):
        self.env_name = env_name
        self.states = np.asarray(states, dtype=np.float64)
        self.actions = np.asarray(actions, dtype=np.float64)
        self.rewards = np.asarray(rewards, dtype=np.float64)
        self.next_states = np.asarray(next_states, dtype=np.float64)
        self.terminated = np.asarray(terminated, dtype=bool)
        self.behavior_log_probs = np.asarray(behavior_log_probs, dtype=np.float64)

    def __len__(self):
        return self.states.shape[0]

    @property
    def n_state(self):
        return self.states.shape[1] if self.states.ndim == 2 else 0

    @property
    def n_action(self):
        return self.actions.shape[1] if self.actions.ndim == 2 else 0

    def sample(self, batch_size: int, rng: Rng) -> Batch:
        """Uniform with-replacement sample (valid for any nonempty size)."""
        if len(self) == 0:
            raise ValueError("dataset is empty")
        idx = rng.gen.integers(0, len(self), size=batch_size)
        return Batch(
            states=self.states[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            next_states=self.next_states[idx],
            terminated=self.terminated[idx],
            behavior_log_probs=self.behavior_log_probs[idx],
        )

    def episode_returns(self):
        """Undiscounted per-episode returns, split on terminal flags and the
        1000-step truncation boundary implied by consecutive records."""
        returns = []
        acc = 0.0
        steps = 0
        for i in range(len(self)):
            acc += self.rewards[i]
            steps += 1
            end = self.terminated[i] or steps >= 1000
            if not end and i + 1 < len(self):
                end = not np.array_equal(self.next_states[i], self.states[i + 1])
            if end or i + 1 == len(self):
                returns.append(acc)
                acc = 0.0
                steps = 0
        return np.asarray(returns)

    def save(self, path):
        n_state = self.states.shape[1] if len(self) else 0
        n_action = self.actions.shape[1] if len(self) else 0
        rec = np.zeros(len(self), dtype=_record_dtype(n_state, n_action))
        if len(self):
            rec["state"] = self.states
            rec["action"] = self.actions
            rec["reward"] = self.rewards
            rec["next_state"] = self.next_states
            rec["terminated"] = self.terminated
            rec["behavior_log_prob"] = self.behavior_log_probs
        name = self.env_name.encode("utf8")
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIH", _MAGIC, _VERSION, len(name)))
            fh.write(name)
            fh.write(struct.pack("<IIQ", n_state, n_action, len(self)))
            rec.tofile(fh)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic, version, namelen = struct.unpack("<4sIH", fh.read(10))
            if magic != _MAGIC:
                raise ValueError(f"{path} is not a transition dataset")
            if version != _VERSION:
                raise ValueError(f"unsupported dataset version {version}")
            name = fh.read(namelen).decode("utf8")
            n_state, n_action, count = struct.unpack("<IIQ", fh.read(16))
            rec = np.fromfile(fh, dtype=_record_dtype(n_state, n_action), count=count)
        if rec.size != count:
            raise ValueError(f"{path} is truncated: expected {count} records, found {rec.size}")
        return cls(
            env_name=name,
            states=rec["state"].reshape(count, n_state),
            actions=rec["action"].reshape(count, n_action),
            rewards=rec["reward"],
            next_states=rec["next_state"].reshape(count, n_state),
            terminated=rec["terminated"].astype(bool),
            behavior_log_probs=rec["behavior_log_prob"],
        )


def generate_offline_dataset(env, policy, n_transitions: int, rng: Rng, path=None) -> Dataset:
    """Roll out `policy` for n_transitions steps, logging exact behavior
    log-probabilities. `policy(obs, rng) -> (action, log_prob)`."""
    states, actions, rewards, next_states, terms, logps = [], [], [], [], [], []
    state = env.reset(rng)
    obs = env.observe(state)
    for _ in range(n_transitions):
        action, logp = policy(obs, rng)
        state, res = env.step(state, action)
        states.append(obs)
        actions.append(np.asarray(action, dtype=float).reshape(-1))
        rewards.append(res.reward)
        next_states.append(res.next_state)
        terms.append(res.terminated)
        logps.append(logp)
        if res.terminated or res.truncated:
            state = env.reset(rng)
            obs = env.observe(state)
        else:
            obs = res.next_state
    n_state = env.obs_dim
    n_action = env.action_dim
    ds = Dataset(
        env_name=env.name,
        states=np.asarray(states).reshape(n_transitions, n_state),
        actions=np.asarray(actions).reshape(n_transitions, n_action),
        rewards=np.asarray(rewards),
        next_states=np.asarray(next_states).reshape(n_transitions, n_state),
        terminated=np.asarray(terms, dtype=bool),
        behavior_log_probs=np.asarray(logps),
    )
    if path is not None:
        ds.save(path)
    return ds
