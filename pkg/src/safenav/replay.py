"""Three-pool replay: a FIFO for the running episode, plus success and failure pools."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

OBS_DIM = 18
ACT_DIM = 2


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s2: np.ndarray
    done: bool
    tag: int = -1


class RingPool:
    """Fixed-capacity ring of transitions stored column-wise."""

    def __init__(self, capacity: int) -> None:
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, OBS_DIM), dtype=np.float32)
        self.a = np.zeros((capacity, ACT_DIM), dtype=np.float32)
        self.r = np.zeros(capacity, dtype=np.float32)
        self.s2 = np.zeros((capacity, OBS_DIM), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self.tag = np.full(capacity, -1, dtype=np.int64)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        i = self._next
        self.s[i] = t.s
        self.a[i] = t.a
        self.r[i] = t.r
        self.s2[i] = t.s2
        self.done[i] = float(t.done)
        self.tag[i] = t.tag
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def tags(self) -> np.ndarray:
        """Stored tags, oldest first."""
        if self.size < self.capacity:
            return self.tag[: self.size].copy()
        return np.roll(self.tag, -self._next)

    def gather(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx],
                "s2": self.s2[idx], "done": self.done[idx]}


def allocation(d_success, d_failure, batch: int, eta: float):
    """(n_success, n_failure) draws for one batch; pool sizes may be integer arrays."""
    want_success = int(math.floor(eta * batch))
    n_failure = np.minimum(d_failure, batch - np.minimum(d_success, want_success))
    n_success = np.minimum(d_success, batch - n_failure)
    if np.ndim(n_success) == 0:
        return int(n_success), int(n_failure)
    return n_success, n_failure


class ReplayPools:
    def __init__(self, temp_capacity: int = 1000, success_capacity: int = 500_000,
                 failure_capacity: int = 500_000) -> None:
        if temp_capacity < 1:
            raise ValueError("temp_capacity must be >= 1")
        self.temp_capacity = int(temp_capacity)
        self.temp: deque[Transition] = deque()
        self.success = RingPool(success_capacity)
        self.failure = RingPool(failure_capacity)

    @property
    def d_success(self) -> int:
        return len(self.success)

    @property
    def d_failure(self) -> int:
        return len(self.failure)

    def push(self, t: Transition) -> None:
        self.temp.append(t)
        if len(self.temp) > self.temp_capacity:
            self.success.add(self.temp.popleft())

    def finalize_episode(self, outcome: str) -> None:
        if outcome not in ("success", "failure"):
            raise ValueError("outcome must be 'success' or 'failure'")
        pool = self.success if outcome == "success" else self.failure
        while self.temp:
            pool.add(self.temp.popleft())

    def sample(self, batch: int, eta: float, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if batch < 1 or not 0.0 <= eta <= 1.0:
            raise ValueError("need batch >= 1 and 0 <= eta <= 1")
        if self.d_success == 0 and self.d_failure == 0:
            raise ValueError("cannot sample: success and failure pools are empty")
        n_s, n_f = allocation(self.d_success, self.d_failure, batch, eta)
        parts = []
        if n_s:
            parts.append(self.success.gather(rng.integers(0, self.d_success, n_s)))
        if n_f:
            parts.append(self.failure.gather(rng.integers(0, self.d_failure, n_f)))
        out = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
        out["n_success"], out["n_failure"] = n_s, n_f
        return out
