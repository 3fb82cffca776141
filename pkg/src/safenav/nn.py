"""Small dense networks with hand-written backprop, Adam, and a binary checkpoint format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"MPT3"
FORMAT_VERSION = 1
ACTIVATIONS = ("tanh", "identity")


class CheckpointError(ValueError):
    pass


class Mlp:
    """ReLU hidden layers, tanh or identity output.

    ``weights[l]`` has shape ``(dims[l + 1], dims[l])``; inputs are row batches.
    """

    def __init__(
        self,
        dims: list[int],
        output_activation: str = "identity",
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ) -> None:
        if len(dims) < 2 or any(int(d) < 1 for d in dims):
            raise ValueError(f"invalid layer dims {dims}")
        if output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.dims = [int(d) for d in dims]
        self.output_activation = output_activation
        self.dtype = np.dtype(dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)).astype(self.dtype))
            self.biases.append(rng.uniform(-bound, bound, fan_out).astype(self.dtype))
        self.version = 0

    @property
    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> Mlp:
        other = Mlp.__new__(Mlp)
        other.dims = list(self.dims)
        other.output_activation = self.output_activation
        other.dtype = self.dtype
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.version = 0
        return other

    def load_params(self, params: list[np.ndarray]) -> None:
        n = len(self.weights)
        for dst, src in zip(self.params, params):
            if dst.shape != src.shape:
                raise ValueError("parameter shape mismatch")
        self.weights = [np.array(p, dtype=self.dtype) for p in params[:n]]
        self.biases = [np.array(p, dtype=self.dtype) for p in params[n:]]
        self.version += 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


@dataclass
class Tape:
    net_id: int
    version: int
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer
    output: np.ndarray
    squeeze: bool


def forward(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=mlp.dtype)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != mlp.dims[0]:
        raise ValueError(f"expected input width {mlp.dims[0]}, got {x.shape[1]}")
    inputs, pre = [], []
    h = x
    last = len(mlp.weights) - 1
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(h)
        z = h @ W.T + b
        pre.append(z)
        if l < last:
            h = np.maximum(z, 0)
        elif mlp.output_activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
    out = h[0] if squeeze else h
    return out, Tape(id(mlp), mlp.version, inputs, pre, h, squeeze)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    @property
    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases


def backward(mlp: Mlp, tape: Tape, upstream: np.ndarray) -> Gradients:
    """Gradients of ``sum(output * upstream)`` w.r.t. parameters and input."""
    if tape.net_id != id(mlp) or tape.version != mlp.version:
        raise ValueError("tape does not belong to this network state")
    g = np.asarray(upstream, dtype=mlp.dtype)
    if tape.squeeze:
        g = g[None, :]
    if g.shape != tape.output.shape:
        raise ValueError("upstream gradient shape mismatch")
    last = len(mlp.weights) - 1
    gw: list[np.ndarray] = [None] * (last + 1)  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * (last + 1)  # type: ignore[list-item]
    if mlp.output_activation == "tanh":
        g = g * (1.0 - tape.output * tape.output)
    for l in range(last, -1, -1):
        if l < last:
            g = g * (tape.pre[l] > 0)
        gw[l] = g.T @ tape.inputs[l]
        gb[l] = g.sum(axis=0)
        g = g @ mlp.weights[l]
    return Gradients(gw, gb, g[0] if tape.squeeze else g)


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 3e-4, **kw) -> AdamState:
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kw,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam; updates ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


def optimize(mlp: Mlp, grads: Gradients, state: AdamState) -> None:
    adam_step(mlp.params, grads.params, state)
    mlp.version += 1


# --- checkpoint -------------------------------------------------------------

CHECKPOINT_NETS = ("actor", "critic1", "critic2", "actor_target", "critic1_target", "critic2_target")
_OUTPUT_ACT = {"actor": "tanh", "actor_target": "tanh"}


def _write_net(buf: bytearray, mlp: Mlp) -> None:
    n_layers = len(mlp.weights)
    buf += struct.pack("<H", n_layers)
    buf += struct.pack(f"<{n_layers + 1}I", *mlp.dims)
    for W in mlp.weights:
        buf += np.ascontiguousarray(W, dtype="<f4").tobytes()
    for b in mlp.biases:
        buf += np.ascontiguousarray(b, dtype="<f4").tobytes()


def _read_net(data: memoryview, off: int, output_activation: str) -> tuple[Mlp, int]:
    try:
        (n_layers,) = struct.unpack_from("<H", data, off)
        off += 2
        dims = list(struct.unpack_from(f"<{n_layers + 1}I", data, off))
        off += 4 * (n_layers + 1)
        mlp = Mlp(dims, output_activation, dtype=np.float32)
        params = []
        shapes = [(o, i) for i, o in zip(dims[:-1], dims[1:])] + [(o,) for o in dims[1:]]
        for shape in shapes:
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
            off += 4 * count
            params.append(arr.astype(np.float32))
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"truncated or malformed checkpoint: {exc}") from exc
    mlp.load_params(params)
    mlp.version = 0
    return mlp, off


def save_checkpoint(path: str | Path, nets: dict[str, Mlp]) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<H", FORMAT_VERSION)
    for name in CHECKPOINT_NETS:
        _write_net(buf, nets[name])
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: str | Path) -> dict[str, Mlp]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise CheckpointError("bad magic bytes")
    data = memoryview(raw)
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 6
    nets = {}
    for name in CHECKPOINT_NETS:
        nets[name], off = _read_net(data, off, _OUTPUT_ACT.get(name, "identity"))
    if off != len(raw):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return nets
