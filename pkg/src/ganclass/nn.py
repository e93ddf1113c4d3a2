"""Parameter containers, initialization, the Adam optimizer, and checkpoint IO."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor


class OptimizerError(RuntimeError):
    """Optimizer invoked in an invalid state (e.g. a parameter without a gradient)."""


class CheckpointError(RuntimeError):
    """Checkpoint files are missing, malformed, or inconsistent."""


class ParamSet:
    """Ordered map of unique names to trainable tensors."""

    def __init__(self) -> None:
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def detached(self) -> "ParamSet":
        """Same underlying arrays, but none of the tensors track gradients."""
        out = ParamSet()
        for name, t in self.items():
            out.add(name, t.detach())
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        """Deep copy of all parameter values."""
        return {name: t.data.copy() for name, t in self.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self.items():
            src = values[name]
            if src.shape != t.data.shape:
                raise ValueError(f"parameter {name!r}: shape {src.shape} != {t.data.shape}")
            t.data[...] = src

    def zero_grads(self) -> None:
        for _, t in self.items():
            t.zero_grad()


@dataclass(frozen=True)
class ParamSpec:
    """Shape and role of one parameter; role decides its initial values."""

    name: str
    shape: tuple[int, ...]
    kind: str  # 'weight' | 'bias' | 'gamma' | 'beta'

    def __post_init__(self):
        if self.kind not in ("weight", "bias", "gamma", "beta"):
            raise ValueError(f"unknown parameter kind {self.kind!r}")


INIT_SCHEMES = ("normal", "zeros", "ones")


def init_params(specs: list[ParamSpec], scheme: str = "normal", seed: int = 0,
                sigma: float = 0.02, dtype=DEFAULT_DTYPE) -> ParamSet:
    """Deterministically initialize a ParamSet from layer descriptions.

    Under ``normal``, weights draw from N(0, sigma^2) while biases start at 0
    and batchnorm scale/shift at 1/0. The ``zeros`` and ``ones`` schemes fill
    every parameter uniformly (they exist for tests and oracles).
    """
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}; known: {INIT_SCHEMES}")
    rng = np.random.default_rng(seed)
    params = ParamSet()
    for spec in specs:
        if scheme == "zeros":
            data = np.zeros(spec.shape, dtype=dtype)
        elif scheme == "ones":
            data = np.ones(spec.shape, dtype=dtype)
        elif spec.kind == "weight":
            data = rng.normal(0.0, sigma, size=spec.shape).astype(dtype)
        elif spec.kind == "gamma":
            data = np.ones(spec.shape, dtype=dtype)
        else:  # bias, beta
            data = np.zeros(spec.shape, dtype=dtype)
        params.add(spec.name, Tensor(data, requires_grad=True, dtype=dtype))
    return params


@dataclass
class AdamState:
    """Per-parameter first/second moments plus shared hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(params: ParamSet, lr: float = 1e-4, beta1: float = 0.5,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
    for name, t in params.items():
        state.m[name] = np.zeros_like(t.data)
        state.v[name] = np.zeros_like(t.data)
    return state


def adam_step(params: ParamSet, state: AdamState) -> None:
    """One bias-corrected Adam update, in place; gradients are cleared after."""
    for name, t in params.items():
        if t.grad is None:
            raise OptimizerError(f"parameter {name!r} has no gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, t in params.items():
        g = t.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        t.data -= step.astype(t.data.dtype, copy=False)
        t.zero_grad()


# --------------------------------------------------------------------------
# checkpoint format: plain-text manifest + little-endian raw blob
# --------------------------------------------------------------------------

MANIFEST_NAME = "manifest.txt"
BLOB_NAME = "tensors.bin"

_DTYPE_CODES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def save_arrays(directory: str, arrays: dict[str, np.ndarray]) -> None:
    """Write named arrays as ``manifest.txt`` + ``tensors.bin`` in ``directory``."""
    os.makedirs(directory, exist_ok=True)
    lines = []
    offset = 0
    with open(os.path.join(directory, BLOB_NAME), "wb") as blob:
        for name, arr in arrays.items():
            if " " in name:
                raise CheckpointError(f"array name {name!r} contains whitespace")
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            code = le.dtype.str
            if code not in _DTYPE_CODES:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
            raw = np.ascontiguousarray(le).tobytes()
            blob.write(raw)
            shape = ",".join(str(d) for d in arr.shape) or "-"
            lines.append(f"{name} {shape} {code} {offset}")
            offset += len(raw)
    with open(os.path.join(directory, MANIFEST_NAME), "w") as mf:
        mf.write("\n".join(lines) + "\n")


def load_arrays(directory: str) -> dict[str, np.ndarray]:
    """Read back arrays written by ``save_arrays`` (bit-exact round trip)."""
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    blob_path = os.path.join(directory, BLOB_NAME)
    if not os.path.exists(manifest_path) or not os.path.exists(blob_path):
        raise CheckpointError(f"no checkpoint at {directory!r}")
    with open(blob_path, "rb") as f:
        blob = f.read()
    out: dict[str, np.ndarray] = {}
    with open(manifest_path) as mf:
        for lineno, line in enumerate(mf, 1):
            line = line.strip()
            if not line:
                continue
            try:
                name, shape_s, code, offset_s = line.split(" ")
                shape = () if shape_s == "-" else tuple(int(d) for d in shape_s.split(","))
                dtype = _DTYPE_CODES[code]
                offset = int(offset_s)
            except (ValueError, KeyError) as e:
                raise CheckpointError(f"bad manifest line {lineno}: {line!r}") from e
            count = int(np.prod(shape)) if shape else 1
            end = offset + count * dtype.itemsize
            if end > len(blob):
                raise CheckpointError(f"blob truncated for {name!r}")
            out[name] = np.frombuffer(blob[offset:end], dtype=dtype).reshape(shape).copy()
    return out
