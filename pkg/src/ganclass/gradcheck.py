"""Central finite-difference verification of every differentiable operation.

All checks run in float64 with h = 1e-5. A coordinate passes when the
analytic and numeric derivatives agree to a relative error below the
tolerance, or differ by less than an absolute floor near zero (the
finite-difference noise floor). The suite covers each op on randomized
instances plus full parameter sweeps of the combined discriminator and
generator objectives on a two-image batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import acgan
from . import tensor as T

H = 1e-5
TOLERANCE = 1e-4
ABS_FLOOR = 1e-8
DTYPE = np.float64


@dataclass(frozen=True)
class OpCheckResult:
    op: str
    max_rel_err: float
    tolerance: float
    instances: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _coord_error(analytic: float, numeric: float) -> float:
    diff = abs(analytic - numeric)
    if diff <= ABS_FLOOR:
        return 0.0
    return diff / max(abs(analytic), abs(numeric), 1e-300)


def _central(build_loss: Callable[[], T.Tensor], flat: np.ndarray, idx: int,
             h: float) -> float:
    orig = flat[idx]
    flat[idx] = orig + h
    up = float(build_loss().data)
    flat[idx] = orig - h
    down = float(build_loss().data)
    flat[idx] = orig
    return (up - down) / (2.0 * h)


def check_grads(build_loss: Callable[[], T.Tensor], tensors: dict[str, T.Tensor],
                rng: np.random.Generator, coords_per_tensor: int = 4,
                h: float = H) -> float:
    """Compare backward() grads of ``build_loss`` against central differences.

    Every tensor in ``tensors`` is probed at up to ``coords_per_tensor``
    sampled coordinates; returns the worst per-coordinate error.

    Central differences require the loss to be smooth across [theta-h,
    theta+h]; activations have kinks, so each coordinate is validated by
    comparing estimates at step h and h/2. Smooth coordinates agree to
    O(h^2) and are Richardson-combined; a bracket that disagrees straddles a
    kink and the coordinate is redrawn (bounded, deterministic).
    """
    for t in tensors.values():
        t.zero_grad()
    with T.GradTape():
        loss = build_loss()
    loss.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in tensors.items()}

    worst = 0.0
    for name, t in tensors.items():
        flat = t.data.reshape(-1)
        n_coords = min(coords_per_tensor, flat.size)
        order = rng.permutation(flat.size)
        checked = 0
        skipped = 0
        for idx in order:
            if checked >= n_coords:
                break
            d_h = _central(build_loss, flat, idx, h)
            d_h2 = _central(build_loss, flat, idx, h / 2.0)
            if abs(d_h - d_h2) > max(2e-8, 1e-4 * max(abs(d_h), abs(d_h2))):
                skipped += 1  # probe bracket is not smooth here (activation kink)
                if skipped > max(4, flat.size // 2):
                    raise RuntimeError(
                        f"{name}: too many non-smooth probe brackets ({skipped})")
                continue
            numeric = (4.0 * d_h2 - d_h) / 3.0
            err = _coord_error(float(analytic[name].reshape(-1)[idx]), numeric)
            worst = max(worst, err)
            checked += 1
        if checked == 0 and flat.size > 0:
            raise RuntimeError(f"{name}: no smooth coordinate found to probe")
    return worst


def _leaf(rng: np.random.Generator, shape, avoid_zero: bool = False) -> T.Tensor:
    data = rng.standard_normal(shape)
    if avoid_zero:
        data = data + np.sign(data) * 0.2  # keep kink-free margin around 0
    return T.Tensor(data, requires_grad=True, dtype=DTYPE)


def _projection_loss(out: T.Tensor, rng: np.random.Generator) -> T.Tensor:
    w = T.Tensor(rng.standard_normal(out.shape), dtype=DTYPE)
    return T.sum_all(T.mul(out, w))


# -- per-op instances --------------------------------------------------------

def _instance_conv2d(rng):
    n, cin, cout = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    k = rng.integers(1, 4)
    stride = rng.integers(1, 3)
    padding = rng.integers(0, 2)
    h = rng.integers(max(k - 2 * padding, 1), 8)
    w = rng.integers(max(k - 2 * padding, 1), 8)
    x = _leaf(rng, (n, cin, h, w))
    kern = _leaf(rng, (cout, cin, k, k))
    bias = _leaf(rng, (cout,))
    proj = rng  # projection drawn inside build for a fixed weight
    wproj = None

    def build():
        nonlocal wproj
        out = T.conv2d(x, kern, bias, stride=int(stride), padding=int(padding))
        if wproj is None:
            wproj = T.Tensor(np.random.default_rng(0).standard_normal(out.shape), dtype=DTYPE)
        return T.sum_all(T.mul(out, wproj))

    return build, {"x": x, "kernel": kern, "bias": bias}


def _instance_conv_transpose2d(rng):
    n, cin, cout = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    k = rng.integers(2, 5)
    stride = rng.integers(1, 3)
    padding = int(rng.integers(0, min(k // 2, 1) + 1))
    h = rng.integers(2, 6)
    w = rng.integers(2, 6)
    x = _leaf(rng, (n, cin, h, w))
    kern = _leaf(rng, (cin, cout, k, k))
    bias = _leaf(rng, (cout,))
    wproj = None

    def build():
        nonlocal wproj
        out = T.conv_transpose2d(x, kern, bias, stride=int(stride), padding=padding)
        if wproj is None:
            wproj = T.Tensor(np.random.default_rng(0).standard_normal(out.shape), dtype=DTYPE)
        return T.sum_all(T.mul(out, wproj))

    return build, {"x": x, "kernel": kern, "bias": bias}


def _instance_linear(rng):
    n, fin, fout = rng.integers(1, 6), rng.integers(1, 6), rng.integers(1, 6)
    x = _leaf(rng, (n, fin))
    w = _leaf(rng, (fin, fout))
    b = _leaf(rng, (fout,))
    wproj = T.Tensor(rng.standard_normal((n, fout)), dtype=DTYPE)

    def build():
        return T.sum_all(T.mul(T.linear(x, w, b), wproj))

    return build, {"x": x, "weight": w, "bias": b}


def _instance_batchnorm_train(rng):
    n, c = int(rng.integers(2, 4)), int(rng.integers(1, 4))
    h, w = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    x = _leaf(rng, (n, c, h, w))
    gamma = T.Tensor(rng.uniform(0.5, 1.5, c), requires_grad=True, dtype=DTYPE)
    beta = _leaf(rng, (c,))
    stats = T.RunningStats.for_channels(c, DTYPE)
    wproj = T.Tensor(rng.standard_normal((n, c, h, w)), dtype=DTYPE)

    def build():
        out = T.batchnorm2d(x, gamma, beta, "train", stats)
        return T.sum_all(T.mul(out, wproj))

    return build, {"x": x, "gamma": gamma, "beta": beta}


def _instance_batchnorm_eval(rng):
    n, c = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h, w = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    x = _leaf(rng, (n, c, h, w))
    gamma = T.Tensor(rng.uniform(0.5, 1.5, c), requires_grad=True, dtype=DTYPE)
    beta = _leaf(rng, (c,))
    stats = T.RunningStats(rng.standard_normal(c), rng.uniform(0.5, 2.0, c))
    wproj = T.Tensor(rng.standard_normal((n, c, h, w)), dtype=DTYPE)

    def build():
        out = T.batchnorm2d(x, gamma, beta, "eval", stats)
        return T.sum_all(T.mul(out, wproj))

    return build, {"x": x, "gamma": gamma, "beta": beta}


def _instance_leaky_relu(rng):
    x = _leaf(rng, tuple(rng.integers(1, 5, size=2)), avoid_zero=True)
    slope = float(rng.choice([0.0, 0.1, 0.2, 0.5]))
    wproj = T.Tensor(rng.standard_normal(x.shape), dtype=DTYPE)

    def build():
        return T.sum_all(T.mul(T.leaky_relu(x, slope), wproj))

    return build, {"x": x}


def _instance_relu(rng):
    x = _leaf(rng, tuple(rng.integers(1, 5, size=2)), avoid_zero=True)
    wproj = T.Tensor(rng.standard_normal(x.shape), dtype=DTYPE)

    def build():
        return T.sum_all(T.mul(T.relu(x), wproj))

    return build, {"x": x}


def _instance_tanh(rng):
    x = _leaf(rng, tuple(rng.integers(1, 5, size=2)))
    wproj = T.Tensor(rng.standard_normal(x.shape), dtype=DTYPE)

    def build():
        return T.sum_all(T.mul(T.tanh(x), wproj))

    return build, {"x": x}


def _instance_softmax_cross_entropy(rng):
    n, c = int(rng.integers(1, 6)), int(rng.integers(2, 6))
    logits = _leaf(rng, (n, c))
    labels = rng.integers(0, c, size=n)

    def build():
        return T.softmax_cross_entropy(logits, labels)

    return build, {"logits": logits}


def _instance_bce_with_logits(rng):
    n = int(rng.integers(1, 8))
    logits = _leaf(rng, (n,))
    targets = rng.integers(0, 2, size=n).astype(np.float64)

    def build():
        return T.bce_with_logits(logits, targets)

    return build, {"logits": logits}


def _instance_add_mul(rng):
    shape = tuple(rng.integers(1, 5, size=2))
    a = _leaf(rng, shape)
    b = _leaf(rng, shape)
    wproj = T.Tensor(rng.standard_normal(shape), dtype=DTYPE)

    def build():
        return T.sum_all(T.mul(T.mul(T.add(a, b), b), wproj))

    return build, {"a": a, "b": b}


def _instance_mean_reshape(rng):
    a = _leaf(rng, (2, 3, 4))

    def build():
        return T.mean_all(T.reshape(a, (6, 4)))

    return build, {"a": a}


# -- composite sweeps --------------------------------------------------------

def _tiny_model(rng) -> tuple[acgan.AcganModel, int]:
    """Small but architecturally faithful model (5 conv stages + 2 heads) in float64."""
    gen_spec = acgan.GeneratorSpec(z_dim=6, num_classes=2, image_size=16, channels=(12, 8))
    disc_spec = acgan.DiscriminatorSpec.for_size(2, 16, channels=(4, 6, 6, 8, 8))
    model = acgan.AcganModel(gen_spec, disc_spec, seed=int(rng.integers(0, 2 ** 31)),
                             dtype=DTYPE)
    return model, 16


def discriminator_loss_sweep(seed: int = 0, coords_per_tensor: int = 4) -> float:
    """FD-check every discriminator parameter through the full combined loss."""
    rng = np.random.default_rng(seed)
    model, size = _tiny_model(rng)
    real = T.Tensor(rng.uniform(-1, 1, (2, 1, size, size)), dtype=DTYPE)
    fake = T.Tensor(rng.uniform(-1, 1, (2, 1, size, size)), dtype=DTYPE)
    real_labels = np.array([0, 1])
    fake_labels = np.array([1, 0])

    def build():
        loss, _ = acgan._disc_losses(model, (real, real_labels), (fake, fake_labels))
        return loss

    tensors = {name: t for name, t in model.d_params.items()}
    return check_grads(build, tensors, rng, coords_per_tensor=coords_per_tensor)


def generator_loss_sweep(seed: int = 0, coords_per_tensor: int = 4) -> float:
    """FD-check every generator parameter through generation plus the G objective."""
    rng = np.random.default_rng(seed)
    model, size = _tiny_model(rng)
    labels = np.array([0, 1])
    noise = rng.standard_normal((2, model.gen_spec.z_dim))
    latent = acgan.make_latent(model.gen_spec, labels, noise, dtype=DTYPE)

    def build():
        fake = acgan.generator_forward(model.g_params, model.g_stats, model.gen_spec,
                                       latent, "train")
        return acgan.generator_loss(model, (fake, labels))

    tensors = {name: t for name, t in model.g_params.items()}
    return check_grads(build, tensors, rng, coords_per_tensor=coords_per_tensor)


_OP_INSTANCES = {
    "conv2d": _instance_conv2d,
    "conv_transpose2d": _instance_conv_transpose2d,
    "linear": _instance_linear,
    "batchnorm2d_train": _instance_batchnorm_train,
    "batchnorm2d_eval": _instance_batchnorm_eval,
    "leaky_relu": _instance_leaky_relu,
    "relu": _instance_relu,
    "tanh": _instance_tanh,
    "softmax_cross_entropy": _instance_softmax_cross_entropy,
    "bce_with_logits": _instance_bce_with_logits,
    "add_mul": _instance_add_mul,
    "mean_reshape": _instance_mean_reshape,
}

SWEEPS = {
    "discriminator_loss_sweep": discriminator_loss_sweep,
    "generator_loss_sweep": generator_loss_sweep,
}

ALL_OPS = tuple(_OP_INSTANCES) + tuple(SWEEPS)


def check_op(op: str, instances: int = 20, seed: int = 0) -> OpCheckResult:
    """Run ``instances`` randomized checks of one op; returns the worst error."""
    if op in SWEEPS:
        err = SWEEPS[op](seed=seed)
        return OpCheckResult(op, err, TOLERANCE, 1)
    if op not in _OP_INSTANCES:
        raise ValueError(f"unknown op {op!r}; known: {sorted(ALL_OPS)}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        build, tensors = _OP_INSTANCES[op](rng)
        worst = max(worst, check_grads(build, tensors, rng))
    return OpCheckResult(op, worst, TOLERANCE, instances)


def run_suite(ops: list[str] | None = None, instances: int = 20,
              seed: int = 0) -> list[OpCheckResult]:
    """Check every op (or the given subset); results sorted by op name."""
    selected = list(ops) if ops else list(ALL_OPS)
    return [check_op(op, instances=instances, seed=seed) for op in sorted(selected)]
