"""Class-conditional adversarial training with a discriminator that doubles
as the classifier.

The generator maps [noise; one-hot label] through a linear projection to a
4x4 feature map and a ladder of stride-2 transposed convolutions up to a
single-channel tanh image. The discriminator runs five conv stages (leaky
ReLU, batchnorm after the first stage) into a shared flattened trunk read by
two linear heads: one predicts the class, the other predicts whether the
input is real or generated.

Training alternates one discriminator update and one generator update per
batch. Both objectives are plain cross-entropies, so they are nonnegative
and vanish only at saturated correct predictions; the generator's real/fake
term is the non-saturating form (push fakes toward the "real" target) rather
than a negated discriminator loss. Generated images enter the discriminator
update detached, and the generator update runs against a detached view of
the discriminator weights, so each update can only move its own network.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import data as data_mod
from .augment import AugmentConfig
from .nn import AdamState, ParamSet, ParamSpec, adam_init, adam_step, init_params, load_arrays, save_arrays
from .rng import derive_seed, substream
from .tensor import (
    GradTape,
    RunningStats,
    Tensor,
    batchnorm2d,
    bce_with_logits,
    conv2d,
    conv_transpose2d,
    leaky_relu,
    linear,
    relu,
    reshape,
    sigmoid,
    softmax_cross_entropy,
    tanh,
)


class FreezeError(RuntimeError):
    """The model's frozen/unfrozen state forbids the requested operation."""


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the step index and loss values."""

    def __init__(self, step_index: int, loss_d: float, loss_g: float | None):
        self.step_index = step_index
        self.loss_d = loss_d
        self.loss_g = loss_g
        super().__init__(
            f"non-finite loss at step {step_index}: loss_d={loss_d}, loss_g={loss_g}")


class AuditError(AssertionError):
    """A structural invariant check failed during training or evaluation."""


# --------------------------------------------------------------------------
# architecture specs
# --------------------------------------------------------------------------

def _stages_for(image_size: int) -> int:
    n = image_size / 4
    stages = int(round(math.log2(n))) if n >= 2 else 0
    if stages < 1 or 4 * 2 ** stages != image_size:
        raise ValueError(f"image_size must be 4*2^n with n >= 1, got {image_size}")
    return stages


@dataclass(frozen=True)
class GeneratorSpec:
    """Noise length, class count, output size, and per-stage channel schedule."""

    z_dim: int = 100
    num_classes: int = 2
    image_size: int = 64
    channels: tuple[int, ...] = (256, 128, 64, 32)

    def __post_init__(self):
        if self.z_dim < 1:
            raise ValueError(f"z_dim must be >= 1, got {self.z_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        n = _stages_for(self.image_size)
        if len(self.channels) != n:
            raise ValueError(
                f"channel schedule of length {len(self.channels)} does not match "
                f"{n} upsampling stages for image_size {self.image_size}")

    @classmethod
    def for_size(cls, num_classes: int, image_size: int, z_dim: int = 100,
                 top_channels: int = 256) -> "GeneratorSpec":
        n = _stages_for(image_size)
        channels = tuple(max(top_channels >> i, 8) for i in range(n))
        return cls(z_dim=z_dim, num_classes=num_classes, image_size=image_size,
                   channels=channels)

    def param_specs(self) -> list[ParamSpec]:
        ch0 = self.channels[0]
        specs = [
            ParamSpec("proj.weight", (self.z_dim + self.num_classes, ch0 * 16), "weight"),
            ParamSpec("proj.bias", (ch0 * 16,), "bias"),
            ParamSpec("proj.gamma", (ch0,), "gamma"),
            ParamSpec("proj.beta", (ch0,), "beta"),
        ]
        for i in range(len(self.channels)):
            cin = self.channels[i]
            cout = self.channels[i + 1] if i + 1 < len(self.channels) else 1
            specs.append(ParamSpec(f"up{i}.kernel", (cin, cout, 4, 4), "weight"))
            specs.append(ParamSpec(f"up{i}.bias", (cout,), "bias"))
            if i + 1 < len(self.channels):
                specs.append(ParamSpec(f"up{i}.gamma", (cout,), "gamma"))
                specs.append(ParamSpec(f"up{i}.beta", (cout,), "beta"))
        return specs

    def stat_channels(self) -> dict[str, int]:
        stats = {"proj": self.channels[0]}
        for i in range(len(self.channels) - 1):
            stats[f"up{i}"] = self.channels[i + 1]
        return stats


@dataclass(frozen=True)
class ConvStage:
    out_channels: int
    kernel: int
    stride: int
    padding: int
    batchnorm: bool


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Conv trunk stages plus the two linear heads reading the flat features."""

    num_classes: int = 2
    image_size: int = 64
    stages: tuple[ConvStage, ...] = (
        ConvStage(32, 4, 2, 1, False),
        ConvStage(64, 4, 2, 1, True),
        ConvStage(128, 4, 2, 1, True),
        ConvStage(256, 4, 2, 1, True),
        ConvStage(256, 4, 1, 0, True),
    )
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.stages:
            raise ValueError("discriminator needs at least one conv stage")
        self.feature_count()  # validates the spatial ladder

    @classmethod
    def for_size(cls, num_classes: int, image_size: int,
                 channels: tuple[int, ...] = (32, 64, 128, 256, 256)) -> "DiscriminatorSpec":
        """Default profile: 5 conv stages into the two heads, for 16/32/64 inputs."""
        n_down = _stages_for(image_size)
        if n_down > len(channels) - 1:
            raise ValueError(f"default discriminator profile supports image_size <= 64, got {image_size}")
        stages: list[ConvStage] = []
        for i in range(n_down):
            stages.append(ConvStage(channels[i], 4, 2, 1, batchnorm=i > 0))
        for j in range(len(channels) - 1 - n_down):
            stages.append(ConvStage(channels[n_down + j], 3, 1, 1, batchnorm=True))
        stages.append(ConvStage(channels[-1], 4, 1, 0, batchnorm=True))
        return cls(num_classes=num_classes, image_size=image_size, stages=tuple(stages))

    def feature_count(self) -> int:
        s = self.image_size
        for st in self.stages:
            if s + 2 * st.padding < st.kernel:
                raise ValueError(f"stage kernel {st.kernel} too large for spatial size {s}")
            s = (s + 2 * st.padding - st.kernel) // st.stride + 1
        if s < 1:
            raise ValueError("discriminator trunk collapses below 1x1")
        return self.stages[-1].out_channels * s * s

    def param_specs(self) -> list[ParamSpec]:
        specs: list[ParamSpec] = []
        cin = 1
        for i, st in enumerate(self.stages):
            specs.append(ParamSpec(f"conv{i}.kernel", (st.out_channels, cin, st.kernel, st.kernel), "weight"))
            specs.append(ParamSpec(f"conv{i}.bias", (st.out_channels,), "bias"))
            if st.batchnorm:
                specs.append(ParamSpec(f"conv{i}.gamma", (st.out_channels,), "gamma"))
                specs.append(ParamSpec(f"conv{i}.beta", (st.out_channels,), "beta"))
            cin = st.out_channels
        feats = self.feature_count()
        specs.append(ParamSpec("class_head.weight", (feats, self.num_classes), "weight"))
        specs.append(ParamSpec("class_head.bias", (self.num_classes,), "bias"))
        specs.append(ParamSpec("source_head.weight", (feats, 1), "weight"))
        specs.append(ParamSpec("source_head.bias", (1,), "bias"))
        return specs

    def stat_channels(self) -> dict[str, int]:
        return {f"conv{i}": st.out_channels for i, st in enumerate(self.stages) if st.batchnorm}


@dataclass
class TrainConfig:
    """Hyperparameters of one adversarial training run."""

    epochs: int = 200
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    seed: int = 0
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------

class AcganModel:
    """Generator and discriminator parameter sets plus their batchnorm state."""

    def __init__(self, gen_spec: GeneratorSpec, disc_spec: DiscriminatorSpec,
                 seed: int = 0, scheme: str = "normal", dtype=np.float32):
        if gen_spec.num_classes != disc_spec.num_classes:
            raise ValueError("generator and discriminator disagree on class count")
        if gen_spec.image_size != disc_spec.image_size:
            raise ValueError("generator and discriminator disagree on image size")
        self.gen_spec = gen_spec
        self.disc_spec = disc_spec
        self.seed = int(seed)
        self.g_params = init_params(gen_spec.param_specs(), scheme,
                                    derive_seed(seed, "init", 0), dtype=dtype)
        self.d_params = init_params(disc_spec.param_specs(), scheme,
                                    derive_seed(seed, "init", 1), dtype=dtype)
        self.g_stats = {name: RunningStats.for_channels(c, dtype)
                        for name, c in gen_spec.stat_channels().items()}
        self.d_stats = {name: RunningStats.for_channels(c, dtype)
                        for name, c in disc_spec.stat_channels().items()}
        self.frozen = False

    @property
    def num_classes(self) -> int:
        return self.gen_spec.num_classes

    @property
    def image_size(self) -> int:
        return self.gen_spec.image_size

    def freeze(self) -> None:
        self.frozen = True

    def check_mutable(self, operation: str) -> None:
        if self.frozen:
            raise FreezeError(f"{operation} would mutate a frozen model")


# --------------------------------------------------------------------------
# forward passes
# --------------------------------------------------------------------------

def make_latent(spec: GeneratorSpec, labels: np.ndarray,
                noise: np.ndarray | None = None,
                rng: np.random.Generator | None = None,
                dtype=np.float32) -> Tensor:
    """Stack [noise; one-hot(label)] rows; noise is drawn from rng if not given."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError(f"labels must be 1-d, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= spec.num_classes):
        raise ValueError(f"label out of range [0, {spec.num_classes})")
    n = labels.shape[0]
    if noise is None:
        if rng is None:
            raise ValueError("provide explicit noise or an rng to draw it from")
        noise = rng.standard_normal((n, spec.z_dim))
    noise = np.asarray(noise, dtype=dtype)
    if noise.shape != (n, spec.z_dim):
        raise ValueError(f"noise shape {noise.shape} != ({n}, {spec.z_dim})")
    onehot = np.zeros((n, spec.num_classes), dtype=dtype)
    onehot[np.arange(n), labels] = 1.0
    return Tensor(np.concatenate([noise, onehot], axis=1))


def generator_forward(params: ParamSet, stats: dict[str, RunningStats],
                      spec: GeneratorSpec, latent: Tensor, mode: str) -> Tensor:
    h = linear(latent, params["proj.weight"], params["proj.bias"])
    h = reshape(h, (latent.shape[0], spec.channels[0], 4, 4))
    h = batchnorm2d(h, params["proj.gamma"], params["proj.beta"], mode, stats["proj"])
    h = relu(h)
    for i in range(len(spec.channels)):
        h = conv_transpose2d(h, params[f"up{i}.kernel"], params[f"up{i}.bias"],
                             stride=2, padding=1)
        if i + 1 < len(spec.channels):
            h = batchnorm2d(h, params[f"up{i}.gamma"], params[f"up{i}.beta"], mode, stats[f"up{i}"])
            h = relu(h)
        else:
            h = tanh(h)
    return h


def discriminator_trunk(params: ParamSet, stats: dict[str, RunningStats],
                        spec: DiscriminatorSpec, images: Tensor, mode: str) -> Tensor:
    if images.ndim != 4 or images.shape[1] != 1 or images.shape[2] != spec.image_size \
            or images.shape[3] != spec.image_size:
        raise ValueError(
            f"discriminator expects [N,1,{spec.image_size},{spec.image_size}] images, "
            f"got {images.shape}")
    h = images
    for i, st in enumerate(spec.stages):
        h = conv2d(h, params[f"conv{i}.kernel"], params[f"conv{i}.bias"],
                   stride=st.stride, padding=st.padding)
        if st.batchnorm:
            h = batchnorm2d(h, params[f"conv{i}.gamma"], params[f"conv{i}.beta"], mode, stats[f"conv{i}"])
        h = leaky_relu(h, spec.leaky_slope)
    return reshape(h, (images.shape[0], spec.feature_count()))


def class_head(params: ParamSet, features: Tensor) -> Tensor:
    return linear(features, params["class_head.weight"], params["class_head.bias"])


def source_head(params: ParamSet, features: Tensor) -> Tensor:
    out = linear(features, params["source_head.weight"], params["source_head.bias"])
    return reshape(out, (features.shape[0],))


# --------------------------------------------------------------------------
# public inference ops (eval-mode batchnorm, no tape required)
# --------------------------------------------------------------------------

def generate(model: AcganModel, labels: np.ndarray,
             noise: np.ndarray | None = None,
             rng: np.random.Generator | None = None) -> Tensor:
    """Sample class-conditional images; depends only on (noise, labels, G params)."""
    latent = make_latent(model.gen_spec, labels, noise, rng)
    return generator_forward(model.g_params, model.g_stats, model.gen_spec, latent, "eval")


def discriminate(model: AcganModel, images: Tensor) -> tuple[Tensor, Tensor]:
    """Class logits and real/fake source logit from one shared trunk pass."""
    feats = discriminator_trunk(model.d_params, model.d_stats, model.disc_spec, images, "eval")
    return class_head(model.d_params, feats), source_head(model.d_params, feats)


def classify(model: AcganModel, images: Tensor) -> np.ndarray:
    """Argmax class prediction from a frozen model; the source head is never run."""
    if not model.frozen:
        raise FreezeError("classify requires a frozen model; call model.freeze() first")
    feats = discriminator_trunk(model.d_params, model.d_stats, model.disc_spec, images, "eval")
    logits = class_head(model.d_params, feats)
    return np.argmax(logits.data, axis=1)


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def _disc_losses(model: AcganModel, real: tuple[Tensor, np.ndarray],
                 fake: tuple[Tensor, np.ndarray], mode: str = "train"
                 ) -> tuple[Tensor, dict[str, float]]:
    real_images, real_labels = real
    fake_images, fake_labels = fake
    if real_images.shape[0] != fake_images.shape[0]:
        raise ValueError(
            f"real and fake half-batches differ in size: "
            f"{real_images.shape[0]} vs {fake_images.shape[0]}")
    if fake_images.requires_grad:
        raise ValueError("fake images must be detached from the generator "
                         "for the discriminator objective")
    p, st, spec = model.d_params, model.d_stats, model.disc_spec
    feats_r = discriminator_trunk(p, st, spec, real_images, mode)
    feats_f = discriminator_trunk(p, st, spec, fake_images, mode)
    cls_r = class_head(p, feats_r)
    cls_f = class_head(p, feats_f)
    src_r = source_head(p, feats_r)
    src_f = source_head(p, feats_f)
    n = real_images.shape[0]
    class_term = 0.5 * (softmax_cross_entropy(cls_r, real_labels)
                        + softmax_cross_entropy(cls_f, fake_labels))
    source_term = 0.5 * (bce_with_logits(src_r, np.ones(n))
                         + bce_with_logits(src_f, np.zeros(n)))
    loss = class_term + source_term
    aux = {
        "d_real_acc": float((sigmoid(src_r.data) > 0.5).mean()),
        "d_fake_acc": float((sigmoid(src_f.data) < 0.5).mean()),
        "class_acc": float((np.argmax(cls_r.data, axis=1) == real_labels).mean()),
    }
    return loss, aux


def discriminator_loss(model: AcganModel, real: tuple[Tensor, np.ndarray],
                       fake: tuple[Tensor, np.ndarray]) -> Tensor:
    """Class cross-entropy on both halves plus real/fake cross-entropy.

    This is the minimization form of the discriminator's likelihood
    objective; it is nonnegative and vanishes only when both heads are
    saturated and correct.
    """
    loss, _ = _disc_losses(model, real, fake)
    return loss


def generator_loss(model: AcganModel, fake: tuple[Tensor, np.ndarray]) -> Tensor:
    """Class cross-entropy on fakes plus cross-entropy toward the "real" target.

    Runs the discriminator through a detached view of its weights, so the
    backward pass reaches the generator only through the fake images and the
    discriminator parameters receive no gradient at all.
    """
    fake_images, fake_labels = fake
    frozen_d = model.d_params.detached()
    feats = discriminator_trunk(frozen_d, model.d_stats, model.disc_spec, fake_images, "train")
    cls = class_head(frozen_d, feats)
    src = source_head(frozen_d, feats)
    n = fake_images.shape[0]
    return softmax_cross_entropy(cls, fake_labels) + bce_with_logits(src, np.ones(n))


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StepReport:
    loss_d: float
    loss_g: float
    d_real_acc: float
    d_fake_acc: float
    class_acc: float


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss_d: float
    loss_g: float
    d_real_acc: float
    d_fake_acc: float
    class_acc: float


def _sample_fakes(model: AcganModel, n: int, rng: np.random.Generator) -> tuple[Tensor, np.ndarray]:
    labels = rng.integers(0, model.num_classes, size=n)
    latent = make_latent(model.gen_spec, labels, rng=rng)
    images = generator_forward(model.g_params, model.g_stats, model.gen_spec, latent, "train")
    return images, labels


def train_step(model: AcganModel, real_batch: tuple[Tensor, np.ndarray],
               opt_d: AdamState, opt_g: AdamState, rng: np.random.Generator,
               step_index: int = 0, audit: bool = False) -> StepReport:
    """One discriminator update followed by one generator update.

    The generator never sees real images: its gradient arrives only through
    the discriminator's response to generated ones. With ``audit=True`` the
    step bitwise-verifies that each update touched only its own network.
    """
    model.check_mutable("train_step")
    real_images, real_labels = real_batch
    n = real_images.shape[0]
    if n < 2:
        raise ValueError(f"train_step needs a batch of >= 2 real images, got {n}")

    g_before = model.g_params.snapshot() if audit else None

    # discriminator update on a real half-batch and an equal detached fake half-batch
    fake_images, fake_labels = _sample_fakes(model, n, rng)
    fake_images = fake_images.detach()
    with GradTape():
        loss_d, aux = _disc_losses(model, (real_images, real_labels), (fake_images, fake_labels))
    loss_d_val = loss_d.item()
    if not math.isfinite(loss_d_val):
        raise TrainingDiverged(step_index, loss_d_val, None)
    loss_d.backward()
    adam_step(model.d_params, opt_d)

    if audit:
        for name, arr in model.g_params.snapshot().items():
            if not np.array_equal(arr, g_before[name]):
                raise AuditError(f"discriminator update moved generator parameter {name!r}")
        d_after = model.d_params.snapshot()

    # generator update through a detached view of the discriminator
    with GradTape():
        fake_images2, fake_labels2 = _sample_fakes(model, n, rng)
        loss_g = generator_loss(model, (fake_images2, fake_labels2))
    loss_g_val = loss_g.item()
    if not math.isfinite(loss_g_val):
        raise TrainingDiverged(step_index, loss_d_val, loss_g_val)
    loss_g.backward()
    adam_step(model.g_params, opt_g)

    if audit:
        for name, arr in model.d_params.snapshot().items():
            if not np.array_equal(arr, d_after[name]):
                raise AuditError(f"generator update moved discriminator parameter {name!r}")

    return StepReport(loss_d_val, loss_g_val, aux["d_real_acc"], aux["d_fake_acc"],
                      aux["class_acc"])


def fit(model: AcganModel, dataset: "data_mod.Dataset", config: TrainConfig,
        indices: Sequence[int] | None = None,
        step_log: list[StepReport] | None = None,
        audit_first_step: bool = False,
        on_epoch: Callable[[EpochStats], None] | None = None) -> list[EpochStats]:
    """Run the adversarial loop for ``config.epochs`` epochs; returns per-epoch stats."""
    model.check_mutable("fit")
    if indices is None:
        indices = list(range(len(dataset)))
    indices = list(indices)
    if not indices:
        raise ValueError("training set is empty")
    present = np.unique(np.asarray(dataset.labels)[indices])
    if present.size < 2:
        raise ValueError(f"training set holds a single class ({present.tolist()}); need >= 2")
    if len(indices) < config.batch_size:
        raise ValueError(
            f"training set of {len(indices)} is smaller than one batch of {config.batch_size}")

    opt_d = adam_init(model.d_params, config.lr, config.beta1, config.beta2, config.epsilon)
    opt_g = adam_init(model.g_params, config.lr, config.beta1, config.beta2, config.epsilon)
    history: list[EpochStats] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        noise_rng = substream(config.seed, "noise", epoch)
        reports: list[StepReport] = []
        for batch_images, batch_labels in data_mod.batches(
                dataset, indices, config.batch_size, config.seed,
                augment_config=config.augment, epoch=epoch):
            rep = train_step(model, (batch_images, batch_labels), opt_d, opt_g,
                             noise_rng, step_index=step,
                             audit=audit_first_step and step == 0)
            reports.append(rep)
            if step_log is not None:
                step_log.append(rep)
            step += 1
        stats = EpochStats(
            epoch=epoch,
            loss_d=float(np.mean([r.loss_d for r in reports])),
            loss_g=float(np.mean([r.loss_g for r in reports])),
            d_real_acc=float(np.mean([r.d_real_acc for r in reports])),
            d_fake_acc=float(np.mean([r.d_fake_acc for r in reports])),
            class_acc=float(np.mean([r.class_acc for r in reports])),
        )
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return history


# --------------------------------------------------------------------------
# structural audits
# --------------------------------------------------------------------------

def verify_head_separation(model: AcganModel, images: Tensor) -> None:
    """Check that class predictions ignore the source head (bitwise), then restore."""
    feats = discriminator_trunk(model.d_params, model.d_stats, model.disc_spec, images, "eval")
    before = class_head(model.d_params, feats).data.copy()
    w = model.d_params["source_head.weight"].data
    b = model.d_params["source_head.bias"].data
    w_orig, b_orig = w.copy(), b.copy()
    try:
        w += 1.0
        b -= 1.0
        feats2 = discriminator_trunk(model.d_params, model.d_stats, model.disc_spec, images, "eval")
        after = class_head(model.d_params, feats2).data
        if not np.array_equal(before, after):
            raise AuditError("class logits changed when source-head weights were perturbed")
    finally:
        w[...] = w_orig
        b[...] = b_orig


def verify_freeze_contract(model: AcganModel) -> None:
    """Frozen models must refuse mutation; classify must refuse unfrozen models."""
    if not model.frozen:
        raise AuditError("verify_freeze_contract expects a frozen model")
    try:
        model.check_mutable("probe")
    except FreezeError:
        pass
    else:
        raise AuditError("frozen model accepted a mutating operation")


# --------------------------------------------------------------------------
# checkpointing (manifest + blob, plus a JSON sidecar for the architecture)
# --------------------------------------------------------------------------

def save_model(model: AcganModel, directory: str, class_names: Sequence[str] | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, t in model.g_params.items():
        arrays[f"gen.{name}"] = t.data
    for name, rs in model.g_stats.items():
        arrays[f"gen.{name}.running_mean"] = rs.mean
        arrays[f"gen.{name}.running_var"] = rs.var
    for name, t in model.d_params.items():
        arrays[f"disc.{name}"] = t.data
    for name, rs in model.d_stats.items():
        arrays[f"disc.{name}.running_mean"] = rs.mean
        arrays[f"disc.{name}.running_var"] = rs.var
    save_arrays(directory, arrays)
    meta = {
        "generator": {
            "z_dim": model.gen_spec.z_dim,
            "num_classes": model.gen_spec.num_classes,
            "image_size": model.gen_spec.image_size,
            "channels": list(model.gen_spec.channels),
        },
        "discriminator": {
            "num_classes": model.disc_spec.num_classes,
            "image_size": model.disc_spec.image_size,
            "leaky_slope": model.disc_spec.leaky_slope,
            "stages": [
                {"out_channels": s.out_channels, "kernel": s.kernel, "stride": s.stride,
                 "padding": s.padding, "batchnorm": s.batchnorm}
                for s in model.disc_spec.stages
            ],
        },
        "class_names": list(class_names) if class_names is not None else None,
        "frozen": model.frozen,
    }
    with open(os.path.join(directory, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2)


def load_model(directory: str) -> tuple[AcganModel, list[str] | None]:
    meta_path = os.path.join(directory, "meta.json")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"no model metadata at {meta_path!r}")
    with open(meta_path) as f:
        meta = json.load(f)
    gen_spec = GeneratorSpec(
        z_dim=meta["generator"]["z_dim"],
        num_classes=meta["generator"]["num_classes"],
        image_size=meta["generator"]["image_size"],
        channels=tuple(meta["generator"]["channels"]),
    )
    disc_spec = DiscriminatorSpec(
        num_classes=meta["discriminator"]["num_classes"],
        image_size=meta["discriminator"]["image_size"],
        leaky_slope=meta["discriminator"]["leaky_slope"],
        stages=tuple(ConvStage(**s) for s in meta["discriminator"]["stages"]),
    )
    model = AcganModel(gen_spec, disc_spec, seed=0, scheme="zeros")
    arrays = load_arrays(directory)
    for name, t in model.g_params.items():
        t.data[...] = arrays[f"gen.{name}"]
    for name, rs in model.g_stats.items():
        rs.mean[...] = arrays[f"gen.{name}.running_mean"]
        rs.var[...] = arrays[f"gen.{name}.running_var"]
    for name, t in model.d_params.items():
        t.data[...] = arrays[f"disc.{name}"]
    for name, rs in model.d_stats.items():
        rs.mean[...] = arrays[f"disc.{name}.running_mean"]
        rs.var[...] = arrays[f"disc.{name}.running_var"]
    if meta.get("frozen"):
        model.freeze()
    return model, meta.get("class_names")
