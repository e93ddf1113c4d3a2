"""Adversarial augmentation + classifier training on a from-scratch autodiff core."""

from .acgan import (
    AcganModel,
    AuditError,
    DiscriminatorSpec,
    FreezeError,
    GeneratorSpec,
    TrainConfig,
    TrainingDiverged,
    classify,
    discriminate,
    discriminator_loss,
    fit,
    generate,
    generator_loss,
    load_model,
    save_model,
    train_step,
)
from .augment import AugmentConfig, add_noise, hflip, rotate, vflip
from .data import Dataset, DatasetError, FoldPlan, batches, kfold_split, load_directory, synth_dataset
from .evaluate import (
    ConfusionMatrix,
    Metrics,
    MetricsReport,
    UndefinedMetricError,
    accuracy_score,
    confusion,
    cross_validate,
    metrics,
)
from .nn import AdamState, ParamSet, ParamSpec, adam_init, adam_step, init_params, load_arrays, save_arrays
from .rng import derive_seed, substream
from .tensor import (
    DegenerateVarianceError,
    DimensionError,
    GradientError,
    GradTape,
    RunningStats,
    Tensor,
    backward,
    batchnorm2d,
    bce_with_logits,
    conv2d,
    conv_transpose2d,
    leaky_relu,
    linear,
    relu,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    tanh,
)

__version__ = "0.1.0"
