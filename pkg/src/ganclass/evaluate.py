"""Confusion-matrix metrics and the k-fold cross-validation orchestrator."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import acgan
from .data import Dataset, FoldPlan, kfold_split
from .nn import save_arrays
from .rng import derive_seed
from .tensor import Tensor


class UndefinedMetricError(ZeroDivisionError):
    """A metric's denominator is zero for this confusion matrix."""


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary counts with "positive" meaning the configured positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions: Sequence[int], labels: Sequence[int],
              positive_class: int = 1) -> ConfusionMatrix:
    """Exact TP/FP/TN/FN counts for a binary problem."""
    preds = np.asarray(predictions, dtype=np.int64)
    labs = np.asarray(labels, dtype=np.int64)
    if preds.shape != labs.shape or preds.ndim != 1:
        raise ValueError(f"predictions and labels must be equal-length 1-d, "
                         f"got {preds.shape} and {labs.shape}")
    values = np.union1d(preds, labs)
    if values.size and (values.min() < 0 or values.max() > 1):
        raise ValueError("confusion() is binary-only; for more classes use accuracy_score")
    if positive_class not in (0, 1):
        raise ValueError(f"positive_class must be 0 or 1, got {positive_class}")
    p = preds == positive_class
    t = labs == positive_class
    return ConfusionMatrix(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        tn=int(np.sum(~p & ~t)),
        fn=int(np.sum(~p & t)),
    )


def accuracy_score(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Plain accuracy; works for any number of classes."""
    preds = np.asarray(predictions)
    labs = np.asarray(labels)
    if preds.shape != labs.shape or preds.ndim != 1:
        raise ValueError("predictions and labels must be equal-length 1-d")
    if preds.size == 0:
        raise ValueError("cannot score an empty prediction set")
    return float(np.mean(preds == labs))


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    sensitivity: float | None = None
    specificity: float | None = None


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy, sensitivity (positive recall), specificity (negative recall)."""
    if cm.total == 0:
        raise UndefinedMetricError("empty confusion matrix")
    if cm.tp + cm.fn == 0:
        raise UndefinedMetricError("sensitivity undefined: no positive samples")
    if cm.tn + cm.fp == 0:
        raise UndefinedMetricError("specificity undefined: no negative samples")
    return Metrics(
        accuracy=(cm.tp + cm.tn) / cm.total,
        sensitivity=cm.tp / (cm.tp + cm.fn),
        specificity=cm.tn / (cm.tn + cm.fp),
    )


@dataclass
class MetricsReport:
    """Per-fold metrics and their arithmetic means."""

    folds: list[Metrics]

    def _mean(self, attr: str) -> float | None:
        vals = [getattr(m, attr) for m in self.folds]
        if any(v is None for v in vals):
            return None
        return float(np.mean(vals))

    @property
    def mean_accuracy(self) -> float:
        return self._mean("accuracy")

    @property
    def mean_sensitivity(self) -> float | None:
        return self._mean("sensitivity")

    @property
    def mean_specificity(self) -> float | None:
        return self._mean("specificity")


@dataclass
class FoldResult:
    fold: int
    train_indices: list[int]
    test_indices: list[int]
    predictions: np.ndarray
    history: list[acgan.EpochStats]
    step_log: list[acgan.StepReport]
    model_arrays: dict[str, np.ndarray] | None = None
    meta: dict | None = None


# runner(fold, dataset, train_idx, test_idx, config) -> predictions for test_idx
Runner = Callable[[int, Dataset, list[int], list[int], acgan.TrainConfig], np.ndarray]


def _classify_in_chunks(model: acgan.AcganModel, dataset: Dataset,
                        indices: Sequence[int], chunk: int = 64) -> np.ndarray:
    preds: list[np.ndarray] = []
    for start in range(0, len(indices), chunk):
        part = indices[start : start + chunk]
        images = Tensor(np.stack([dataset.images[i].data for i in part]))
        preds.append(acgan.classify(model, images))
    return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)


def _run_fold(fold: int, dataset: Dataset, train_idx: list[int], test_idx: list[int],
              config: acgan.TrainConfig, keep_model: bool) -> FoldResult:
    """Train a fresh model on the training folds, classify the held-out fold.

    Asserts the structural contracts along the way: update partitioning on
    the first step, head separation before freezing, and freeze enforcement
    before classification.
    """
    fold_seed = derive_seed(config.seed, "fold", fold)
    fold_config = replace(config, seed=fold_seed)
    gen_spec = acgan.GeneratorSpec.for_size(dataset.num_classes, dataset.image_size)
    disc_spec = acgan.DiscriminatorSpec.for_size(dataset.num_classes, dataset.image_size)
    model = acgan.AcganModel(gen_spec, disc_spec, seed=derive_seed(fold_seed, "init"))

    step_log: list[acgan.StepReport] = []
    history = acgan.fit(model, dataset, fold_config, indices=train_idx,
                        step_log=step_log, audit_first_step=True)

    probe = Tensor(np.stack([dataset.images[i].data for i in test_idx[: min(8, len(test_idx))]]))
    acgan.verify_head_separation(model, probe)

    try:
        acgan.classify(model, probe)
    except acgan.FreezeError:
        pass
    else:
        raise acgan.AuditError("classify accepted an unfrozen model")
    model.freeze()
    acgan.verify_freeze_contract(model)

    predictions = _classify_in_chunks(model, dataset, test_idx)
    result = FoldResult(fold=fold, train_indices=list(train_idx), test_indices=list(test_idx),
                        predictions=predictions, history=history, step_log=step_log)
    if keep_model:
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
        result.model_arrays = arrays
        result.meta = {"gen_spec": gen_spec, "disc_spec": disc_spec}
    return result


def _fold_worker(args) -> FoldResult:
    return _run_fold(*args)


def cross_validate(dataset: Dataset, config: acgan.TrainConfig, k: int = 5, *,
                   stratified: bool = True, positive_class: int | None = None,
                   out_dir: str | None = None, threads: int = 1,
                   runner: Runner | None = None,
                   on_fold: Callable[[int, Metrics], None] | None = None,
                   ) -> tuple[MetricsReport, list[FoldResult]]:
    """k independent evaluations: fresh model per fold, train on k-1 folds with
    augmentation, classify the held-out fold on the pure data path.

    Fold results merge deterministically by fold index regardless of
    execution order. Artifacts (metrics CSV, per-fold histories, step logs,
    predictions, checkpoints, fold audit) land in ``out_dir`` when given.
    """
    plan = kfold_split(dataset, k, derive_seed(config.seed, "fold"), stratified=stratified)
    plan.validate(len(dataset))

    if positive_class is None:
        positive_class = (dataset.class_names.index("malignant")
                          if "malignant" in dataset.class_names else 1)

    jobs = [(fold, dataset, plan.train_indices(fold), plan.test_indices(fold), config,
             out_dir is not None)
            for fold in range(k)]

    results: list[FoldResult]
    if runner is not None:
        results = []
        for fold, ds, train_idx, test_idx, cfg, _keep in jobs:
            preds = np.asarray(runner(fold, ds, train_idx, test_idx, cfg))
            results.append(FoldResult(fold, list(train_idx), list(test_idx), preds, [], []))
    elif threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_fold_worker, jobs))
    else:
        results = [_run_fold(*job) for job in jobs]
    results.sort(key=lambda r: r.fold)

    fold_metrics: list[Metrics] = []
    labels = dataset.labels_array()
    for res in results:
        # a test image must never appear in its own fold's training set
        overlap = set(res.train_indices) & set(res.test_indices)
        if overlap:
            raise acgan.AuditError(f"fold {res.fold}: train/test overlap {sorted(overlap)[:5]}")
        truth = labels[res.test_indices]
        if dataset.num_classes == 2:
            m = metrics(confusion(res.predictions, truth, positive_class))
        else:
            m = Metrics(accuracy=accuracy_score(res.predictions, truth))
        fold_metrics.append(m)
        if on_fold is not None:
            on_fold(res.fold, m)

    report = MetricsReport(folds=fold_metrics)
    if out_dir is not None:
        _write_artifacts(out_dir, dataset, plan, results, report)
    return report, results


# --------------------------------------------------------------------------
# artifact writing
# --------------------------------------------------------------------------

def _fmt_pct(value: float | None) -> str:
    return "" if value is None else f"{100.0 * value:.2f}"


def metrics_csv_text(report: MetricsReport) -> str:
    lines = ["fold,accuracy,sensitivity,specificity"]
    for i, m in enumerate(report.folds):
        lines.append(f"{i + 1},{_fmt_pct(m.accuracy)},{_fmt_pct(m.sensitivity)},"
                     f"{_fmt_pct(m.specificity)}")
    lines.append(f"mean,{_fmt_pct(report.mean_accuracy)},{_fmt_pct(report.mean_sensitivity)},"
                 f"{_fmt_pct(report.mean_specificity)}")
    return "\n".join(lines) + "\n"


def report_table_text(report: MetricsReport) -> str:
    header = f"{'fold':>6} {'accuracy%':>10} {'sensitivity%':>13} {'specificity%':>13}"
    rows = [header, "-" * len(header)]
    for i, m in enumerate(report.folds):
        rows.append(f"{i + 1:>6} {_fmt_pct(m.accuracy):>10} {_fmt_pct(m.sensitivity):>13} "
                    f"{_fmt_pct(m.specificity):>13}")
    rows.append(f"{'mean':>6} {_fmt_pct(report.mean_accuracy):>10} "
                f"{_fmt_pct(report.mean_sensitivity):>13} {_fmt_pct(report.mean_specificity):>13}")
    return "\n".join(rows) + "\n"


def _write_artifacts(out_dir: str, dataset: Dataset, plan: FoldPlan,
                     results: list[FoldResult], report: MetricsReport) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as f:
        f.write(metrics_csv_text(report))
    with open(os.path.join(out_dir, "report.txt"), "w") as f:
        f.write(report_table_text(report))
    with open(os.path.join(out_dir, "folds.json"), "w") as f:
        f.write(plan.to_json())
    labels = dataset.labels_array()
    for res in results:
        tag = f"fold{res.fold + 1}"
        if res.history:
            with open(os.path.join(out_dir, f"history_{tag}.csv"), "w") as f:
                f.write("epoch,loss_D,loss_G,D_real_acc,D_fake_acc,class_acc\n")
                for h in res.history:
                    f.write(f"{h.epoch},{h.loss_d:.6f},{h.loss_g:.6f},{h.d_real_acc:.4f},"
                            f"{h.d_fake_acc:.4f},{h.class_acc:.4f}\n")
        if res.step_log:
            with open(os.path.join(out_dir, f"steps_{tag}.csv"), "w") as f:
                f.write("step,loss_D,loss_G\n")
                for i, s in enumerate(res.step_log):
                    f.write(f"{i},{s.loss_d:.8f},{s.loss_g:.8f}\n")
        with open(os.path.join(out_dir, f"predictions_{tag}.csv"), "w") as f:
            f.write("filename,true,predicted\n")
            for idx, pred in zip(res.test_indices, res.predictions):
                f.write(f"{dataset.names[idx]},{dataset.class_names[labels[idx]]},"
                        f"{dataset.class_names[int(pred)]}\n")
        if res.model_arrays is not None:
            ckpt_dir = os.path.join(out_dir, f"checkpoint_{tag}")
            save_arrays(ckpt_dir, res.model_arrays)
            meta = {
                "generator": {
                    "z_dim": res.meta["gen_spec"].z_dim,
                    "num_classes": res.meta["gen_spec"].num_classes,
                    "image_size": res.meta["gen_spec"].image_size,
                    "channels": list(res.meta["gen_spec"].channels),
                },
                "discriminator": {
                    "num_classes": res.meta["disc_spec"].num_classes,
                    "image_size": res.meta["disc_spec"].image_size,
                    "leaky_slope": res.meta["disc_spec"].leaky_slope,
                    "stages": [
                        {"out_channels": s.out_channels, "kernel": s.kernel,
                         "stride": s.stride, "padding": s.padding, "batchnorm": s.batchnorm}
                        for s in res.meta["disc_spec"].stages
                    ],
                },
                "class_names": list(dataset.class_names),
                "frozen": True,
            }
            with open(os.path.join(ckpt_dir, "meta.json"), "w") as f:
                json.dump(meta, f, indent=2)
