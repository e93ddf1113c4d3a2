"""Dataset ingestion, fold planning, batching, and the synthetic test corpus.

Image directories follow one layout: a subdirectory per class (sorted names
define label order) holding 8-bit grayscale PNG or PGM files. Pixels map to
[-1, 1] via v -> 2*v/255 - 1.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from . import augment as aug
from .rng import substream
from .tensor import Tensor

IMAGE_SUFFIXES = (".png", ".pgm")


class DatasetError(ValueError):
    """Dataset directory or contents violate the expected layout."""


def u8_to_unit(a: np.ndarray) -> np.ndarray:
    """Map uint8 pixels to [-1, 1] float32."""
    return (a.astype(np.float32) / 255.0) * 2.0 - 1.0


def unit_to_u8(x: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats back to uint8 pixels (round, clip)."""
    return np.clip(np.round((x + 1.0) * 0.5 * 255.0), 0, 255).astype(np.uint8)


@dataclass
class Dataset:
    """Labeled grayscale images, all the same [1,S,S] shape, values in [-1,1]."""

    images: list[Tensor]
    labels: list[int]
    class_names: list[str]
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")
        if not self.names:
            self.names = [f"image_{i:05d}" for i in range(len(self.images))]
        if len(self.names) != len(self.images):
            raise DatasetError("names length mismatch")
        c = len(self.class_names)
        for i, lab in enumerate(self.labels):
            if not (0 <= lab < c):
                raise DatasetError(f"label {lab} of image {i} outside [0, {c})")
        shapes = {img.shape for img in self.images}
        if len(shapes) > 1:
            raise DatasetError(f"images disagree in shape: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def image_size(self) -> int:
        return self.images[0].shape[-1]

    def class_counts(self) -> list[int]:
        counts = [0] * self.num_classes
        for lab in self.labels:
            counts[lab] += 1
        return counts

    def labels_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)


def load_directory(path: str, size: int | None = None) -> Dataset:
    """Load a class-per-subdirectory image tree, resized to ``size`` (bilinear).

    ``size=None`` keeps the native size of the first image and requires all
    files to match it. Class order is the sorted subdirectory order; file
    order within a class is sorted, so loading is deterministic.
    """
    if not os.path.isdir(path):
        raise DatasetError(f"dataset directory not found: {path!r}")
    class_names = sorted(d for d in os.listdir(path) if os.path.isdir(os.path.join(path, d)))
    if len(class_names) < 2:
        raise DatasetError(f"need at least 2 class subdirectories in {path!r}, found {len(class_names)}")
    images: list[Tensor] = []
    labels: list[int] = []
    names: list[str] = []
    for label, cls in enumerate(class_names):
        cls_dir = os.path.join(path, cls)
        files = sorted(f for f in os.listdir(cls_dir) if f.lower().endswith(IMAGE_SUFFIXES))
        if not files:
            raise DatasetError(f"class directory {cls_dir!r} holds no PNG/PGM files")
        for fname in files:
            fpath = os.path.join(cls_dir, fname)
            try:
                with Image.open(fpath) as im:
                    im = im.convert("L")
                    if size is None:
                        size = im.size[0]
                        if im.size != (size, size):
                            raise DatasetError(
                                f"no target size given and first image {fpath!r} is not square")
                    if im.size != (size, size):
                        im = im.resize((size, size), Image.BILINEAR)
                    arr = np.asarray(im, dtype=np.uint8)
            except DatasetError:
                raise
            except Exception as e:
                raise DatasetError(f"cannot read image file {fpath!r}: {e}") from e
            images.append(Tensor(u8_to_unit(arr)[None, :, :]))
            labels.append(label)
            names.append(f"{cls}/{fname}")
    return Dataset(images, labels, class_names, names)


def save_directory(dataset: Dataset, out_dir: str) -> int:
    """Write a dataset back out as the standard PNG tree; returns file count."""
    written = 0
    for cls in dataset.class_names:
        os.makedirs(os.path.join(out_dir, cls), exist_ok=True)
    for img, name in zip(dataset.images, dataset.names):
        target = os.path.join(out_dir, name if name.lower().endswith(".png") else name + ".png")
        Image.fromarray(unit_to_u8(img.data[0]), mode="L").save(target)
        written += 1
    return written


# --------------------------------------------------------------------------
# fold planning
# --------------------------------------------------------------------------

@dataclass
class FoldPlan:
    """Disjoint index folds covering a dataset, balanced to within one item."""

    folds: list[list[int]]
    seed: int
    class_counts: list[list[int]]  # per fold, per class

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_indices(self, fold: int) -> list[int]:
        out: list[int] = []
        for f, idx in enumerate(self.folds):
            if f != fold:
                out.extend(idx)
        return sorted(out)

    def test_indices(self, fold: int) -> list[int]:
        return list(self.folds[fold])

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "folds": self.folds, "class_counts": self.class_counts},
            indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        obj = json.loads(text)
        return cls(folds=[list(map(int, f)) for f in obj["folds"]],
                   seed=int(obj["seed"]),
                   class_counts=[list(map(int, c)) for c in obj["class_counts"]])

    def validate(self, n_total: int) -> None:
        seen: set[int] = set()
        for f in self.folds:
            fs = set(f)
            if fs & seen:
                raise ValueError(f"folds overlap on indices {sorted(fs & seen)}")
            seen |= fs
        if seen != set(range(n_total)):
            raise ValueError("folds do not cover the dataset exactly")
        sizes = [len(f) for f in self.folds]
        if max(sizes) - min(sizes) > 1:
            raise ValueError(f"fold sizes unbalanced: {sizes}")


def kfold_split(dataset: Dataset, k: int, seed: int, stratified: bool = True) -> FoldPlan:
    """Partition dataset indices into k folds with a seeded shuffle.

    Stratified mode shuffles within each class and deals the classes onto the
    folds in one continuing round-robin pass, so both the global fold sizes
    and the per-class counts are balanced to within one.
    """
    n = len(dataset)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    if stratified:
        labels = dataset.labels_array()
        offset = 0
        for c in range(dataset.num_classes):
            cls_idx = np.flatnonzero(labels == c)
            cls_idx = cls_idx[rng.permutation(len(cls_idx))]
            for j, i in enumerate(cls_idx):
                folds[(offset + j) % k].append(int(i))
            offset += len(cls_idx)
    else:
        order = rng.permutation(n)
        for j, i in enumerate(order):
            folds[j % k].append(int(i))
    folds = [sorted(f) for f in folds]
    counts = [[sum(1 for i in f if dataset.labels[i] == c) for c in range(dataset.num_classes)]
              for f in folds]
    plan = FoldPlan(folds=folds, seed=seed, class_counts=counts)
    plan.validate(n)
    return plan


# --------------------------------------------------------------------------
# batching
# --------------------------------------------------------------------------

def batches(dataset: Dataset, indices: Sequence[int], batch_size: int, seed: int,
            augment_config: aug.AugmentConfig | None = None,
            epoch: int = 0) -> Iterator[tuple[Tensor, np.ndarray]]:
    """Yield full (images, labels) batches over a seeded per-epoch shuffle.

    Incomplete trailing batches are dropped (batch statistics need at least
    two samples, and constant batch shape keeps training simple). With
    ``augment_config=None`` the yielded images are bit-identical to the
    stored dataset; augmentation draws a per-image substream keyed on
    (seed, epoch, dataset index).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    idx = np.asarray(list(indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(dataset)):
        raise IndexError(f"indices out of range for dataset of {len(dataset)}")
    shuffle_rng = substream(seed, "shuffle", epoch)
    idx = idx[shuffle_rng.permutation(idx.size)]
    for b in range(idx.size // batch_size):
        chunk = idx[b * batch_size : (b + 1) * batch_size]
        imgs = []
        for i in chunk:
            img = dataset.images[int(i)]
            if augment_config is not None:
                img = aug.augment(img, augment_config, substream(seed, "augment", epoch, int(i)))
            imgs.append(img.data)
        labels = np.asarray([dataset.labels[int(i)] for i in chunk], dtype=np.int64)
        yield Tensor(np.stack(imgs)), labels


# --------------------------------------------------------------------------
# synthetic verification corpus
# --------------------------------------------------------------------------

def synth_dataset(n_per_class: int, size: int = 32, seed: int = 0) -> Dataset:
    """Two classes of textured-ellipse images with deliberately mild contrast.

    Both classes share the same ellipse geometry distribution; they differ
    only in the dominant spatial frequency of the additive texture inside the
    ellipse (class 0 low-band, class 1 high-band) plus per-image noise, so a
    classifier has to pick up texture scale rather than gross shape.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    rng = substream(seed, "synth")
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    images: list[Tensor] = []
    labels: list[int] = []
    names: list[str] = []
    class_names = ["class_0", "class_1"]
    for label in (0, 1):
        lo, hi = (2.0, 3.5) if label == 0 else (9.0, 11.0)
        for i in range(n_per_class):
            cx = size / 2 + rng.uniform(-0.1, 0.1) * size
            cy = size / 2 + rng.uniform(-0.1, 0.1) * size
            ax = rng.uniform(0.27, 0.36) * size
            ay = rng.uniform(0.27, 0.36) * size
            tilt = rng.uniform(0.0, np.pi)
            ct, st = np.cos(tilt), np.sin(tilt)
            u = (xx - cx) * ct + (yy - cy) * st
            v = -(xx - cx) * st + (yy - cy) * ct
            inside = (u / ax) ** 2 + (v / ay) ** 2 <= 1.0

            freq = rng.uniform(lo, hi)
            orient = rng.uniform(-0.35, 0.35)  # near-horizontal texture bands
            co, so = np.cos(orient), np.sin(orient)
            phase = rng.uniform(0.0, 2 * np.pi)
            texture = 0.45 * np.sin(2 * np.pi * freq * (xx * co + yy * so) / size + phase)

            img = np.full((size, size), -0.65, dtype=np.float32)
            img[inside] += 0.45 + texture[inside]
            img += rng.normal(0.0, 0.08, size=(size, size)).astype(np.float32)
            img = np.clip(img, -1.0, 1.0).astype(np.float32)
            images.append(Tensor(img[None, :, :]))
            labels.append(label)
            names.append(f"{class_names[label]}/im{i:05d}.png")
    return Dataset(images, labels, class_names, names)
