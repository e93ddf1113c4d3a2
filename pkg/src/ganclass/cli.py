"""Command-line surface: synthetic data, training, cross-validation,
classification, sampling, and the gradient-check suite.

Every command resolves its configuration before doing any work (defaults <-
config file <- flags) and echoes the resolved values into the output
directory, so a run is reproducible from that file plus the seed. Exit codes:
0 success, 1 runtime failure, 2 usage/configuration fault.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from PIL import Image

from . import acgan, data, evaluate, gradcheck
from .augment import AugmentConfig
from .rng import substream
from .tensor import Tensor

USAGE_ERROR = 2
RUNTIME_ERROR = 1


class UsageFault(Exception):
    """Operator-facing input problem; maps to exit code 2."""


@dataclass
class RunConfig:
    """Fully resolved settings for one pipeline run."""

    data: str | None = None
    out: str | None = None
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    folds: int = 5
    image_size: int | None = None  # None: use the native size of the data
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    stratified: bool = True
    positive_class: str | None = None
    augment_probability: float = 0.5
    augment_transforms: tuple[str, ...] = ("hflip", "vflip", "rotate", "noise")
    augment_angles: tuple[int, ...] = (90, 180, 270)
    augment_noise_sigma: float = 0.05

    def augment_config(self) -> AugmentConfig | None:
        if not self.augment_transforms:
            return None
        return AugmentConfig(
            probability=self.augment_probability,
            transforms=tuple(self.augment_transforms),
            angles=tuple(self.augment_angles),
            noise_sigma=self.augment_noise_sigma,
        )

    def train_config(self) -> acgan.TrainConfig:
        return acgan.TrainConfig(
            epochs=self.epochs, lr=self.lr, beta1=self.beta1, beta2=self.beta2,
            batch_size=self.batch_size, seed=self.seed, augment=self.augment_config(),
        )


_CONFIG_KEYS = {
    "data": str, "out": str,
    "epochs": int, "batch_size": int, "lr": float, "beta1": float, "beta2": float,
    "seed": int, "folds": int, "image_size": int, "threads": int,
    "stratified": bool, "positive_class": str,
}
_AUGMENT_KEYS = {
    "probability": float, "transforms": list, "angles": list, "noise_sigma": float,
}


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    """Merge defaults, an optional TOML/JSON file, and CLI flag overrides."""
    values: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise UsageFault(f"config file not found: {path}")
        try:
            if path.endswith(".toml"):
                with open(path, "rb") as f:
                    raw = tomllib.load(f)
            elif path.endswith(".json"):
                with open(path) as f:
                    raw = json.load(f)
            else:
                raise UsageFault(f"config file must end in .toml or .json: {path}")
        except UsageFault:
            raise
        except Exception as e:
            raise UsageFault(f"cannot parse config file {path}: {e}") from e
        for key, value in raw.items():
            if key == "augment":
                if not isinstance(value, dict):
                    raise UsageFault("config key 'augment' must be a table/object")
                for akey, avalue in value.items():
                    if akey not in _AUGMENT_KEYS:
                        raise UsageFault(f"unknown config key augment.{akey}")
                    values[f"augment_{akey}"] = avalue
            elif key in _CONFIG_KEYS:
                values[key] = value
            else:
                raise UsageFault(f"unknown config key {key!r}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**values)
        if isinstance(cfg.augment_transforms, list):
            cfg.augment_transforms = tuple(cfg.augment_transforms)
        if isinstance(cfg.augment_angles, list):
            cfg.augment_angles = tuple(int(a) for a in cfg.augment_angles)
        cfg.augment_config()  # validate augmentation settings eagerly
        cfg.train_config()
    except (TypeError, ValueError) as e:
        raise UsageFault(f"invalid configuration: {e}") from e
    return cfg


def echo_config(cfg: RunConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as f:
        json.dump(dataclasses.asdict(cfg), f, indent=2, default=list)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    if args.per_class < 1:
        raise UsageFault("--per-class must be >= 1")
    if os.path.isdir(args.out) and os.listdir(args.out) and not args.force:
        raise UsageFault(f"output directory {args.out} is not empty (use --force)")
    ds = data.synth_dataset(args.per_class, size=args.size, seed=args.seed)
    n = data.save_directory(ds, args.out)
    print(f"wrote {n} images ({len(ds.class_names)} classes) to {args.out}")
    return 0


def _resolve_io(cfg: RunConfig) -> None:
    if not cfg.data:
        raise UsageFault("no data directory given (--data flag or 'data' config key)")
    if not cfg.out:
        raise UsageFault("no output directory given (--out flag or 'out' config key)")
    if not os.path.isdir(cfg.data):
        raise UsageFault(f"data directory not found: {cfg.data}")


def cmd_cross_validate(args) -> int:
    cfg = load_run_config(args.config, _config_overrides(args))
    _resolve_io(cfg)
    dataset = data.load_directory(cfg.data, size=cfg.image_size)
    if cfg.folds < 2:
        raise UsageFault("--folds must be >= 2")
    positive = _resolve_positive_class(cfg, dataset)
    echo_config(cfg, cfg.out)
    report, _ = evaluate.cross_validate(
        dataset, cfg.train_config(), k=cfg.folds, stratified=cfg.stratified,
        positive_class=positive, out_dir=cfg.out, threads=cfg.threads,
        on_fold=lambda fold, m: print(
            f"fold {fold + 1}: accuracy {100 * m.accuracy:.2f}%"),
    )
    print(evaluate.report_table_text(report), end="")
    print(f"artifacts in {cfg.out}")
    return 0


def _resolve_positive_class(cfg: RunConfig, dataset: data.Dataset) -> int | None:
    if cfg.positive_class is None:
        return None
    if cfg.positive_class not in dataset.class_names:
        raise UsageFault(f"positive class {cfg.positive_class!r} not among "
                         f"classes {dataset.class_names}")
    return dataset.class_names.index(cfg.positive_class)


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, _config_overrides(args))
    _resolve_io(cfg)
    dataset = data.load_directory(cfg.data, size=cfg.image_size)
    echo_config(cfg, cfg.out)
    gen_spec = acgan.GeneratorSpec.for_size(dataset.num_classes, dataset.image_size)
    disc_spec = acgan.DiscriminatorSpec.for_size(dataset.num_classes, dataset.image_size)
    model = acgan.AcganModel(gen_spec, disc_spec, seed=cfg.seed)
    history = acgan.fit(model, dataset, cfg.train_config(),
                        on_epoch=lambda h: print(
                            f"epoch {h.epoch}: loss_D {h.loss_d:.4f} loss_G {h.loss_g:.4f} "
                            f"class_acc {h.class_acc:.3f}"))
    with open(os.path.join(cfg.out, "history.csv"), "w") as f:
        f.write("epoch,loss_D,loss_G,D_real_acc,D_fake_acc,class_acc\n")
        for h in history:
            f.write(f"{h.epoch},{h.loss_d:.6f},{h.loss_g:.6f},{h.d_real_acc:.4f},"
                    f"{h.d_fake_acc:.4f},{h.class_acc:.4f}\n")
    ckpt = os.path.join(cfg.out, "checkpoint")
    model.freeze()
    acgan.save_model(model, ckpt, class_names=dataset.class_names)
    print(f"checkpoint in {ckpt}")
    return 0


def cmd_classify(args) -> int:
    model, class_names = acgan.load_model(args.checkpoint)
    if class_names is None:
        class_names = [f"class_{i}" for i in range(model.num_classes)]
    if not model.frozen:
        model.freeze()
    size = model.image_size
    for path in args.images:
        if not os.path.exists(path):
            raise UsageFault(f"image not found: {path}")
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.uint8)
        if arr.shape != (size, size):
            raise UsageFault(
                f"{path}: image is {arr.shape[1]}x{arr.shape[0]} but the checkpoint "
                f"expects {size}x{size}")
        images = Tensor(data.u8_to_unit(arr)[None, None, :, :])
        pred = int(acgan.classify(model, images)[0])
        print(f"{os.path.basename(path)},{class_names[pred]}")
    return 0


def cmd_generate(args) -> int:
    if args.per_class < 1:
        raise UsageFault("--per-class must be >= 1")
    model, _ = acgan.load_model(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    rng = substream(args.seed, "noise")
    count = 0
    for c in range(model.num_classes):
        labels = np.full(args.per_class, c)
        images = acgan.generate(model, labels, rng=rng)
        for i in range(args.per_class):
            u8 = data.unit_to_u8(images.data[i, 0])
            Image.fromarray(u8, mode="L").save(
                os.path.join(args.out, f"class_{c}_{i}.png"))
            count += 1
    print(f"wrote {count} images to {args.out}")
    return 0


def cmd_grad_check(args) -> int:
    ops = args.ops.split(",") if args.ops else None
    try:
        results = gradcheck.run_suite(ops=ops, instances=args.instances, seed=args.seed)
    except ValueError as e:
        raise UsageFault(str(e)) from e
    failed = False
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.op:<28} max_rel_err {r.max_rel_err:.3e}  tol {r.tolerance:.0e}  {status}")
        failed = failed or not r.passed
    return RUNTIME_ERROR if failed else 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _config_overrides(args) -> dict:
    keys = ("data", "out", "epochs", "batch_size", "lr", "beta1", "seed", "folds",
            "image_size", "threads", "positive_class")
    out = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "no_stratify", False):
        out["stratified"] = False
    if getattr(args, "no_augment", False):
        out["augment_transforms"] = ()
    return out


def _add_train_flags(p: argparse.ArgumentParser, folds: bool = False) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--no-augment", action="store_true")
    if folds:
        p.add_argument("--folds", type=int)
        p.add_argument("--no-stratify", action="store_true")
        p.add_argument("--positive-class", dest="positive_class")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ganclass",
        description="Adversarially augmented image classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write the synthetic two-class dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", dest="per_class", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("cross-validate", help="k-fold evaluation on an image directory")
    p.add_argument("--data")
    p.add_argument("--out")
    _add_train_flags(p, folds=True)
    p.set_defaults(func=cmd_cross_validate)

    p = sub.add_parser("train", help="train on a whole directory and checkpoint")
    p.add_argument("--data")
    p.add_argument("--out")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="label image files with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("generate", help="sample images per class from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", dest="per_class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("grad-check", help="run the 64-bit finite-difference suite")
    p.add_argument("--ops", help="comma-separated op subset (default: all)")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except UsageFault as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except (data.DatasetError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as e:  # runtime faults: training aborts, IO, etc.
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
