import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

from ganclass import acgan, data


@pytest.fixture(scope="session")
def small_synth():
    """80-image 32x32 synthetic dataset shared by read-only tests."""
    return data.synth_dataset(40, size=32, seed=7)


@pytest.fixture(scope="session")
def trained_small_model(small_synth):
    """One 50-epoch training run on the small corpus, reused by several tests.

    Expensive (a few minutes), so the model, its history, and the step log
    are computed once per session.
    """
    config = acgan.TrainConfig(epochs=50, batch_size=32, seed=11)
    gen_spec = acgan.GeneratorSpec.for_size(2, small_synth.image_size)
    disc_spec = acgan.DiscriminatorSpec.for_size(2, small_synth.image_size)
    model = acgan.AcganModel(gen_spec, disc_spec, seed=3)
    step_log = []
    history = acgan.fit(model, small_synth, config, step_log=step_log,
                        audit_first_step=True)
    return model, history, step_log, config


def make_image_tree(root: Path, spec: dict[str, int], size: int = 16, seed: int = 0):
    """Write a {class_name: count} PNG tree for loader tests."""
    from PIL import Image

    rng = np.random.default_rng(seed)
    for cls, count in spec.items():
        d = root / cls
        d.mkdir(parents=True)
        for i in range(count):
            arr = rng.integers(0, 256, size=(size, size), dtype=np.uint8)
            Image.fromarray(arr, mode="L").save(d / f"img_{i:03d}.png")
    return root
