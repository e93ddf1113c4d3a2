"""Transform correctness and the stochastic on-the-fly contracts."""

import numpy as np
import pytest

from ganclass import augment as aug
from ganclass.rng import substream
from ganclass.tensor import Tensor


def img(arr):
    return Tensor(np.asarray(arr, dtype=np.float32)[None, :, :])


def random_image(rng, size=8):
    return Tensor(rng.uniform(-1, 1, (1, size, size)).astype(np.float32))


class TestRotate:
    def test_90_clockwise_hand_permutation(self):
        out = aug.rotate(img([[1.0, 2.0], [3.0, 4.0]]), 90)
        np.testing.assert_array_equal(out.data[0], [[3.0, 1.0], [4.0, 2.0]])

    def test_180_equals_two_90s(self):
        rng = np.random.default_rng(0)
        x = random_image(rng)
        once = aug.rotate(aug.rotate(x, 90), 90)
        np.testing.assert_array_equal(aug.rotate(x, 180).data, once.data)

    def test_four_90s_identity(self):
        x = random_image(np.random.default_rng(1))
        y = x
        for _ in range(4):
            y = aug.rotate(y, 90)
        np.testing.assert_array_equal(y.data, x.data)

    def test_preserves_pixel_multiset(self):
        x = random_image(np.random.default_rng(2))
        for angle in (90, 180, 270):
            out = aug.rotate(x, angle)
            np.testing.assert_array_equal(np.sort(out.data.ravel()), np.sort(x.data.ravel()))

    def test_rejects_non_square(self):
        bad = Tensor(np.zeros((1, 3, 4), np.float32))
        with pytest.raises(ValueError):
            aug.rotate(bad, 90)

    def test_rejects_off_grid_angle(self):
        with pytest.raises(ValueError):
            aug.rotate(random_image(np.random.default_rng(3)), 45)


class TestFlips:
    def test_hflip_involution(self):
        x = random_image(np.random.default_rng(4))
        np.testing.assert_array_equal(aug.hflip(aug.hflip(x)).data, x.data)

    def test_vflip_involution(self):
        x = random_image(np.random.default_rng(5))
        np.testing.assert_array_equal(aug.vflip(aug.vflip(x)).data, x.data)

    def test_flips_differ_from_input_on_asymmetric_image(self):
        x = img([[1.0, 2.0], [3.0, 4.0]])
        assert not np.array_equal(aug.hflip(x).data, x.data)
        assert not np.array_equal(aug.vflip(x).data, x.data)


class TestAddNoise:
    def test_sigma_zero_is_identity(self):
        x = random_image(np.random.default_rng(6))
        out = aug.add_noise(x, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, x.data)

    def test_half_normal_mean_absolute_perturbation(self):
        # E|N(0, sigma^2)| = sigma * sqrt(2/pi); checked over 1e4 pixels
        sigma = 0.05
        x = Tensor(np.zeros((1, 100, 100), np.float32))
        out = aug.add_noise(x, sigma, np.random.default_rng(12))
        mean_abs = np.abs(out.data - x.data).mean()
        expected = sigma * np.sqrt(2 / np.pi)
        assert abs(mean_abs - expected) < 0.05 * expected

    def test_output_clamped_for_huge_sigma(self):
        x = random_image(np.random.default_rng(7))
        out = aug.add_noise(x, 10.0, np.random.default_rng(1))
        assert out.data.min() >= -1.0 and out.data.max() <= 1.0


class TestAugment:
    def test_p_zero_identity_bit_exact(self):
        cfg = aug.AugmentConfig(probability=0.0)
        x = random_image(np.random.default_rng(8))
        for seed in range(5):
            out = aug.augment(x, cfg, np.random.default_rng(seed))
            np.testing.assert_array_equal(out.data, x.data)

    def test_input_never_modified(self):
        cfg = aug.AugmentConfig(probability=1.0)
        x = random_image(np.random.default_rng(9))
        before = x.data.copy()
        aug.augment(x, cfg, np.random.default_rng(3))
        np.testing.assert_array_equal(x.data, before)

    def test_output_stays_in_range(self):
        cfg = aug.AugmentConfig(probability=1.0, noise_sigma=0.5)
        rng = np.random.default_rng(10)
        for _ in range(20):
            out = aug.augment(random_image(rng), cfg, rng)
            assert out.data.min() >= -1.0 and out.data.max() <= 1.0

    def test_some_pass_through_and_some_transform_per_epoch(self):
        # p in (0,1): an epoch leaves some images untouched, transforms others
        cfg = aug.AugmentConfig(probability=0.5)
        rng = np.random.default_rng(11)
        images = [random_image(rng) for _ in range(200)]
        untouched = transformed = 0
        for i, x in enumerate(images):
            out = aug.augment(x, cfg, substream(99, "augment", 0, i))
            if np.array_equal(out.data, x.data):
                untouched += 1
            else:
                transformed += 1
        assert untouched > 0
        assert transformed > 0
        assert untouched + transformed == 200  # cardinality unchanged

    def test_masks_differ_across_epochs(self):
        # the same image sees different transforms in different epochs
        cfg = aug.AugmentConfig(probability=0.5)
        rng = np.random.default_rng(13)
        images = [random_image(rng) for _ in range(100)]
        differing = 0
        for i, x in enumerate(images):
            a = aug.augment(x, cfg, substream(5, "augment", 1, i))
            b = aug.augment(x, cfg, substream(5, "augment", 2, i))
            if not np.array_equal(a.data, b.data):
                differing += 1
        # P(identical masks) = sum over mask outcomes; crude bound: well below 1
        assert differing > 50

    def test_unknown_transform_rejected(self):
        with pytest.raises(ValueError):
            aug.AugmentConfig(transforms=("hflip", "blur"))

    def test_angle_outside_exact_set_rejected(self):
        with pytest.raises(ValueError):
            aug.AugmentConfig(angles=(90, 45))

    def test_probability_domain(self):
        with pytest.raises(ValueError):
            aug.AugmentConfig(probability=1.5)

    def test_deterministic_given_stream(self):
        cfg = aug.AugmentConfig(probability=0.7)
        x = random_image(np.random.default_rng(14))
        a = aug.augment(x, cfg, substream(4, "augment", 3, 17))
        b = aug.augment(x, cfg, substream(4, "augment", 3, 17))
        np.testing.assert_array_equal(a.data, b.data)
