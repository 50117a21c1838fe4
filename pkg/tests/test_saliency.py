import numpy as np
import pytest
import torch

from conftest import make_tiny_bundle, tiny_input_for
from pvkit.saliency import grad_cam, normalize_map, upsample_map


def bilinear_oracle(src: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Direct per-pixel bilinear interpolation (half-pixel centers)."""
    sh, sw = src.shape
    th, tw = target
    out = np.zeros((th, tw))
    for i in range(th):
        for j in range(tw):
            y = (i + 0.5) * sh / th - 0.5
            x = (j + 0.5) * sw / tw - 0.5
            y0 = int(np.floor(y))
            x0 = int(np.floor(x))
            dy, dx = y - y0, x - x0
            y0c, y1c = np.clip([y0, y0 + 1], 0, sh - 1)
            x0c, x1c = np.clip([x0, x0 + 1], 0, sw - 1)
            out[i, j] = (src[y0c, x0c] * (1 - dy) * (1 - dx)
                         + src[y0c, x1c] * (1 - dy) * dx
                         + src[y1c, x0c] * dy * (1 - dx)
                         + src[y1c, x1c] * dy * dx)
    return out


class TestNormalizeMap:
    def test_divide_by_max(self):
        out = normalize_map(np.array([[0.0, 2.0], [4.0, 1.0]]))
        np.testing.assert_allclose(out, [[0, 0.5], [1, 0.25]])

    def test_all_zero_passthrough(self):
        out = normalize_map(np.zeros((3, 3)))
        assert (out == 0).all()

    def test_idempotent_at_max_one(self):
        arr = np.array([[0.2, 1.0], [0.7, 0.0]])
        np.testing.assert_allclose(normalize_map(arr), arr)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            normalize_map(np.array([[np.nan, 1.0]]))


class TestUpsampleMap:
    def test_constant_stays_constant(self):
        out = upsample_map(np.full((3, 3), 0.4), (9, 9))
        np.testing.assert_allclose(out, 0.4, atol=1e-7)

    def test_one_by_one(self):
        out = upsample_map(np.array([[0.7]]), (5, 8))
        np.testing.assert_allclose(out, 0.7, atol=1e-7)

    def test_monotone_rows_match_oracle(self):
        src = np.array([[0.0, 1.0], [0.0, 1.0]])
        out = upsample_map(src, (2, 4))
        expected = bilinear_oracle(src, (2, 4))
        np.testing.assert_allclose(out, expected, atol=1e-6)
        for row in out:
            assert (np.diff(row) >= 0).all()
            assert row[0] == 0.0 and row[-1] == 1.0

    def test_random_maps_match_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            src = rng.random((3, 4))
            out = upsample_map(src, (7, 9))
            np.testing.assert_allclose(out, bilinear_oracle(src, (7, 9)),
                                       atol=1e-5)

    def test_range_stays_within_source(self):
        rng = np.random.default_rng(1)
        src = rng.random((4, 4))
        out = upsample_map(src, (13, 11))
        assert out.min() >= src.min() - 1e-9
        assert out.max() <= src.max() + 1e-9

    def test_downsample_rejected(self):
        with pytest.raises(ValueError):
            upsample_map(np.zeros((4, 4)), (2, 8))


class TestGradCam:
    def test_matches_hand_derived_closed_form(self, tiny_bundle):
        # latent A = [[1,-1],[2,0]], constant positive gradient, so the
        # normalized map is relu(A)/max = [[0.5,0],[1,0]]
        x = tiny_input_for([[1.0, -1.0], [2.0, 0.0]])
        m = grad_cam(tiny_bundle, x, 0)
        np.testing.assert_allclose(m.values, [[0.5, 0.0], [1.0, 0.0]], atol=1e-6)

    def test_negative_weight_gives_all_zero_map(self, tiny_bundle):
        # class 1 weighs the only feature map negatively; nonnegative A
        # makes the ReLU output identically zero
        x = tiny_input_for([[1.0, 0.5], [2.0, 0.0]])
        m = grad_cam(tiny_bundle, x, 1)
        assert (m.values == 0).all()

    def test_deterministic(self, desk_bundle):
        x = np.random.default_rng(0).random((32, 32, 3))
        a = grad_cam(desk_bundle, x, 3)
        b = grad_cam(desk_bundle, x, 3)
        assert np.array_equal(a.values, b.values)

    def test_scale_invariance_of_normalized_map(self):
        # scaling the class score by k>0 scales gradients and the raw map
        # alike; the normalized map must not move
        base = make_tiny_bundle()
        scaled = make_tiny_bundle()
        with torch.no_grad():
            scaled.classifier.fc.weight[0] *= 7.5
        x = tiny_input_for([[1.0, -1.0], [2.0, 0.5]])
        m1 = grad_cam(base, x, 0)
        m2 = grad_cam(scaled, x, 0)
        np.testing.assert_allclose(m1.values, m2.values, atol=1e-5)

    def test_map_range_and_shape(self, desk_bundle):
        x = np.random.default_rng(9).random((32, 32, 3))
        m = grad_cam(desk_bundle, x, 1)
        assert m.values.shape == (32, 32)
        assert m.values.min() >= 0 and m.values.max() <= 1

    def test_class_out_of_range(self, tiny_bundle):
        with pytest.raises(IndexError):
            grad_cam(tiny_bundle, tiny_input_for([[0, 0], [0, 0]]), 5)
