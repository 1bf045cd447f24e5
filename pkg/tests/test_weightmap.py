import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bsunet.errors import ConfigurationError, DegenerateMaskError, ShapeError
from bsunet.weightmap import (
    LIVER_SIGMA, LIVER_W, WeightMapParams, compute_weight_map, contour_distance_map, contour_mask,
    to_preview, unnormalized_weight, weight_map,
)

from oracles import brute_contour, brute_distance_map, scalar_weight_map


def liver_fixture():
    lab = np.zeros((8, 8), dtype=np.uint8)
    lab[1:7, 2:7] = 1
    lab[1, 2] = 0
    tumor = np.zeros((8, 8), dtype=np.uint8)
    tumor[3:5, 3:5] = 1
    return lab, tumor


masks_16 = arrays(np.uint8, (16, 16), elements=st.integers(0, 1)).filter(
    lambda m: 0 < m.sum() < m.size and brute_contour(m).any()
)


def test_liver_defaults():
    assert (LIVER_W, LIVER_SIGMA) == (0.05, 20.0)
    p = WeightMapParams()
    assert p.w == 0.05 and p.sigma == 20.0 and p.exponent == "linear"


def test_params_validation():
    with pytest.raises(ConfigurationError):
        WeightMapParams(w=-0.1)
    with pytest.raises(ConfigurationError):
        WeightMapParams(sigma=0)
    with pytest.raises(ConfigurationError):
        WeightMapParams(roi=np.full((2, 2), 0.5))
    with pytest.raises(ConfigurationError):
        WeightMapParams(exponent="cubic")


def test_contour_pixel_distance_zero():
    lab, _ = liver_fixture()
    D = contour_distance_map(lab)
    c = contour_mask(lab)
    assert np.all(D[c] == 0)
    assert np.all(D[~c] > 0)


def test_single_pixel_distance_is_five():
    lab = np.zeros((5, 5), dtype=np.uint8)
    lab[0, 0] = 1
    D = contour_distance_map(lab)
    assert D[3, 4] == 5.0
    assert np.array_equal(D, brute_distance_map(lab))


def test_degenerate_masks():
    for lab in (np.zeros((6, 6)), np.ones((6, 6))):
        with pytest.raises(DegenerateMaskError):
            contour_distance_map(lab)
        assert np.array_equal(compute_weight_map(lab), np.ones((6, 6)))


def test_rejects_non_binary_and_3d():
    with pytest.raises(ConfigurationError):
        contour_distance_map(np.full((4, 4), 2))
    with pytest.raises(ShapeError):
        contour_distance_map(np.zeros((2, 4, 4)))


@settings(max_examples=25, deadline=None)
@given(masks_16)
def test_distance_map_matches_brute_force(mask):
    assert np.allclose(contour_distance_map(mask), brute_distance_map(mask), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(masks_16)
def test_distance_map_is_lipschitz(mask):
    D = contour_distance_map(mask)
    idx = np.argwhere(np.ones_like(mask))
    vals = D.reshape(-1)
    diff = np.abs(vals[:, None] - vals[None, :])
    dist = np.sqrt(((idx[:, None, :] - idx[None, :, :]) ** 2).sum(-1))
    assert np.all(diff <= dist + 1e-12)


def test_w_zero_contour_attains_one():
    lab, _ = liver_fixture()
    W = compute_weight_map(lab, WeightMapParams(w=0.0, sigma=2.0))
    assert np.all(W[contour_mask(lab)] == 1.0)


@pytest.mark.parametrize("w,sigma", [(0.1, 2.0), (0.05, 20.0), (0.05, 25.0), (0.1, 15.0), (0.0, 1.0)])
def test_full_matrix_matches_scalar_oracle(w, sigma):
    lab, tumor = liver_fixture()
    D = brute_distance_map(lab)
    expected = scalar_weight_map(D.tolist(), tumor.tolist(), w, sigma)
    W = compute_weight_map(lab, WeightMapParams(w=w, sigma=sigma, roi=tumor))
    assert np.max(np.abs(W - expected)) < 1e-12


def test_range_bounds_attained():
    lab, tumor = liver_fixture()
    W = compute_weight_map(lab, WeightMapParams(w=0.1, sigma=2.0, roi=tumor))
    assert W.min() == 0.0 and W.max() == 1.0


def test_exponent_is_linear_in_distance():
    D = np.array([[0.0, 4.0]])
    A = unnormalized_weight(D, WeightMapParams(w=0.0, sigma=2.0))
    assert A[0, 1] == pytest.approx(math.exp(-4.0 / 8.0), abs=0)
    A2 = unnormalized_weight(D, WeightMapParams(w=0.0, sigma=2.0, exponent="squared"))
    assert A2[0, 1] == pytest.approx(math.exp(-16.0 / 8.0), abs=0)


def test_roi_ratio_before_normalization():
    D = np.array([[1.5, 1.5], [3.0, 3.0]])
    F = np.array([[1, 0], [1, 0]])
    A = unnormalized_weight(D, WeightMapParams(w=0.1, sigma=2.0, roi=F))
    assert A[0, 0] / A[0, 1] == pytest.approx(1.1, rel=1e-15)
    assert A[1, 0] / A[1, 1] == pytest.approx(1.1, rel=1e-15)


def test_roi_shape_mismatch():
    with pytest.raises(ShapeError):
        unnormalized_weight(np.zeros((3, 3)), WeightMapParams(roi=np.zeros((2, 2))))


def test_constant_map_returns_ones(caplog):
    W = weight_map(np.full((3, 3), 2.0), WeightMapParams())
    assert np.array_equal(W, np.ones((3, 3)))
    assert "constant" in caplog.text


@settings(max_examples=30, deadline=None)
@given(masks_16, st.floats(0, 1), st.floats(0.5, 30))
def test_range_and_monotone_decay(mask, w, sigma):
    F = np.zeros_like(mask)
    F[:8] = 1
    W = compute_weight_map(mask, WeightMapParams(w=w, sigma=sigma, roi=F))
    assert W.min() >= 0 and W.max() <= 1
    D = contour_distance_map(mask)
    for region in (F == 1, F == 0):
        d, v = D[region], W[region]
        closer = d[:, None] < d[None, :]
        assert np.all((v[:, None] >= v[None, :]) | ~closer)


def test_distinct_parameter_sets_differ():
    lab = np.zeros((64, 64), dtype=np.uint8)
    lab[16:48, 12:52] = 1
    a = compute_weight_map(lab, WeightMapParams(w=0.05, sigma=25))
    b = compute_weight_map(lab, WeightMapParams(w=0.1, sigma=15))
    # after min-max the linear-exponent maps are close to each other, but not equal
    assert np.abs(a - b).max() > 1e-3


def test_preview_scaling():
    out = to_preview(np.array([[0.0, 0.5, 1.0]]))
    assert out.dtype == np.uint8 and out.tolist() == [[0, 128, 255]]
