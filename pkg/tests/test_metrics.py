import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsunet.metrics import (
    COLUMNS, MetricBundle, bundle_row, dice_global, evaluate_case, overlap_metrics, summarize,
    surface, surface_distances,
)

from oracles import brute_metrics, brute_surface


def voxels(n, shape=(4, 4, 4), start=0):
    m = np.zeros(shape, dtype=bool)
    m.reshape(-1)[start:start + n] = True
    return m


def test_identical_masks():
    m = voxels(10)
    assert overlap_metrics(m, m) == (1.0, 0.0, 0.0)
    assert surface_distances(m, m) == (0.0, 0.0, 0.0)


def test_disjoint_masks():
    dice, voe, rvd = overlap_metrics(voxels(5), voxels(10, start=20))
    assert (dice, voe) == (0.0, 1.0)
    assert rvd == pytest.approx(-0.5)


def test_set_arithmetic_fixture():
    truth = voxels(10)
    pred = voxels(8, start=4)  # overlaps truth on voxels 4..9
    dice, voe, rvd = overlap_metrics(pred, truth)
    assert dice == pytest.approx(12 / 18)
    assert voe == pytest.approx(0.5)
    assert rvd == pytest.approx(-0.2)


def test_empty_conventions(caplog):
    z = np.zeros((3, 3, 3), bool)
    assert overlap_metrics(z, z) == (1.0, 0.0, 0.0)
    assert overlap_metrics(voxels(2, (3, 3, 3)), z)[2] == math.inf
    assert all(math.isnan(v) for v in surface_distances(z, voxels(2, (3, 3, 3))))
    assert "empty" in caplog.text


def test_shape_mismatch():
    with pytest.raises(ValueError):
        overlap_metrics(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


def test_dice_global_examples():
    a = voxels(10, (4, 4, 4))
    b = voxels(10, (4, 4, 4), start=30)
    assert dice_global([(a, a)]) == overlap_metrics(a, a)[0]
    assert dice_global([(a, a), (a, b)]) == pytest.approx(0.5)
    big, small = voxels(100, (5, 5, 5)), voxels(10, (5, 5, 5))
    miss = voxels(10, (5, 5, 5), start=110)
    dg = dice_global([(big, big), (miss, small)])
    assert dg == pytest.approx(200 / 220)
    assert dg > np.mean([1.0, 0.0])


def _planes(gap, axis=2, shape=(6, 6, 10)):
    a = np.zeros(shape, bool)
    b = np.zeros(shape, bool)
    idx = [slice(None)] * 3
    idx[axis] = 2
    a[tuple(idx)] = True
    idx[axis] = 2 + gap
    b[tuple(idx)] = True
    return a, b


def test_parallel_planes_isotropic():
    a, b = _planes(3)
    assert surface_distances(a, b, (1.0, 1.0, 1.0)) == (3.0, 3.0, 3.0)


def test_parallel_planes_anisotropic():
    a, b = _planes(3)
    assert surface_distances(a, b, (1.0, 1.0, 2.0)) == (6.0, 6.0, 6.0)


def test_surface_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m = rng.random((6, 5, 4)) > 0.4
        assert np.array_equal(surface(m), brute_surface(m))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.tuples(*[st.integers(2, 8)] * 3), st.floats(0.2, 0.8))
def test_all_metrics_match_oracle(seed, shape, density):
    rng = np.random.default_rng(seed)
    pred = rng.random(shape) < density
    truth = rng.random(shape) < density
    pred.reshape(-1)[0] = truth.reshape(-1)[-1] = True
    spacing = tuple(rng.uniform(0.5, 2.5, size=3))
    got = evaluate_case(pred, truth, spacing)
    ref = brute_metrics(pred, truth, spacing)
    for key in ("dice", "voe", "rvd", "assd", "msd", "rssd"):
        assert abs(getattr(got, key) - ref[key]) < 1e-9, key
    assert got.intersection == ref["inter"]
    assert dice_global([(pred, truth)]) == pytest.approx(ref["dice"], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_surface_symmetry_and_scaling(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((6, 6, 6)) < 0.5
    b = rng.random((6, 6, 6)) < 0.5
    a[0, 0, 0] = b[5, 5, 5] = True
    sp = tuple(rng.uniform(0.5, 2.0, size=3))
    ab = surface_distances(a, b, sp)
    assert np.allclose(ab, surface_distances(b, a, sp), rtol=1e-12, atol=0)
    doubled = surface_distances(a, b, tuple(2 * s for s in sp))
    assert np.allclose(doubled, 2 * np.asarray(ab), rtol=1e-12)


def test_dpc_equals_dg_for_uniform_cases():
    t = voxels(8, start=0)
    p = voxels(8, start=4)
    cases = [(p, t), (p.copy(), t.copy())]
    bundles = [evaluate_case(p_, t_) for p_, t_ in cases]
    s = summarize(bundles)
    assert s["DPC"] == pytest.approx(s["DG"])


def test_summary_excludes_sentinels():
    good = MetricBundle(0.8, 0.3, 0.1, 1.0, 2.0, 1.5, 8, 10, 10)
    bad = MetricBundle(0.0, 1.0, math.inf, math.nan, math.nan, math.nan, 0, 0, 4)
    s = summarize([good, bad])
    assert s["DPC"] == pytest.approx(0.4)
    assert s["RVD"] == 0.1 and s["RVD_excluded"] == 1
    assert s["ASSD"] == 1.0 and s["ASSD_excluded"] == 1
    assert list(k for k in s if "_" not in k) == list(COLUMNS)


def test_bundle_row_order():
    b = MetricBundle(0.9, 0.2, 0.05, 1.0, 3.0, 1.2)
    assert bundle_row("c1", b) == ["c1", 0.9, 0.2, 0.05, 1.0, 3.0, 1.2]


def test_invariant_ranges():
    rng = np.random.default_rng(5)
    for _ in range(20):
        p, t = rng.random((5, 5, 5)) < 0.3, rng.random((5, 5, 5)) < 0.3
        p[0, 0, 0] = t[0, 0, 0] = True
        b = evaluate_case(p, t)
        assert 0 <= b.dice <= 1 and 0 <= b.voe <= 1
        assert min(b.assd, b.msd, b.rssd) >= 0
