import pytest
import torch
from hypothesis import given, settings, strategies as st

from bsunet.errors import ConfigurationError, DomainError, ShapeError
from bsunet.losses import (
    EPS, LossWeights, dice_loss, euclidean_bottleneck_loss, total_loss, weighted_dice_loss,
)

from oracles import central_difference, relative_error


def grid(*cells, shape=(4, 4)):
    t = torch.zeros(shape, dtype=torch.float64)
    for c in cells:
        t[c] = 1
    return t


def test_perfect_overlap():
    a = grid((0, 0), (1, 1))
    assert dice_loss(a, a).item() == pytest.approx(0, abs=1e-6)


def test_disjoint():
    assert dice_loss(grid((0, 0)), grid((3, 3))).item() == pytest.approx(1, abs=1e-6)


def test_half_overlap():
    a = grid((0, 0), (0, 1), (0, 2), (0, 3))
    b = grid((0, 0), (0, 1), (1, 0), (1, 1))
    assert dice_loss(a, b).item() == pytest.approx(0.5, abs=1e-6)


def test_empty_versus_empty_is_zero():
    z = torch.zeros(4, 4)
    assert dice_loss(z, z).item() == 0.0


def test_errors():
    with pytest.raises(ShapeError):
        dice_loss(torch.zeros(2, 2), torch.zeros(3, 3))
    with pytest.raises(DomainError):
        dice_loss(torch.full((2, 2), 1.5), torch.zeros(2, 2))
    with pytest.raises(ShapeError):
        weighted_dice_loss(torch.zeros(2, 2), torch.zeros(2, 2), torch.ones(3, 3))


def test_weighted_uniform_equals_plain():
    torch.manual_seed(1)
    p = torch.rand(2, 1, 6, 6, dtype=torch.float64)
    t = (torch.rand(2, 1, 6, 6) > 0.5).double()
    assert weighted_dice_loss(p, t, torch.ones_like(p)).item() == dice_loss(p, t).item()


def test_weighted_perfect_overlap():
    t = grid((0, 0), (2, 3))
    W = torch.rand(4, 4, dtype=torch.float64)
    W[0, 0] = 1
    assert weighted_dice_loss(t, t, W).item() == pytest.approx(0, abs=1e-6)


def test_weighted_half_support():
    # W keeps only the left two columns; a has 4 left + 2 right pixels, b has 2 left
    W = torch.zeros(4, 4, dtype=torch.float64)
    W[:, :2] = 1
    a = grid((0, 0), (1, 0), (2, 0), (3, 0), (0, 3), (1, 3))
    b = grid((0, 0), (1, 0), (0, 2))
    expected = 1 - (2 * 2 + EPS) / (4 + 2 + EPS)
    assert weighted_dice_loss(a, b, W).item() == pytest.approx(expected, abs=1e-15)


def test_euclidean_examples():
    t1, t2 = torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0])
    assert euclidean_bottleneck_loss(t1, t2, "sum").item() == 2
    assert euclidean_bottleneck_loss(t1, t2).item() == 1
    assert euclidean_bottleneck_loss(t1, t1).item() == 0
    with pytest.raises(ConfigurationError):
        euclidean_bottleneck_loss(torch.zeros(3), torch.zeros(4))
    with pytest.raises(ConfigurationError):
        euclidean_bottleneck_loss(t1, t2, "max")


def test_euclidean_batched_reductions():
    t1 = torch.tensor([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    t2 = torch.zeros(2, 3)
    assert euclidean_bottleneck_loss(t1, t2, "sum").item() == pytest.approx(2.5)
    assert euclidean_bottleneck_loss(t1, t2, "mean").item() == pytest.approx(2.5 / 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2 ** 31 - 1))
def test_euclidean_symmetry_and_permutation(n, seed):
    g = torch.Generator().manual_seed(seed)
    t1, t2 = torch.randn(n, generator=g, dtype=torch.float64), torch.randn(n, generator=g, dtype=torch.float64)
    perm = torch.randperm(n, generator=g)
    base = euclidean_bottleneck_loss(t1, t2)
    assert base >= 0
    assert euclidean_bottleneck_loss(t2, t1).item() == base.item()
    assert euclidean_bottleneck_loss(t1[perm], t2[perm]).item() == pytest.approx(base.item(), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_dice_bounds(seed):
    g = torch.Generator().manual_seed(seed)
    p = torch.rand(6, 6, generator=g, dtype=torch.float64)
    t = (torch.rand(6, 6, generator=g) > 0.5).double()
    W = torch.rand(6, 6, generator=g, dtype=torch.float64)
    for v in (dice_loss(p, t), weighted_dice_loss(p, t, W)):
        assert 0 <= v.item() <= 1 + EPS


def test_total_loss():
    w = LossWeights(0.5, 0.5)
    assert total_loss(0.4, 0.2, w) == pytest.approx(0.3)
    assert total_loss(0.4, 0.2, LossWeights(1.0, 0.0)) == 0.4
    assert total_loss(0.4, 0.0, w) == pytest.approx(0.2)


def test_loss_weights_validation():
    with pytest.raises(ConfigurationError):
        LossWeights(0.7, 0.7)
    with pytest.raises(ConfigurationError):
        LossWeights(-0.5, 1.5)


def _inputs(seed):
    g = torch.Generator().manual_seed(seed)
    p = (0.05 + 0.9 * torch.rand(1, 1, 6, 6, generator=g, dtype=torch.float64)).requires_grad_()
    t = (torch.rand(1, 1, 6, 6, generator=g) > 0.5).double()
    W = torch.rand(1, 1, 6, 6, generator=g, dtype=torch.float64)
    return p, t, W


def _check_grad(fn, tensors):
    out = fn()
    grads = torch.autograd.grad(out, tensors)
    numeric = central_difference(fn, [t.data for t in tensors], step=1e-3)
    return relative_error(grads, numeric)


@pytest.mark.parametrize("seed", range(3))
def test_dice_gradients(seed):
    p, t, _ = _inputs(seed)
    assert _check_grad(lambda: dice_loss(p, t), [p]) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_weighted_dice_gradients(seed):
    p, t, W = _inputs(seed)
    assert _check_grad(lambda: weighted_dice_loss(p, t, W), [p]) < 1e-4


@pytest.mark.parametrize("reduction", ["mean", "sum"])
def test_euclidean_gradients(reduction):
    g = torch.Generator().manual_seed(3)
    t1 = torch.randn(36, generator=g, dtype=torch.float64)
    t2 = torch.randn(36, generator=g, dtype=torch.float64).requires_grad_()
    assert _check_grad(lambda: euclidean_bottleneck_loss(t1, t2, reduction), [t2]) < 1e-4


def test_total_gradients():
    p, t, W = _inputs(4)
    g = torch.Generator().manual_seed(4)
    t1 = torch.randn(36, generator=g, dtype=torch.float64)
    t2 = torch.randn(36, generator=g, dtype=torch.float64).requires_grad_()
    w = LossWeights(0.5, 0.5)

    def fn():
        return total_loss(weighted_dice_loss(p, t, W), euclidean_bottleneck_loss(t1, t2), w)

    assert _check_grad(fn, [p, t2]) < 1e-4
