import numpy as np
import pytest

from hfgpi.errors import DimensionError, NumericError
from hfgpi.optim import AdamW


def test_zero_gradient_without_decay_leaves_params():
    opt = AdamW(lr=0.1, weight_decay=0.0)
    p = [np.array([[1.0, -2.0]])]
    (out,) = opt.step(p, [np.zeros((1, 2))])
    np.testing.assert_array_equal(out, p[0])


def test_first_step_is_signed_lr():
    # bias correction makes the first update lr * g / (|g| + eps)
    opt = AdamW(lr=0.01, weight_decay=0.0)
    (out,) = opt.step([np.array([[1.0, 1.0]])], [np.array([[3.0, -0.5]])])
    np.testing.assert_allclose(out, [[1.0 - 0.01 * 3 / (3 + 1e-8), 1.0 + 0.01 * 0.5 / (0.5 + 1e-8)]],
                               rtol=1e-14)


def test_decay_is_decoupled():
    opt = AdamW(lr=0.1, weight_decay=0.5)
    (out,) = opt.step([np.array([[2.0]])], [np.zeros((1, 1))])
    assert out[0, 0] == pytest.approx(2.0 * (1 - 0.05), abs=1e-15)


def test_one_step_on_quadratic_descends():
    opt = AdamW(lr=0.1)
    w = np.array([[1.0]])
    (w2,) = opt.step([w], [w.copy()])  # f = w^2/2
    assert abs(w2[0, 0]) < 1.0


def test_converges_on_convex_quadratic():
    a = np.diag([1.0, 3.0, 0.5])
    w = np.array([[2.0], [-1.0], [4.0]])
    opt = AdamW(lr=0.05, weight_decay=0.0)
    for _ in range(2000):
        (w,) = opt.step([w], [a @ w])
    assert np.linalg.norm(a @ w) < 1e-3


def test_nan_gradient_aborts_without_state_change():
    opt = AdamW()
    p = [np.ones((1, 2))]
    opt.step(p, [np.ones((1, 2))])
    m_before = [m.copy() for m in opt.first_moment]
    with pytest.raises(NumericError, match="parameter 0"):
        opt.step(p, [np.array([[np.nan, 0.0]])])
    assert opt.step_count == 1
    np.testing.assert_array_equal(opt.first_moment[0], m_before[0])


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        AdamW().step([np.ones((1, 2))], [np.ones((2, 1))])


def test_matches_torch_adamw():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(0)
    p0 = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(5)]
    tp = torch.tensor(p0.copy(), requires_grad=True)
    topt = torch.optim.AdamW([tp], lr=0.01, weight_decay=0.1, betas=(0.9, 0.999), eps=1e-8)
    opt = AdamW(lr=0.01, weight_decay=0.1)
    p = p0.copy()
    for g in grads:
        tp.grad = torch.tensor(g)
        topt.step()
        (p,) = opt.step([p], [g])
    np.testing.assert_allclose(p, tp.detach().numpy(), rtol=1e-12, atol=1e-14)
