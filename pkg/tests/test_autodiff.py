"""Finite-difference checks for each autodiff primitive in isolation."""

import numpy as np
import pytest

from mixsum import autodiff as ad
from mixsum.autodiff import Tensor


def fd_grad(f, x, h=1e-6):
    """Central finite differences of a scalar-valued f at x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def check_op(build, shapes, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    args = [rng.normal(size=s) for s in shapes]
    for which in range(len(args)):
        t_args = [Tensor(a.copy(), requires_grad=(i == which))
                  for i, a in enumerate(args)]
        out = build(*t_args)
        out.backward()
        analytic = t_args[which].grad

        def scalar(x, which=which):
            vals = [a.copy() for a in args]
            vals[which] = x
            return build(*[Tensor(v) for v in vals]).data.item()

        numeric = fd_grad(scalar, args[which].copy())
        np.testing.assert_allclose(analytic, numeric, rtol=tol, atol=tol)


def total(t):
    # reduce to a scalar through ops with known-simple gradients
    flat = ad.reshape(t, (1, -1))
    w = np.linspace(0.5, 1.5, flat.shape[1])[:, None]
    return ad.reshape(ad.matmul(flat, w), ())


def test_add_broadcast():
    check_op(lambda a, b: total(ad.add(a, b)), [(3, 4), (4,)])
    check_op(lambda a, b: total(ad.add(a, b)), [(2, 3, 4), (1, 4)])


def test_mul_broadcast():
    check_op(lambda a, b: total(ad.mul(a, b)), [(3, 4), (3, 4)])
    check_op(lambda a, b: total(ad.mul(a, b)), [(2, 3), (3,)])


def test_matmul_batched():
    check_op(lambda a, b: total(ad.matmul(a, b)), [(3, 4), (4, 2)])
    check_op(lambda a, b: total(ad.matmul(a, b)), [(2, 3, 4), (4, 2)])
    check_op(lambda a, b: total(ad.matmul(a, b)), [(2, 2, 3, 4), (2, 2, 4, 2)])


def test_linear_fused():
    check_op(lambda x, w, b: total(ad.linear(x, w, b)), [(2, 3, 4), (4, 5), (5,)])
    check_op(lambda x, w, b: total(ad.linear(x, w, b)), [(3, 4), (4, 2), (2,)])


def test_tied_logits_fused():
    check_op(lambda h, e: total(ad.tied_logits(h, e)), [(2, 3, 4), (6, 4)])


def test_relu():
    check_op(lambda a: total(ad.relu(a)), [(5, 3)], seed=3)


def test_softmax_rows_sum_to_one_and_grad():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 7)) * 3
    y = ad.softmax(Tensor(x), axis=-1)
    np.testing.assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-12)
    check_op(lambda a: total(ad.softmax(a, axis=-1)), [(3, 5)])


def test_layer_norm_grads():
    check_op(lambda x, g, b: total(ad.layer_norm(x, g, b)), [(4, 6), (6,), (6,)])


def test_embedding_grad():
    ids = np.array([[0, 2, 1], [2, 2, 0]])

    def build(w):
        return total(ad.embedding(w, ids))

    check_op(build, [(3, 4)])


def test_swapaxes_reshape_scale():
    check_op(lambda a: total(ad.scale(ad.reshape(ad.swapaxes(a, 0, 1), (2, 6)), 1.7)),
             [(3, 2, 2)])


def test_cross_entropy_value_and_grad():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(2, 3, 5))
    targets = rng.integers(0, 5, size=(2, 3))
    mask = np.array([[True, True, False], [True, False, False]])

    loss, count = ad.cross_entropy(Tensor(logits.copy()), targets, mask)
    assert count == 3
    # independent value: explicit log-softmax per position
    ref = 0.0
    for b in range(2):
        for t in range(3):
            if mask[b, t]:
                row = logits[b, t]
                ref += np.log(np.exp(row).sum()) - row[targets[b, t]]
    np.testing.assert_allclose(loss.data, ref / 3, rtol=1e-12)

    lt = Tensor(logits.copy(), requires_grad=True)
    loss2, _ = ad.cross_entropy(lt, targets, mask)
    loss2.backward()

    def scalar(x):
        l, _ = ad.cross_entropy(Tensor(x), targets, mask)
        return l.data.item()

    numeric = fd_grad(scalar, logits.copy())
    np.testing.assert_allclose(lt.grad, numeric, rtol=1e-5, atol=1e-8)


def test_cross_entropy_empty_mask_errors():
    with pytest.raises(ValueError):
        ad.cross_entropy(Tensor(np.zeros((1, 2, 3))), np.zeros((1, 2), int),
                         np.zeros((1, 2), bool))


def test_grad_accumulates_across_shared_use():
    x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    y = ad.add(x, x)
    total(y).backward()
    w = np.linspace(0.5, 1.5, 2)
    np.testing.assert_allclose(x.grad, 2 * w[None, :])


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        ad.add(x, x).backward()
