"""Central finite-difference gradient oracle, independent of the tape."""

import numpy as np

from glrec.engine import Tape, backward


def numeric_grads(f, arrays, h=1e-5):
    """Central differences of scalar f() w.r.t. every entry of the arrays.

    f must recompute its forward pass from the arrays' current contents on
    every call; entries are perturbed in place and restored.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, atol=1e-7):
    """Worst relative error over all coordinates; coordinates where both
    sides are below atol count as exact (relative error is meaningless
    against finite-difference noise there)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n)).clip(min=1e-300)
        rel = np.where(diff <= atol, 0.0, diff / scale)
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst


def gradcheck(build, params, h=1e-5, rtol=1e-4, atol=1e-7):
    """Assert analytic gradients of build() match central differences.

    build() returns a scalar Tensor, recomputed from the params' current
    data; params is a list of requires_grad Tensors.
    """
    with Tape() as tape:
        loss = build()
    for p in params:
        p.grad = None
    backward(tape, loss)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = numeric_grads(lambda: float(build().data), [p.data for p in params], h=h)
    err = max_rel_error(analytic, numeric, atol=atol)
    assert err < rtol, f"gradient mismatch: max relative error {err:.3e} >= {rtol}"
    return err
