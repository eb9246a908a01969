"""Central finite-difference gradient oracle.

Deliberately independent of the tape: it only evaluates the forward
function on perturbed copies of plain numpy arrays.
"""
import numpy as np

from .tensor import GradTape, Tensor, backward


def numeric_grad(fn, arrays, eps=1e-5):
    """Central differences of scalar ``fn(*arrays)`` w.r.t. every array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = float(fn(*arrays))
            flat[i] = old - eps
            fm = float(fn(*arrays))
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def rel_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def analytic_grad(fn, arrays):
    """Gradients of scalar ``fn(*tensors)`` via the tape."""
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with GradTape() as tape:
        loss = fn(*leaves)
    g = backward(tape, loss, wrt=leaves)
    return [g[t] for t in leaves]


def gradcheck(fn, arrays, eps=1e-5):
    """Max relative error between tape gradients and central differences.

    ``fn`` must accept tensors and return a scalar tensor; it is re-run on
    constant tensors for the numeric side.
    """
    ana = analytic_grad(fn, arrays)
    num = numeric_grad(lambda *xs: fn(*[Tensor(x) for x in xs]).item(), arrays, eps)
    return max(rel_error(a, n) for a, n in zip(ana, num))
