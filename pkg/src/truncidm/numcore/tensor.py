"""Immutable float64 tensors with tape-based reverse-mode differentiation."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError, NumericError, ShapeError

_TAPES: list["GradTape"] = []


class Tensor:
    """A read-only float64 array that may participate in a gradient tape.

    Tensors never change after construction.  ``requires_grad`` marks leaves
    the caller wants gradients for; results of ops inherit the flag only
    while a :class:`GradTape` is active.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")
    # make ndarray <op> Tensor dispatch to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        if any(n <= 0 for n in arr.shape):
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericError("non-finite value in tensor construction")
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    @classmethod
    def _wrap(cls, arr, requires_grad):
        t = cls.__new__(cls)
        arr.setflags(write=False)
        t.data = arr
        t.requires_grad = requires_grad
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor._wrap(self.data, False)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


class _Record:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


class GradTape:
    """Ordered record of differentiable ops.

    Use as a context manager; every op executed inside the block whose inputs
    require grad is appended.  A tape belongs to one thread.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.visit_order: list[int] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out, parents, backward):
        self.records.append(_Record(out, parents, backward))


def current_tape():
    return _TAPES[-1] if _TAPES else None


def no_grad_active():
    return not _TAPES


def make_result(data, parents, backward):
    """Wrap an op result, checking finiteness and recording on the active tape."""
    if not np.isfinite(data).all():
        raise NumericError("non-finite value produced in forward pass")
    tape = _TAPES[-1] if _TAPES else None
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor._wrap(np.ascontiguousarray(data) if not data.flags.c_contiguous else data, needs)
    if needs:
        tape.record(out, parents, backward)
    return out


def backward(tape: GradTape, loss: Tensor, wrt=None):
    """Reverse sweep over ``tape`` seeded at scalar ``loss``.

    Returns a dict mapping each requires_grad leaf to its gradient array.
    Leaves listed in ``wrt`` that the loss does not depend on get exact zeros.
    """
    if loss.data.size != 1 or loss.data.ndim != 0:
        raise ContractError(f"loss must be a scalar tensor, got shape {loss.shape}")
    grads = {id(loss): np.ones((), dtype=np.float64)}
    produced = set()
    leaves = {}
    tape.visit_order = []
    for i in range(len(tape.records) - 1, -1, -1):
        rec = tape.records[i]
        produced.add(id(rec.out))
        g = grads.pop(id(rec.out), None)
        tape.visit_order.append(i)
        if g is None:
            continue
        pgrads = rec.backward(g)
        for p, pg in zip(rec.parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
            leaves.setdefault(key, p)
    out = {}
    for key, t in leaves.items():
        if key in produced:
            continue
        out[t] = grads.get(key, np.zeros(t.shape))
    if id(loss) in grads and loss.requires_grad and id(loss) not in produced:
        out[loss] = grads[id(loss)]
    if wrt is not None:
        return {t: out.get(t, np.zeros(t.shape)) for t in wrt}
    return out
