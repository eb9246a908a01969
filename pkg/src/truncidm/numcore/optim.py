import numpy as np

from .tensor import Tensor


def fan_in_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Adam:
    """Adam over a dict of named leaf tensors.

    Tensors are immutable, so ``step`` returns a fresh parameter dict.
    """

    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        out = {}
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                out[name] = p
                continue
            m = self.m.get(name, 0.0) * self.b1 + (1 - self.b1) * g
            v = self.v.get(name, 0.0) * self.b2 + (1 - self.b2) * g * g
            self.m[name] = m
            self.v[name] = v
            if self.lr == 0:
                out[name] = p
                continue
            upd = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            out[name] = Tensor(p.data - upd, requires_grad=True, name=name)
        return out
