"""SGD with momentum and Adam, updating parameter arrays in place."""
import numpy as np

from .errors import NonFiniteValue, ShapeMismatch


def _check(params, grads):
    for name, g in grads.items():
        if name not in params:
            raise ShapeMismatch(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteValue(f"{name}: gradient is not finite")


def clip_grad_norm(grads, max_norm):
    """Scale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: (g * scale).astype(g.dtype) for k, g in grads.items()}
    return grads, norm


class SGD:
    def __init__(self, lr=0.01, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}

    def step(self, params, grads):
        _check(params, grads)
        for name, g in grads.items():
            p = params[name]
            v = self.velocity.get(name)
            v = g.astype(p.dtype) if v is None else self.momentum * v + g
            self.velocity[name] = v
            p -= (self.lr * v).astype(p.dtype)

    def hyperparameters(self):
        return {"optimizer": "sgd", "lr": self.lr, "momentum": self.momentum}


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if eps <= 0:
            raise ValueError("Adam eps must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        _check(params, grads)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for name, g in grads.items():
            p = params[name]
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * (g * g)
            self.m[name], self.v[name] = m, v
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def hyperparameters(self):
        return {"optimizer": "adam", "lr": self.lr, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps}
