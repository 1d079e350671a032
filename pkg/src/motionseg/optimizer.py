"""Adam with bias-corrected moment estimates over dict-of-array parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0 < b < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {b}")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
            0,
        )


def adam_step(params, grads, state: AdamState, hyper: AdamHyper = AdamHyper()):
    """One Adam update. Returns new ``(params, state)``; inputs are not modified."""
    if params.keys() != grads.keys() or params.keys() != state.m.keys():
        raise ValueError("params, grads and optimizer state must share the same keys")
    t = state.t + 1
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    new_params, m, v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ValueError(f"shape mismatch for {k!r}: param {p.shape}, grad {g.shape}")
        m[k] = hyper.beta1 * state.m[k] + (1.0 - hyper.beta1) * g
        v[k] = hyper.beta2 * state.v[k] + (1.0 - hyper.beta2) * (g * g)
        m_hat = m[k] / bc1
        v_hat = v[k] / bc2
        new_params[k] = p - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return new_params, AdamState(m, v, t)
