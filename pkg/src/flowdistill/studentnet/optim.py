"""Adam optimizer with bias correction, double precision, deterministic."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import StudentNet


@dataclass(eq=False)
class OptimizerState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_optimizer(net: StudentNet, **kwargs) -> OptimizerState:
    state = OptimizerState(**kwargs)
    for name, p in net.params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def optimizer_step(net: StudentNet, grads: dict, state: OptimizerState):
    """One bias-corrected Adam update; mutates net and state in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in net.params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param {name} shape {p.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / (1.0 - b1 ** t)
        v_hat = state.v[name] / (1.0 - b2 ** t)
        net.params[name] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return net, state
