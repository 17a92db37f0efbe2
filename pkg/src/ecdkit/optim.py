"""Gradient-descent optimizers: plain SGD and bias-corrected Adam.

``optimizer_step`` mutates parameter tensors in place and advances the state
by exactly one step; given identical (state, params, grads) it always
produces identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter
from .errors import ConfigError, ContractError
from .tensor import Tensor

SGD_DEFAULT_LR = 1e-2
ADAM_DEFAULT_LR = 1e-3
ADAM_DEFAULT_BETA1 = 0.9
ADAM_DEFAULT_BETA2 = 0.999
ADAM_DEFAULT_EPSILON = 1e-8


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    beta1: float = ADAM_DEFAULT_BETA1
    beta2: float = ADAM_DEFAULT_BETA2
    epsilon: float = ADAM_DEFAULT_EPSILON
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}; available: sgd, adam")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0) or not (0.0 <= self.beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("adam epsilon must be positive")


def make_optimizer(kind: str, learning_rate: float | None = None, **hyper) -> OptimizerState:
    if learning_rate is None:
        learning_rate = ADAM_DEFAULT_LR if kind == "adam" else SGD_DEFAULT_LR
    return OptimizerState(kind=kind, learning_rate=learning_rate, **hyper)


def optimizer_step(state: OptimizerState, params, grads: dict) -> OptimizerState:
    """Apply one update to every trainable parameter.

    ``params`` is any iterable of Parameter; ``grads`` maps parameter name to
    its gradient (Tensor or array). A trainable parameter without a gradient
    is a caller bug and raises.
    """
    param_list = [p for p in params if isinstance(p, Parameter)]
    state.step_count += 1
    t = state.step_count
    for param in param_list:
        if not param.trainable:
            continue
        if param.name not in grads:
            raise ContractError(f"no gradient supplied for trainable parameter {param.name!r}")
        g = grads[param.name]
        g = g.array if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        if g.shape != param.tensor.dims:
            raise ContractError(
                f"gradient dims {g.shape} do not match parameter {param.name!r} dims {param.tensor.dims}"
            )
        w = param.tensor.array
        if state.kind == "sgd":
            param.tensor = Tensor(w - state.learning_rate * g)
        else:
            m = state.first_moment.setdefault(param.name, np.zeros_like(w))
            v = state.second_moment.setdefault(param.name, np.zeros_like(w))
            m[:] = state.beta1 * m + (1.0 - state.beta1) * g
            v[:] = state.beta2 * v + (1.0 - state.beta2) * g * g
            m_hat = m / (1.0 - state.beta1 ** t)
            v_hat = v / (1.0 - state.beta2 ** t)
            param.tensor = Tensor(w - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
    return state
