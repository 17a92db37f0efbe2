"""Shared building blocks for encoders, combiners, and decoders."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .rng import Lcg, glorot_uniform


def make_weight(store: ad.ParameterStore, rng: Lcg, name: str,
                fan_in: int, fan_out: int, shape: tuple[int, ...] | None = None) -> ad.Parameter:
    shape = shape or (fan_in, fan_out)
    return store.create(name, glorot_uniform(rng, fan_in, fan_out, shape))


def make_bias(store: ad.ParameterStore, name: str, width: int) -> ad.Parameter:
    return store.create(name, np.zeros(width))


class FcStack:
    """Stack of fully connected layers with a shared activation.

    ``sizes`` may be empty, in which case the stack is the identity and
    ``output_width`` equals ``input_width``.
    """

    def __init__(self, store: ad.ParameterStore, rng: Lcg, prefix: str,
                 input_width: int, sizes: list[int], activation: str = "relu"):
        if activation not in ad.UNARY_KINDS:
            raise ConfigError(f"unknown activation {activation!r}; available: {', '.join(ad.UNARY_KINDS)}")
        sizes = list(sizes or [])
        for size in sizes:
            if not isinstance(size, int) or size <= 0:
                raise ConfigError(f"fc layer sizes must be positive integers, got {sizes}")
        self.activation = activation
        self.layers = []
        width = input_width
        for i, size in enumerate(sizes):
            weight = make_weight(store, rng, f"{prefix}.fc{i}.weight", width, size)
            bias = make_bias(store, f"{prefix}.fc{i}.bias", size)
            self.layers.append((weight, bias))
            width = size
        self.input_width = input_width
        self.output_width = width

    def forward(self, tape: ad.Tape, x: ad.TapeNode) -> ad.TapeNode:
        for weight, bias in self.layers:
            x = ad.apply_unary(self.activation,
                               ad.add(ad.matmul(x, tape.leaf(weight)), tape.leaf(bias)))
        return x
