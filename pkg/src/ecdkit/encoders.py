"""Per-type encoders: preprocessed feature batch -> hidden representation.

Every encoder reduces its input to a rank-2 [batch x width] hidden tensor.
Sequence encoders additionally expose their unreduced per-position states
[batch x steps x width] so sequence-tagging decoders can consume them.

Encoders accept an open keyword map; each implementation reads the keywords
it understands and falls back to its declared defaults, so alternative
implementations stay interchangeable behind one interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .layers import FcStack, make_bias, make_weight
from .rng import Lcg


@dataclass
class EncoderOutput:
    hidden: ad.TapeNode                 # [b x width]
    sequence: ad.TapeNode | None = None  # [b x s x seq_width] when available


class PassthroughEncoder:
    """Numerical and binary inputs: identity, or an optional fc stack."""

    DEFAULTS = {"fc_sizes": [], "activation": "relu"}
    ACCEPTED = frozenset(DEFAULTS)

    def __init__(self, feature: str, meta, store, rng: Lcg, **kwargs):
        self.stack = FcStack(store, rng, f"encoders.{feature}", 1,
                             kwargs.get("fc_sizes", self.DEFAULTS["fc_sizes"]),
                             kwargs.get("activation", self.DEFAULTS["activation"]))
        self.output_width = self.stack.output_width

    def forward(self, tape: ad.Tape, batch: np.ndarray) -> EncoderOutput:
        return EncoderOutput(self.stack.forward(tape, tape.constant(batch)))


class DenseEncoder:
    """Vector inputs through a fully connected stack."""

    DEFAULTS = {"fc_sizes": [32], "activation": "relu"}
    ACCEPTED = frozenset(DEFAULTS)

    def __init__(self, feature: str, meta, store, rng: Lcg, **kwargs):
        self.stack = FcStack(store, rng, f"encoders.{feature}", meta.length,
                             kwargs.get("fc_sizes", self.DEFAULTS["fc_sizes"]),
                             kwargs.get("activation", self.DEFAULTS["activation"]))
        self.output_width = self.stack.output_width

    def forward(self, tape: ad.Tape, batch: np.ndarray) -> EncoderOutput:
        return EncoderOutput(self.stack.forward(tape, tape.constant(batch)))


class CategoryEmbedEncoder:
    """Category ids through an embedding table."""

    DEFAULTS = {"embedding_size": 64}
    ACCEPTED = frozenset(DEFAULTS)

    def __init__(self, feature: str, meta, store, rng: Lcg, **kwargs):
        size = kwargs.get("embedding_size", self.DEFAULTS["embedding_size"])
        self.table = make_weight(store, rng, f"encoders.{feature}.embedding",
                                 meta.vocab_size, size, (meta.vocab_size, size))
        self.output_width = size

    def forward(self, tape: ad.Tape, batch: np.ndarray) -> EncoderOutput:
        ids = batch[:, 0].astype(np.int64)
        return EncoderOutput(ad.embedding_lookup(tape.leaf(self.table), ids))


class SetEmbedSumEncoder:
    """Multi-hot set vector times an embedding table (sum of member rows)."""

    DEFAULTS = {"embedding_size": 32}
    ACCEPTED = frozenset(DEFAULTS)

    def __init__(self, feature: str, meta, store, rng: Lcg, **kwargs):
        size = kwargs.get("embedding_size", self.DEFAULTS["embedding_size"])
        self.table = make_weight(store, rng, f"encoders.{feature}.embedding",
                                 meta.vocab_size, size, (meta.vocab_size, size))
        self.output_width = size

    def forward(self, tape: ad.Tape, batch: np.ndarray) -> EncoderOutput:
        return EncoderOutput(ad.matmul(tape.constant(batch), tape.leaf(self.table)))


def _embed_sequence(tape: ad.Tape, table: ad.Parameter, batch: np.ndarray) -> ad.TapeNode:
    b, s = batch.shape
    flat = batch.reshape(-1).astype(np.int64)
    rows = ad.embedding_lookup(tape.leaf(table), flat)
    return ad.reshape(rows, (b, s, table.tensor.dims[1]))


class SequenceEmbedEncoder:
    """Token embeddings mean-pooled over positions."""

    DEFAULTS = {"embedding_size": 32}
    ACCEPTED = frozenset(DEFAULTS)

    def __init__(self, feature: str, meta, store, rng: Lcg, **kwargs):
        size = kwargs.get("embedding_size", self.DEFAULTS["embedding_size"])
        self.table = make_weight(store, rng, f"encoders.{feature}.embedding",
                                 meta.vocab_size, size, (meta.vocab_size, size))
        self.output_width = size
        self.sequence_width = size

    def forward(self, tape: ad.Tape, batch: np.ndarray) -> EncoderOutput:
        embedded = _embed_sequence(tape, self.table, batch)
        return EncoderOutput(ad.reduce("mean", embedded, axis=1), sequence=embedded)


class SequenceRnnEncoder:
    """Vanilla tanh recurrence over token embeddings; hidden = final state."""

    DEFAULTS = {"embedding_size": 32, "state_size": 32}
    ACCEPTED = frozenset(DEFAULTS)

    def __init__(self, feature: str, meta, store, rng: Lcg, **kwargs):
        emb = kwargs.get("embedding_size", self.DEFAULTS["embedding_size"])
        state = kwargs.get("state_size", self.DEFAULTS["state_size"])
        prefix = f"encoders.{feature}"
        self.table = make_weight(store, rng, f"{prefix}.embedding",
                                 meta.vocab_size, emb, (meta.vocab_size, emb))
        self.w_in = make_weight(store, rng, f"{prefix}.rnn.w_in", emb, state)
        self.w_rec = make_weight(store, rng, f"{prefix}.rnn.w_rec", state, state)
        self.bias = make_bias(store, f"{prefix}.rnn.bias", state)
        self.state_size = state
        self.output_width = state
        self.sequence_width = state

    def forward(self, tape: ad.Tape, batch: np.ndarray) -> EncoderOutput:
        b, s = batch.shape
        embedded = _embed_sequence(tape, self.table, batch)
        w_in, w_rec = tape.leaf(self.w_in), tape.leaf(self.w_rec)
        bias = tape.leaf(self.bias)
        state = tape.constant(np.zeros((b, self.state_size)))
        states = []
        for t in range(s):
            x_t = ad.select(embedded, axis=1, index=t)
            state = ad.rnn_step(x_t, state, w_in, w_rec, bias)
            states.append(ad.reshape(state, (b, 1, self.state_size)))
        return EncoderOutput(state, sequence=ad.concat(states, axis=1))


class SequenceCnnEncoder:
    """Parallel same-padded convolutions max-pooled over time, concatenated."""

    DEFAULTS = {"embedding_size": 32, "num_filters": 32,
                "filter_widths": [3, 5, 7], "activation": "relu"}
    ACCEPTED = frozenset(DEFAULTS)

    def __init__(self, feature: str, meta, store, rng: Lcg, **kwargs):
        emb = kwargs.get("embedding_size", self.DEFAULTS["embedding_size"])
        filters = kwargs.get("num_filters", self.DEFAULTS["num_filters"])
        widths = list(kwargs.get("filter_widths", self.DEFAULTS["filter_widths"]))
        self.activation = kwargs.get("activation", self.DEFAULTS["activation"])
        if not widths:
            raise ConfigError("cnn encoder needs at least one filter width")
        for w in widths:
            if not isinstance(w, int) or w <= 0 or w % 2 == 0:
                raise ConfigError(f"cnn filter widths must be odd positive integers, got {widths}")
        prefix = f"encoders.{feature}"
        self.table = make_weight(store, rng, f"{prefix}.embedding",
                                 meta.vocab_size, emb, (meta.vocab_size, emb))
        self.branches = []
        for w in widths:
            filt = make_weight(store, rng, f"{prefix}.conv{w}.filters",
                               w * emb, filters, (w, emb, filters))
            bias = make_bias(store, f"{prefix}.conv{w}.bias", filters)
            self.branches.append((filt, bias))
        self.output_width = filters * len(widths)
        self.sequence_width = self.output_width

    def forward(self, tape: ad.Tape, batch: np.ndarray) -> EncoderOutput:
        embedded = _embed_sequence(tape, self.table, batch)
        maps = []
        pooled = []
        for filt, bias in self.branches:
            conv = ad.apply_unary(self.activation,
                                  ad.conv1d(embedded, tape.leaf(filt), tape.leaf(bias)))
            maps.append(conv)
            pooled.append(ad.reduce("max", conv, axis=1))
        return EncoderOutput(ad.concat(pooled, axis=1), sequence=ad.concat(maps, axis=2))


#: feature type -> {encoder name -> class}
ENCODERS: dict[str, dict[str, type]] = {
    "numerical": {"passthrough": PassthroughEncoder},
    "binary": {"passthrough": PassthroughEncoder},
    "category": {"embed": CategoryEmbedEncoder},
    "set": {"embed_sum": SetEmbedSumEncoder},
    "vector": {"dense": DenseEncoder},
    "sequence": {"embed": SequenceEmbedEncoder, "rnn": SequenceRnnEncoder,
                 "cnn": SequenceCnnEncoder},
    "text": {"embed": SequenceEmbedEncoder, "rnn": SequenceRnnEncoder,
             "cnn": SequenceCnnEncoder},
}

#: feature type -> default encoder name
DEFAULT_ENCODERS = {
    "numerical": "passthrough",
    "binary": "passthrough",
    "category": "embed",
    "set": "embed_sum",
    "vector": "dense",
    "sequence": "embed",
    "text": "embed",
}
