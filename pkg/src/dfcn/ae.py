"""Fully connected autoencoder.

The encoder compresses attributes into the latent space; the decoder is
a mirrored stack that, after the independent pretraining phase, is fed
the consensus embedding rather than the encoder's own output. Hidden
layers use a leaky rectifier (slope 0.2 by default), both output layers
are linear.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

ACTIVATIONS = ("leaky_relu", "tanh", "linear")


def _apply_act(tape, node, act):
    if act == "leaky_relu":
        return tape.leaky_relu(node, 0.2)
    if act == "tanh":
        return tape.tanh(node)
    if act == "linear":
        return node
    raise ValueError(f"unknown activation {act!r}, expected one of {ACTIVATIONS}")


def xavier_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class AeParams:
    """Encoder and decoder weights/biases; biases are 1xC rows."""

    enc_w: list
    enc_b: list
    dec_w: list
    dec_b: list

    @classmethod
    def init(cls, input_dim, hidden_dims, latent_dim, rng):
        enc_dims = [input_dim, *hidden_dims, latent_dim]
        dec_dims = list(reversed(enc_dims))
        enc_w = [xavier_uniform(rng, a, b) for a, b in zip(enc_dims, enc_dims[1:])]
        enc_b = [np.zeros((1, b)) for b in enc_dims[1:]]
        dec_w = [xavier_uniform(rng, a, b) for a, b in zip(dec_dims, dec_dims[1:])]
        dec_b = [np.zeros((1, b)) for b in dec_dims[1:]]
        return cls(enc_w, enc_b, dec_w, dec_b)

    def named_arrays(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.enc_w, self.enc_b)):
            out[f"ae.enc.{i}.w"] = w
            out[f"ae.enc.{i}.b"] = b
        for i, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            out[f"ae.dec.{i}.w"] = w
            out[f"ae.dec.{i}.b"] = b
        return out

    def replace(self, arrays):
        return AeParams(
            enc_w=[arrays[f"ae.enc.{i}.w"] for i in range(len(self.enc_w))],
            enc_b=[arrays[f"ae.enc.{i}.b"] for i in range(len(self.enc_b))],
            dec_w=[arrays[f"ae.dec.{i}.w"] for i in range(len(self.dec_w))],
            dec_b=[arrays[f"ae.dec.{i}.b"] for i in range(len(self.dec_b))],
        )


def _stack(tape, h, weights, biases, hidden_act):
    last = len(weights) - 1
    for i, (w_leaf, b_leaf) in enumerate(zip(weights, biases)):
        h = tape.add_bias(tape.matmul(h, w_leaf), b_leaf)
        if i != last:
            h = _apply_act(tape, h, hidden_act)
    return h


def encode(tape, x, enc_w, enc_b, hidden_act="leaky_relu"):
    """Forward through the encoder stack; ``x`` and weights are tape nodes."""
    if x.value.shape[1] != enc_w[0].value.shape[0]:
        raise ShapeError(
            f"encoder expects {enc_w[0].value.shape[0]} input columns, "
            f"got {x.value.shape[1]}"
        )
    return _stack(tape, x, enc_w, enc_b, hidden_act)


def decode(tape, z, dec_w, dec_b, hidden_act="leaky_relu"):
    """Reconstruct attributes from a latent embedding node."""
    if z.value.shape[1] != dec_w[0].value.shape[0]:
        raise ShapeError(
            f"decoder expects {dec_w[0].value.shape[0]} input columns, "
            f"got {z.value.shape[1]}"
        )
    return _stack(tape, z, dec_w, dec_b, hidden_act)


def reconstruction_loss(tape, x, x_hat):
    """(1/2N) * squared Frobenius distance between input and reconstruction."""
    if x.value.shape != x_hat.value.shape:
        raise ShapeError(
            f"reconstruction_loss: shapes disagree, {x.value.shape} vs "
            f"{x_hat.value.shape}"
        )
    n = x.value.shape[0]
    return tape.scale(tape.frobenius_sq(tape.sub(x, x_hat)), 0.5 / n)
