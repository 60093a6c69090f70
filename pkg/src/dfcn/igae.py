"""Symmetric graph autoencoder.

Every layer is propagate-then-transform: act(A_norm @ H @ W). The
decoder mirrors the encoder and, once joint training starts, consumes
the consensus embedding. The adjacency is rebuilt as a logistic Gram
matrix, and the hybrid loss balances attribute reconstruction against
adjacency reconstruction with the weight ``gamma``.
"""

from dataclasses import dataclass

from .ae import _apply_act, xavier_uniform
from .errors import ShapeError


@dataclass
class IgaeParams:
    """GCN weight chains; graph-convolutional layers carry no bias."""

    enc_w: list
    dec_w: list

    @classmethod
    def init(cls, input_dim, hidden_dims, latent_dim, rng):
        enc_dims = [input_dim, *hidden_dims, latent_dim]
        dec_dims = list(reversed(enc_dims))
        return cls(
            enc_w=[xavier_uniform(rng, a, b) for a, b in zip(enc_dims, enc_dims[1:])],
            dec_w=[xavier_uniform(rng, a, b) for a, b in zip(dec_dims, dec_dims[1:])],
        )

    def named_arrays(self):
        out = {}
        for i, w in enumerate(self.enc_w):
            out[f"igae.enc.{i}.w"] = w
        for i, w in enumerate(self.dec_w):
            out[f"igae.dec.{i}.w"] = w
        return out

    def replace(self, arrays):
        return IgaeParams(
            enc_w=[arrays[f"igae.enc.{i}.w"] for i in range(len(self.enc_w))],
            dec_w=[arrays[f"igae.dec.{i}.w"] for i in range(len(self.dec_w))],
        )


def gcn_layer(tape, adj_norm, h, w, act="tanh"):
    """One graph-convolution layer: act(spmm(A_norm, H) @ W)."""
    if h.value.shape[1] != w.value.shape[0]:
        raise ShapeError(
            f"gcn_layer: hidden has {h.value.shape[1]} columns but weight "
            f"expects {w.value.shape[0]}"
        )
    return _apply_act(tape, tape.matmul(tape.spmm(adj_norm, h), w), act)


def encode(tape, adj_norm, x, enc_w, act="tanh"):
    h = x
    for w in enc_w:
        h = gcn_layer(tape, adj_norm, h, w, act)
    return h


def decode(tape, adj_norm, z, dec_w, act="tanh"):
    """Decoder stack; returns the reconstruction and its last hidden node."""
    h = z
    last_hidden = z
    for i, w in enumerate(dec_w):
        h = gcn_layer(tape, adj_norm, h, w, act)
        if i == len(dec_w) - 2:
            last_hidden = h
    return h, last_hidden


def reconstruct_adjacency(tape, z, extra=None):
    """Logistic inner-product adjacency, symmetric with entries in (0,1).

    ``extra`` switches on the multi-level variant: the mean of the
    logistic Gram matrices of ``z`` and the extra representation.
    """
    a_hat = tape.sigmoid(tape.matmul(z, tape.transpose(z)))
    if extra is None:
        return a_hat
    a_extra = tape.sigmoid(tape.matmul(extra, tape.transpose(extra)))
    return tape.scale(tape.add(a_hat, a_extra), 0.5)


def hybrid_loss(tape, ax_target, adj_dense, z_hat, a_hat, gamma):
    """The (L_w, L_a, combined) loss triple.

    ``ax_target`` is the constant node holding A_norm @ X and
    ``adj_dense`` the constant node with the densified A_norm. L_w
    penalizes the propagated-attribute reconstruction, L_a the adjacency
    reconstruction; the combined loss is L_w + gamma * L_a.
    """
    if gamma < 0.0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    n = ax_target.value.shape[0]
    l_w = tape.scale(tape.frobenius_sq(tape.sub(ax_target, z_hat)), 0.5 / n)
    l_a = tape.scale(tape.frobenius_sq(tape.sub(adj_dense, a_hat)), 0.5 / n)
    l_total = tape.add(l_w, tape.scale(l_a, gamma))
    return l_w, l_a, l_total
