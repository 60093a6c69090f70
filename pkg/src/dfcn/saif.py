"""Structure and attribute information fusion.

The two latent embeddings are blended by a learnable scalar, passed
through one round of message passing, recombined through a row-softmax
self-correlation matrix, and finally mixed back in via a learnable skip
weight. Both decoders and the clustering head consume the resulting
consensus embedding.
"""

from dataclasses import dataclass

import numpy as np

from . import ae as ae_mod
from . import igae as igae_mod
from .errors import ShapeError


@dataclass
class FusionParams:
    """Learnable blend weight (starts at 0.5) and skip weight (starts at 0)."""

    alpha: np.ndarray
    beta: np.ndarray

    @classmethod
    def init(cls):
        return cls(alpha=np.array([[0.5]]), beta=np.array([[0.0]]))

    def named_arrays(self):
        return {"fusion.alpha": self.alpha, "fusion.beta": self.beta}

    def replace(self, arrays):
        return FusionParams(alpha=arrays["fusion.alpha"], beta=arrays["fusion.beta"])


@dataclass
class ForwardTrace:
    """Tape nodes for every intermediate of one forward pass.

    The fusion-specific entries (z_i, z_l, s, z_g) are None when the
    no-fusion ablation is active, in which case z_tilde is z_ae.
    """

    z_ae: object
    z_igae: object
    z_i: object
    z_l: object
    s: object
    z_g: object
    z_tilde: object
    x_hat: object
    z_hat: object
    a_hat: object
    dec_hidden: object


def fuse_initial(tape, z_ae, z_igae, alpha):
    """Learnable linear blend alpha*Z_AE + (1-alpha)*Z_IGAE."""
    if z_ae.value.shape != z_igae.value.shape:
        raise ShapeError(
            f"fuse_initial: embeddings disagree, {z_ae.value.shape} vs "
            f"{z_igae.value.shape}"
        )
    return tape.lerp(alpha, z_ae, z_igae)


def local_enhance(tape, adj_norm, z_i):
    """One message-passing step over the normalized adjacency."""
    return tape.spmm(adj_norm, z_i)


def self_correlate(tape, z_l):
    """Row-stochastic self-correlation: softmax over the Gram matrix rows."""
    return tape.row_softmax(tape.matmul(z_l, tape.transpose(z_l)))


def global_recombine(tape, s, z_l, beta):
    """Global recombination Z_G = S Z_L plus the skip Z~ = beta*Z_G + Z_L."""
    z_g = tape.matmul(s, z_l)
    z_tilde = tape.add(tape.scale_var(beta, z_g), z_l)
    return z_g, z_tilde


def forward(
    tape,
    x,
    adj_norm,
    ae_leaves,
    igae_leaves,
    alpha,
    beta,
    ae_act="leaky_relu",
    igae_act="tanh",
    fusion=True,
    adj_recon="consensus",
):
    """Full forward pass producing a :class:`ForwardTrace`.

    ``ae_leaves`` and ``igae_leaves`` are the (enc_w, enc_b, dec_w,
    dec_b) and (enc_w, dec_w) node tuples; ``alpha``/``beta`` are the
    fusion scalar nodes.

    With ``fusion=False`` (the naive-baseline ablation) each decoder
    reconstructs from its own latent and the clustering embedding falls
    back to Z_AE; downstream consumers of z_tilde run unchanged.
    """
    enc_w, enc_b, dec_w, dec_b = ae_leaves
    g_enc_w, g_dec_w = igae_leaves

    z_ae = ae_mod.encode(tape, x, enc_w, enc_b, ae_act)
    z_igae = igae_mod.encode(tape, adj_norm, x, g_enc_w, igae_act)

    if fusion:
        z_i = fuse_initial(tape, z_ae, z_igae, alpha)
        z_l = local_enhance(tape, adj_norm, z_i)
        s = self_correlate(tape, z_l)
        z_g, z_tilde = global_recombine(tape, s, z_l, beta)
        ae_input, igae_input, adj_input = z_tilde, z_tilde, z_tilde
    else:
        z_i = z_l = s = z_g = None
        z_tilde = z_ae
        ae_input, igae_input, adj_input = z_ae, z_igae, z_igae

    x_hat = ae_mod.decode(tape, ae_input, dec_w, dec_b, ae_act)
    z_hat, dec_hidden = igae_mod.decode(tape, adj_norm, igae_input, g_dec_w, igae_act)
    extra = dec_hidden if adj_recon == "multilevel" else None
    a_hat = igae_mod.reconstruct_adjacency(tape, adj_input, extra)

    return ForwardTrace(
        z_ae=z_ae,
        z_igae=z_igae,
        z_i=z_i,
        z_l=z_l,
        s=s,
        z_g=z_g,
        z_tilde=z_tilde,
        x_hat=x_hat,
        z_hat=z_hat,
        a_hat=a_hat,
        dec_hidden=dec_hidden,
    )
