"""Three-phase training.

Phase one pretrains the autoencoder and the graph autoencoder
independently (each decoder fed its own latent), phase two couples them
through the fusion module and keeps optimizing the reconstruction
losses, and phase three adds the self-supervised KL term around
K-means-initialized centers. Training is full batch: graph propagation
needs the whole normalized adjacency. Everything is seeded and
reproducible bitwise.
"""

import logging
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import ae as ae_mod
from . import cluster_eval
from . import igae as igae_mod
from . import saif, selfsup
from .errors import ParameterError, TrainingDivergedError
from .numcore import Tape

log = logging.getLogger(__name__)

_SUPERVISION = ("triplet", "single")
_IGAE_LOSS_MODES = ("lw", "la", "both")
_ADJ_RECON = ("consensus", "multilevel")


@dataclass
class TrainConfig:
    """Hyper-parameters and schedule; JSON keys mirror the field names.

    The one exception is the KL weight: Python reserves ``lambda``, so
    the field is ``lambda_`` and (de)serialization maps it to the JSON
    key ``"lambda"``.
    """

    gamma: float = 0.1
    lambda_: float = 10.0
    T: int = 1
    iters_pre: int = 30
    iters_joint: int = 100
    iters_finetune: int = 200
    iters_finetune_cap: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patience: int = 50
    min_improvement: float = 1e-6
    fusion: bool = True
    supervision: str = "triplet"
    igae_loss_mode: str = "both"
    adj_recon: str = "consensus"
    ae_dims: tuple = (128, 256, 512)
    igae_dims: tuple = (128, 256)
    latent_dim: int = 20
    ae_act: str = "leaky_relu"
    igae_act: str = "tanh"
    dof: float = 1.0
    kmeans_restarts: int = 20

    def __post_init__(self):
        for name in ("T", "iters_pre", "iters_joint", "iters_finetune",
                     "iters_finetune_cap", "patience", "kmeans_restarts"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.gamma < 0.0 or self.lambda_ < 0.0:
            raise ParameterError("gamma and lambda must be nonnegative")
        if self.supervision not in _SUPERVISION:
            raise ParameterError(f"supervision must be one of {_SUPERVISION}")
        if self.igae_loss_mode not in _IGAE_LOSS_MODES:
            raise ParameterError(f"igae_loss_mode must be one of {_IGAE_LOSS_MODES}")
        if self.adj_recon not in _ADJ_RECON:
            raise ParameterError(f"adj_recon must be one of {_ADJ_RECON}")
        self.ae_dims = tuple(int(d) for d in self.ae_dims)
        self.igae_dims = tuple(int(d) for d in self.igae_dims)

    def to_dict(self):
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lambda_" else f.name
            value = getattr(self, f.name)
            out[key] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, raw):
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = "lambda_" if key == "lambda" else key
            if name not in known:
                raise ParameterError(f"unknown config key {key!r}")
            kwargs[name] = value
        return cls(**kwargs)


@dataclass
class ModelParams:
    """All learnable state of the network."""

    ae: ae_mod.AeParams
    igae: igae_mod.IgaeParams
    fusion: saif.FusionParams
    centers: selfsup.Centers | None = None

    @classmethod
    def init(cls, input_dim, config):
        ae_seq, igae_seq = np.random.SeedSequence(config.seed).spawn(2)
        return cls(
            ae=ae_mod.AeParams.init(
                input_dim, config.ae_dims, config.latent_dim,
                np.random.default_rng(ae_seq),
            ),
            igae=igae_mod.IgaeParams.init(
                input_dim, config.igae_dims, config.latent_dim,
                np.random.default_rng(igae_seq),
            ),
            fusion=saif.FusionParams.init(),
        )

    def named_arrays(self):
        out = {}
        out.update(self.ae.named_arrays())
        out.update(self.igae.named_arrays())
        out.update(self.fusion.named_arrays())
        if self.centers is not None:
            out.update(self.centers.named_arrays())
        return out

    def replace_arrays(self, arrays):
        return ModelParams(
            ae=self.ae.replace(arrays),
            igae=self.igae.replace(arrays),
            fusion=self.fusion.replace(arrays),
            centers=None if self.centers is None else self.centers.replace(arrays),
        )


@dataclass
class BoundModel:
    """Leaf nodes for one tape, both structured and by name."""

    ae_nodes: tuple
    igae_nodes: tuple
    alpha: object
    beta: object
    centers_u: object
    named: dict


def bind_model(tape, params):
    named = {name: tape.leaf(arr) for name, arr in params.named_arrays().items()}
    n_enc = len(params.ae.enc_w)
    n_dec = len(params.ae.dec_w)
    ae_nodes = (
        [named[f"ae.enc.{i}.w"] for i in range(n_enc)],
        [named[f"ae.enc.{i}.b"] for i in range(n_enc)],
        [named[f"ae.dec.{i}.w"] for i in range(n_dec)],
        [named[f"ae.dec.{i}.b"] for i in range(n_dec)],
    )
    igae_nodes = (
        [named[f"igae.enc.{i}.w"] for i in range(len(params.igae.enc_w))],
        [named[f"igae.dec.{i}.w"] for i in range(len(params.igae.dec_w))],
    )
    return BoundModel(
        ae_nodes=ae_nodes,
        igae_nodes=igae_nodes,
        alpha=named["fusion.alpha"],
        beta=named["fusion.beta"],
        centers_u=named.get("centers.u"),
        named=named,
    )


# -- optimizer -----------------------------------------------------------


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update over a name -> array dict."""
    b1, b2 = betas
    state.t += 1
    t = state.t
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ParameterError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} of shape {p.shape}"
            )
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        out[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out, state


# -- report --------------------------------------------------------------


@dataclass
class TrainReport:
    """Per-iteration losses and trajectories plus the final clustering."""

    phases: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    l_ae: list = field(default_factory=list)
    l_w: list = field(default_factory=list)
    l_a: list = field(default_factory=list)
    l_kl: list = field(default_factory=list)
    total: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    embedding: np.ndarray | None = None
    labels: np.ndarray | None = None
    centers: np.ndarray | None = None
    metrics: cluster_eval.EvalReport | None = None
    seed: int = 0
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def append(self, phase, iteration, l_ae, l_w, l_a, l_kl, total, alpha, beta):
        self.phases.append(phase)
        self.iterations.append(iteration)
        self.l_ae.append(l_ae)
        self.l_w.append(l_w)
        self.l_a.append(l_a)
        self.l_kl.append(l_kl)
        self.total.append(total)
        self.alpha.append(alpha)
        self.beta.append(beta)

    def loss_rows(self):
        for i in range(len(self.phases)):
            yield (
                self.phases[i],
                self.iterations[i],
                self.l_ae[i],
                self.l_w[i],
                self.l_a[i],
                self.l_kl[i],
                self.total[i],
            )

    def fusion_rows(self):
        for i in range(len(self.phases)):
            yield self.phases[i], self.iterations[i], self.alpha[i], self.beta[i]

    def to_dict(self):
        return {
            "seed": self.seed,
            "config": self.config,
            "iterations": len(self.phases),
            "final_total": self.total[-1] if self.total else None,
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "timings": self.timings,
        }


def _check_finite(value, phase, iteration, report=None):
    if not np.isfinite(value):
        raise TrainingDivergedError(
            f"loss became non-finite during {phase} at iteration {iteration}",
            iteration=iteration,
            report=report,
        )


# -- phase 1: independent pretraining -------------------------------------


def pretrain_ae(data, config, params=None, report=None):
    """Train the autoencoder alone on its reconstruction loss."""
    if params is None:
        params = ae_mod.AeParams.init(
            data.x.shape[1], config.ae_dims, config.latent_dim,
            np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0]),
        )
    arrays = params.named_arrays()
    state = AdamState()
    for it in range(1, config.iters_pre + 1):
        tape = Tape()
        named = {name: tape.leaf(arr) for name, arr in arrays.items()}
        n_layers = len(params.enc_w)
        enc_w = [named[f"ae.enc.{i}.w"] for i in range(n_layers)]
        enc_b = [named[f"ae.enc.{i}.b"] for i in range(n_layers)]
        dec_w = [named[f"ae.dec.{i}.w"] for i in range(n_layers)]
        dec_b = [named[f"ae.dec.{i}.b"] for i in range(n_layers)]
        x = tape.constant(data.x)
        z = ae_mod.encode(tape, x, enc_w, enc_b, config.ae_act)
        x_hat = ae_mod.decode(tape, z, dec_w, dec_b, config.ae_act)
        loss = ae_mod.reconstruction_loss(tape, x, x_hat)
        value = float(loss.value[0, 0])
        _check_finite(value, "pretrain_ae", it, report)
        tape.backward(loss)
        grads = {name: tape.grad(node) for name, node in named.items()}
        arrays, state = adam_step(
            arrays, grads, state, config.lr, (config.beta1, config.beta2), config.eps
        )
        if report is not None:
            report.append("pretrain_ae", it, value, 0.0, 0.0, 0.0, value, 0.5, 0.0)
    return params.replace(arrays)


def pretrain_igae(data, config, params=None, report=None, iters=None):
    """Train the graph autoencoder alone on its hybrid loss.

    ``config.igae_loss_mode`` selects the optimized objective: the
    attribute term, the adjacency term, or their gamma-weighted sum.
    """
    if params is None:
        params = igae_mod.IgaeParams.init(
            data.x.shape[1], config.igae_dims, config.latent_dim,
            np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1]),
        )
    arrays = params.named_arrays()
    state = AdamState()
    adj_dense_value = data.adj_norm.to_dense()
    ax_value = adj_dense_value @ data.x
    for it in range(1, (iters or config.iters_pre) + 1):
        tape = Tape()
        named = {name: tape.leaf(arr) for name, arr in arrays.items()}
        enc_w = [named[f"igae.enc.{i}.w"] for i in range(len(params.enc_w))]
        dec_w = [named[f"igae.dec.{i}.w"] for i in range(len(params.dec_w))]
        x = tape.constant(data.x)
        z = igae_mod.encode(tape, data.adj_norm, x, enc_w, config.igae_act)
        z_hat, hidden = igae_mod.decode(tape, data.adj_norm, z, dec_w, config.igae_act)
        extra = hidden if config.adj_recon == "multilevel" else None
        a_hat = igae_mod.reconstruct_adjacency(tape, z, extra)
        l_w, l_a, l_both = igae_mod.hybrid_loss(
            tape,
            tape.constant(ax_value),
            tape.constant(adj_dense_value),
            z_hat,
            a_hat,
            config.gamma,
        )
        loss = {"lw": l_w, "la": l_a, "both": l_both}[config.igae_loss_mode]
        value = float(loss.value[0, 0])
        _check_finite(value, "pretrain_igae", it, report)
        tape.backward(loss)
        grads = {name: tape.grad(node) for name, node in named.items()}
        arrays, state = adam_step(
            arrays, grads, state, config.lr, (config.beta1, config.beta2), config.eps
        )
        if report is not None:
            report.append(
                "pretrain_igae", it, 0.0,
                float(l_w.value[0, 0]), float(l_a.value[0, 0]), 0.0, value, 0.5, 0.0,
            )
    trained = params.replace(arrays)
    tape = Tape()
    enc_w = [tape.leaf(w) for w in trained.enc_w]
    z_value = igae_mod.encode(
        tape, data.adj_norm, tape.constant(data.x), enc_w, config.igae_act
    ).value
    return trained, z_value


def igae_only_run(data, config, iters, seed_kmeans=None):
    """Train IGAE alone and cluster its latent embedding with K-means.

    This is the graph-autoencoder ablation protocol: the loss mode in
    the config picks attribute-only, adjacency-only, or hybrid
    reconstruction.
    """
    params, z_value = pretrain_igae(data, config, iters=iters)
    seed = config.seed if seed_kmeans is None else seed_kmeans
    labels, _, _ = cluster_eval.kmeans(
        z_value, data.k, restarts=config.kmeans_restarts, seed=seed
    )
    return params, z_value, labels


# -- phases 2 and 3 --------------------------------------------------------


def _forward_with_losses(tape, data, bound, config, constants):
    trace = saif.forward(
        tape,
        constants["x"],
        data.adj_norm,
        bound.ae_nodes,
        bound.igae_nodes,
        bound.alpha,
        bound.beta,
        ae_act=config.ae_act,
        igae_act=config.igae_act,
        fusion=config.fusion,
        adj_recon=config.adj_recon,
    )
    l_ae = ae_mod.reconstruction_loss(tape, constants["x"], trace.x_hat)
    l_w, l_a, l_igae = igae_mod.hybrid_loss(
        tape, constants["ax"], constants["adj_dense"], trace.z_hat, trace.a_hat,
        config.gamma,
    )
    return trace, l_ae, l_w, l_a, l_igae


def _make_constants(tape, data, adj_dense_value, ax_value):
    return {
        "x": tape.constant(data.x),
        "adj_dense": tape.constant(adj_dense_value),
        "ax": tape.constant(ax_value),
    }


def joint_pretrain(data, params, config, report=None):
    """Optimize both reconstruction losses through the fusion module."""
    arrays = params.named_arrays()
    state = AdamState()
    adj_dense_value = data.adj_norm.to_dense()
    ax_value = adj_dense_value @ data.x
    current = params
    for it in range(1, config.iters_joint + 1):
        tape = Tape()
        bound = bind_model(tape, current)
        constants = _make_constants(tape, data, adj_dense_value, ax_value)
        _, l_ae, l_w, l_a, l_igae = _forward_with_losses(
            tape, data, bound, config, constants
        )
        total = tape.add(l_ae, l_igae)
        value = float(total.value[0, 0])
        _check_finite(value, "joint_pretrain", it, report)
        tape.backward(total)
        grads = {name: tape.grad(node) for name, node in bound.named.items()}
        arrays, state = adam_step(
            arrays, grads, state, config.lr, (config.beta1, config.beta2), config.eps
        )
        current = current.replace_arrays(arrays)
        if report is not None:
            report.append(
                "joint", it,
                float(l_ae.value[0, 0]), float(l_w.value[0, 0]),
                float(l_a.value[0, 0]), 0.0, value,
                float(current.fusion.alpha[0, 0]), float(current.fusion.beta[0, 0]),
            )
    return current


def compute_embedding(data, params, config):
    """One forward pass; returns the consensus embedding as an array."""
    tape = Tape()
    bound = bind_model(tape, params)
    x = tape.constant(data.x)
    trace = saif.forward(
        tape, x, data.adj_norm, bound.ae_nodes, bound.igae_nodes,
        bound.alpha, bound.beta,
        ae_act=config.ae_act, igae_act=config.igae_act,
        fusion=config.fusion, adj_recon=config.adj_recon,
    )
    return trace.z_tilde.value


def init_centers(z_tilde, k, config, seed=None):
    """K-means centers of the consensus embedding, best of restarts."""
    kmeans_seed = (
        seed if seed is not None
        else np.random.SeedSequence(config.seed).spawn(3)[2]
    )
    _, centers, _ = cluster_eval.kmeans(
        z_tilde, k, restarts=config.kmeans_restarts, seed=kmeans_seed
    )
    return selfsup.Centers(u=centers, dof=config.dof)


def finetune(data, params, centers, config, report=None):
    """Self-supervised fine-tuning with the joint objective.

    Runs at least ``iters_finetune`` iterations, then keeps going until
    the total loss has not improved by ``min_improvement`` for
    ``patience`` iterations (or the hard cap is hit). The target
    distribution is refreshed from the consensus assignment every ``T``
    iterations and held constant in between.
    """
    if report is None:
        report = TrainReport(seed=config.seed, config=config.to_dict())
    params = replace(params, centers=centers)
    arrays = params.named_arrays()
    state = AdamState()
    adj_dense_value = data.adj_norm.to_dense()
    ax_value = adj_dense_value @ data.x
    current = params
    p_const = None
    best = np.inf
    stall = 0
    it = 0
    while True:
        it += 1
        tape = Tape()
        bound = bind_model(tape, current)
        constants = _make_constants(tape, data, adj_dense_value, ax_value)
        trace, l_ae, l_w, l_a, l_igae = _forward_with_losses(
            tape, data, bound, config, constants
        )
        q = selfsup.soft_assign(tape, trace.z_tilde, bound.centers_u, config.dof)
        q_igae = selfsup.soft_assign(tape, trace.z_igae, bound.centers_u, config.dof)
        q_ae = selfsup.soft_assign(tape, trace.z_ae, bound.centers_u, config.dof)
        if p_const is None or it % config.T == 0:
            p_const = selfsup.target_distribution(q.value)
        if config.supervision == "triplet":
            l_kl = selfsup.triplet_kl(tape, p_const, q, q_igae, q_ae)
        else:
            l_kl = selfsup.single_kl(tape, p_const, q)
        total = tape.add(tape.add(l_ae, l_igae), tape.scale(l_kl, config.lambda_))
        value = float(total.value[0, 0])
        _check_finite(value, "finetune", it, report)
        tape.backward(total)
        grads = {name: tape.grad(node) for name, node in bound.named.items()}
        arrays, state = adam_step(
            arrays, grads, state, config.lr, (config.beta1, config.beta2), config.eps
        )
        current = current.replace_arrays(arrays)
        report.append(
            "finetune", it,
            float(l_ae.value[0, 0]), float(l_w.value[0, 0]), float(l_a.value[0, 0]),
            float(l_kl.value[0, 0]), value,
            float(current.fusion.alpha[0, 0]), float(current.fusion.beta[0, 0]),
        )
        if value < best - config.min_improvement:
            best = value
            stall = 0
        else:
            stall += 1
        if it >= config.iters_finetune_cap:
            break
        if it >= config.iters_finetune and stall >= config.patience:
            break

    embedding = compute_embedding(data, current, config)
    final_seed = np.random.SeedSequence(config.seed).spawn(4)[3]
    labels, final_centers, _ = cluster_eval.kmeans(
        embedding, data.k, restarts=config.kmeans_restarts, seed=final_seed
    )
    report.embedding = embedding
    report.labels = labels
    report.centers = final_centers
    if data.labels is not None:
        report.metrics = cluster_eval.evaluate(data.labels, labels, data.k)
    return current, report


def run_training(data, config):
    """All three phases end to end; returns the model and its report."""
    report = TrainReport(seed=config.seed, config=config.to_dict())
    params = ModelParams.init(data.x.shape[1], config)
    log.info("phase 1: pretraining AE and IGAE for %d iterations each",
             config.iters_pre)
    tick = time.perf_counter()
    trained_ae = pretrain_ae(data, config, params.ae, report)
    trained_igae, _ = pretrain_igae(data, config, params.igae, report)
    params = ModelParams(ae=trained_ae, igae=trained_igae, fusion=params.fusion)
    report.timings["pretrain"] = time.perf_counter() - tick
    log.info("phase 2: joint pretraining for %d iterations", config.iters_joint)
    tick = time.perf_counter()
    params = joint_pretrain(data, params, config, report)
    report.timings["joint"] = time.perf_counter() - tick
    log.info("phase 3: fine-tuning (at least %d iterations)", config.iters_finetune)
    tick = time.perf_counter()
    centers = init_centers(compute_embedding(data, params, config), data.k, config)
    params, report = finetune(data, params, centers, config, report)
    report.timings["finetune"] = time.perf_counter() - tick
    if report.metrics is not None:
        log.info(
            "final metrics: acc=%.4f nmi=%.4f ari=%.4f f1=%.4f",
            report.metrics.acc, report.metrics.nmi,
            report.metrics.ari, report.metrics.f1,
        )
    return params, report
