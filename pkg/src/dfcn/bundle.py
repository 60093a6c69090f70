"""Graph bundles and checkpoints on disk.

A bundle is a directory holding the attribute matrix (CSV), the raw
edge list, the normalized adjacency as weighted triplets, optional
labels, a meta.json, and a manifest with SHA-256 digests of every file.
Loading re-hashes each file and refuses tampered bundles.

A checkpoint is a JSON manifest (dimensions, config, phase, named
blocks with byte offsets) next to a binary blob of little-endian
float64 weights; loading validates the layer dimension chains.
"""

import datetime
import hashlib
import json
from pathlib import Path

import numpy as np

from . import ae as ae_mod
from . import igae as igae_mod
from . import saif, selfsup, trainer
from .errors import BundleError, ValidationError
from .graph import GraphData, SparseAdjacency, normalize_adjacency

BUNDLE_FORMAT = "dfcn-bundle-v1"
CHECKPOINT_FORMAT = "dfcn-checkpoint-v1"
FLOAT_FMT = "%.17g"  # full float64 round trip


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _timestamp():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


# -- graph bundles --------------------------------------------------------


def write_edge_list(path, adj):
    """Each undirected edge once, smaller endpoint first."""
    rows, cols, _ = adj.to_coo()
    with open(path, "w") as fh:
        for u, v in zip(rows, cols):
            if u < v:
                fh.write(f"{u} {v}\n")


def read_edge_list(path):
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise BundleError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise BundleError(
                    f"{path}:{lineno}: node ids must be integers, got {line!r}"
                ) from None
    return edges


def write_bundle(out_dir, data, seed=None, extra=None):
    """Write a GraphData to a bundle directory; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    np.savetxt(out / "attrs.csv", data.x, delimiter=",", fmt=FLOAT_FMT)
    write_edge_list(out / "edges.txt", data.adj)
    rows, cols, vals = data.adj_norm.to_coo()
    with open(out / "a_norm.txt", "w") as fh:
        for u, v, w in zip(rows, cols, vals):
            fh.write(f"{u} {v} {FLOAT_FMT % w}\n")
    files = ["attrs.csv", "edges.txt", "a_norm.txt"]

    labels_file = None
    if data.labels is not None:
        np.savetxt(out / "labels.csv", data.labels, fmt="%d")
        files.append("labels.csv")
        labels_file = "labels.csv"

    meta = {"n": data.n, "d": int(data.x.shape[1]), "k": data.k,
            "labels_file": labels_file}
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    files.append("meta.json")

    manifest = {
        "format": BUNDLE_FORMAT,
        "created": _timestamp(),
        "seed": seed,
        "files": {name: _sha256(out / name) for name in files},
    }
    if extra:
        manifest["extra"] = extra
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def read_bundle(path):
    """Load and digest-verify a bundle directory into a GraphData."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise BundleError(f"{root}: no manifest.json, not a bundle")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != BUNDLE_FORMAT:
        raise BundleError(f"{root}: unknown bundle format {manifest.get('format')!r}")
    for name, expected in manifest["files"].items():
        target = root / name
        if not target.is_file():
            raise BundleError(f"{root}: missing file {name}")
        actual = _sha256(target)
        if actual != expected:
            raise BundleError(
                f"{root}/{name}: digest mismatch (file was modified after the "
                f"bundle was written)"
            )

    meta = json.loads((root / "meta.json").read_text())
    x = np.loadtxt(root / "attrs.csv", delimiter=",", ndmin=2)
    if x.shape != (meta["n"], meta["d"]):
        raise BundleError(
            f"{root}/attrs.csv: expected {meta['n']}x{meta['d']}, got "
            f"{x.shape[0]}x{x.shape[1]}"
        )
    adj = SparseAdjacency.from_undirected_edges(meta["n"], read_edge_list(root / "edges.txt"))

    rows, cols, vals = [], [], []
    with open(root / "a_norm.txt") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise BundleError(
                    f"{root}/a_norm.txt:{lineno}: expected 'u v w', got {line!r}"
                )
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    adj_norm = SparseAdjacency.from_coo(rows, cols, vals, (meta["n"], meta["n"]))

    labels = None
    if meta.get("labels_file"):
        labels = np.loadtxt(root / meta["labels_file"], dtype=np.int64, ndmin=1)

    return GraphData(x=x, adj=adj, adj_norm=adj_norm, labels=labels, k=meta["k"])


def prepare_bundle(attrs_path, meta_path, out_dir, edges_path=None,
                   knn=None, heat="auto", seed=None):
    """Build a bundle from user files: attributes plus either an edge
    list or a heat-kernel KNN construction."""
    from .graph import knn_heat_graph  # local import keeps module load light

    meta_path = Path(meta_path)
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"{meta_path}: invalid JSON ({exc})") from None
    for key in ("n", "d", "k"):
        if key not in meta:
            raise ValidationError(f"{meta_path}: missing required field {key!r}")

    try:
        x = np.loadtxt(attrs_path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise BundleError(f"{attrs_path}: failed to parse CSV ({exc})") from None
    if x.shape != (meta["n"], meta["d"]):
        raise ValidationError(
            f"{attrs_path}: meta declares n={meta['n']}, d={meta['d']} but the "
            f"file is {x.shape[0]}x{x.shape[1]}"
        )

    if (edges_path is None) == (knn is None):
        raise ValidationError("provide exactly one of an edge list or --knn")
    if edges_path is not None:
        adj = SparseAdjacency.from_undirected_edges(
            meta["n"], read_edge_list(edges_path)
        )
    else:
        adj = knn_heat_graph(x, knn, heat)

    labels = None
    if meta.get("labels_file"):
        labels_path = meta_path.parent / meta["labels_file"]
        labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)

    data = GraphData(
        x=x, adj=adj, adj_norm=normalize_adjacency(adj), labels=labels, k=meta["k"]
    )
    write_bundle(out_dir, data, seed=seed)
    return data


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(out_dir, params, config, phase="finetune"):
    """Write checkpoint.json plus checkpoint.bin into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blocks = []
    payload = bytearray()
    for name, arr in params.named_arrays().items():
        blocks.append(
            {
                "name": name,
                "offset": len(payload),
                "rows": int(arr.shape[0]),
                "cols": int(arr.shape[1]),
            }
        )
        payload.extend(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    (out / "checkpoint.bin").write_bytes(bytes(payload))
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "phase": phase,
        "config": config.to_dict(),
        "dof": None if params.centers is None else params.centers.dof,
        "blocks": blocks,
        "bin_file": "checkpoint.bin",
    }
    (out / "checkpoint.json").write_text(json.dumps(manifest, indent=2))
    return out / "checkpoint.json"


def _chain_check(kind, ws):
    for i in range(len(ws) - 1):
        if ws[i].shape[1] != ws[i + 1].shape[0]:
            raise BundleError(
                f"checkpoint {kind} layer {i} has {ws[i].shape[1]} output "
                f"columns but layer {i + 1} expects {ws[i + 1].shape[0]}"
            )


def load_checkpoint(path):
    """Load a checkpoint; returns (ModelParams, TrainConfig, phase)."""
    path = Path(path)
    if path.is_dir():
        path = path / "checkpoint.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BundleError(f"{path}: cannot read checkpoint manifest ({exc})") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise BundleError(f"{path}: unknown checkpoint format")
    blob = (path.parent / manifest["bin_file"]).read_bytes()
    arrays = {}
    for block in manifest["blocks"]:
        size = block["rows"] * block["cols"] * 8
        chunk = blob[block["offset"] : block["offset"] + size]
        if len(chunk) != size:
            raise BundleError(f"{path}: truncated weight block {block['name']!r}")
        arrays[block["name"]] = (
            np.frombuffer(chunk, dtype="<f8")
            .reshape(block["rows"], block["cols"])
            .copy()
        )
    config = trainer.TrainConfig.from_dict(manifest["config"])

    def collect(prefix, suffix):
        found = []
        i = 0
        while f"{prefix}.{i}.{suffix}" in arrays:
            found.append(arrays[f"{prefix}.{i}.{suffix}"])
            i += 1
        return found

    ae_params = ae_mod.AeParams(
        enc_w=collect("ae.enc", "w"),
        enc_b=collect("ae.enc", "b"),
        dec_w=collect("ae.dec", "w"),
        dec_b=collect("ae.dec", "b"),
    )
    igae_params = igae_mod.IgaeParams(
        enc_w=collect("igae.enc", "w"), dec_w=collect("igae.dec", "w")
    )
    if not ae_params.enc_w or not igae_params.enc_w:
        raise BundleError(f"{path}: checkpoint is missing encoder weights")
    _chain_check("ae encoder", ae_params.enc_w)
    _chain_check("ae decoder", ae_params.dec_w)
    _chain_check("igae encoder", igae_params.enc_w)
    _chain_check("igae decoder", igae_params.dec_w)
    if ae_params.enc_w[-1].shape[1] != ae_params.dec_w[0].shape[0]:
        raise BundleError(f"{path}: ae latent and decoder input dims disagree")
    for i, (w, b) in enumerate(zip(ae_params.enc_w, ae_params.enc_b)):
        if b.shape != (1, w.shape[1]):
            raise BundleError(f"{path}: ae encoder bias {i} has the wrong shape")
    for i, (w, b) in enumerate(zip(ae_params.dec_w, ae_params.dec_b)):
        if b.shape != (1, w.shape[1]):
            raise BundleError(f"{path}: ae decoder bias {i} has the wrong shape")

    try:
        fusion = saif.FusionParams(
            alpha=arrays["fusion.alpha"], beta=arrays["fusion.beta"]
        )
    except KeyError as exc:
        raise BundleError(f"{path}: checkpoint is missing block {exc}") from None
    centers = None
    if "centers.u" in arrays:
        centers = selfsup.Centers(
            u=arrays["centers.u"], dof=manifest.get("dof") or config.dof
        )
    params = trainer.ModelParams(
        ae=ae_params, igae=igae_params, fusion=fusion, centers=centers
    )
    return params, config, manifest.get("phase", "unknown")
