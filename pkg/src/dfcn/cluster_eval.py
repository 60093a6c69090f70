"""K-means, minimum-cost assignment, and clustering metrics.

Cluster ids are arbitrary, so ACC and macro-F1 first align predictions
to ground truth with the Kuhn-Munkres algorithm on the negated
contingency table; NMI and ARI are relabel-invariant by construction.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ParameterError, ShapeError, ValidationError

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    acc: float
    nmi: float
    ari: float
    f1: float
    contingency: np.ndarray  # [true, predicted] counts, K x K
    mapping: np.ndarray  # predicted id -> true id bijection

    def to_dict(self):
        return {
            "acc": self.acc,
            "nmi": self.nmi,
            "ari": self.ari,
            "f1": self.f1,
            "contingency": self.contingency.tolist(),
            "mapping": self.mapping.tolist(),
        }


# -- k-means ------------------------------------------------------------


def _plus_plus_seed(z, k, rng):
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]))
    centers[0] = z[rng.integers(n)]
    closest = backend.pairwise_sqdist(z, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[j] = z[rng.integers(n)]
        else:
            centers[j] = z[rng.choice(n, p=closest / total)]
        closest = np.minimum(
            closest, backend.pairwise_sqdist(z, centers[j : j + 1])[:, 0]
        )
    return centers


def lloyd(z, centers, max_iter=300, tol=1e-4):
    """Lloyd iterations from given centers; returns (labels, centers,
    inertia, per-iteration inertia history)."""
    centers = centers.copy()
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = backend.pairwise_sqdist(z, centers)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(z.shape[0]), labels].sum())
        history.append(inertia)
        new_centers = centers.copy()
        for j in range(centers.shape[0]):
            mask = labels == j
            if mask.any():
                new_centers[j] = z[mask].mean(axis=0)
            else:
                # farthest point from its assigned center takes over
                dist_to_own = d2[np.arange(z.shape[0]), labels]
                far = int(dist_to_own.argmax())
                new_centers[j] = z[far]
                log.warning("empty cluster %d re-seeded at point %d", j, far)
        shift = float(((new_centers - centers) ** 2).sum())
        centers = new_centers
        if shift <= tol:
            break
    d2 = backend.pairwise_sqdist(z, centers)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(z.shape[0]), labels].sum())
    history.append(inertia)
    return labels.astype(np.int64), centers, inertia, history


def kmeans(z, k, restarts=20, seed=0, max_iter=300, tol=1e-4):
    """Best-of-restarts k-means++ / Lloyd. Deterministic for a given seed.

    ``seed`` may be an integer or a ``numpy.random.SeedSequence``; each
    restart draws from its own spawned child sequence.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"kmeans expects a 2-D matrix, got ndim={z.ndim}")
    n = z.shape[0]
    if k > n:
        raise ParameterError(f"k={k} exceeds the number of points n={n}")
    if restarts < 1:
        raise ParameterError("restarts must be >= 1")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    best = None
    for child in seed.spawn(restarts):
        rng = np.random.default_rng(child)
        centers0 = _plus_plus_seed(z, k, rng)
        labels, centers, inertia, _ = lloyd(z, centers0, max_iter, tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return best


# -- assignment ----------------------------------------------------------


def kuhn_munkres(cost):
    """Minimum-cost bijective assignment of a square cost matrix.

    Shortest-augmenting-path formulation with dual potentials, O(K^3).
    Returns ``assign`` with ``assign[i]`` the column given to row i.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"cost matrix must be square, got shape {c.shape}")
    if not np.isfinite(c).all():
        raise ValidationError("cost matrix contains non-finite entries")
    n = c.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    matched = np.zeros(n + 1, dtype=np.int64)  # matched[j] = row owning column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        matched[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = matched[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[matched[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if matched[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            matched[j0] = matched[j1]
            j0 = j1
    assign = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        assign[matched[j] - 1] = j - 1
    return assign


# -- metrics -------------------------------------------------------------


def _check_labelings(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValidationError(
            f"labelings must be equal-length 1-D arrays, got {y_true.shape} "
            f"and {y_pred.shape}"
        )
    return y_true, y_pred


def contingency_table(y_true, y_pred, k):
    y_true, y_pred = _check_labelings(y_true, y_pred)
    if y_true.size and (min(y_true.min(), y_pred.min()) < 0
                        or max(y_true.max(), y_pred.max()) >= k):
        raise ValidationError(f"labels must lie in [0, {k})")
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (y_true, y_pred), 1)
    return table


def best_mapping(y_true, y_pred, k):
    """Bijection predicted-id -> true-id maximizing matched samples."""
    table = contingency_table(y_true, y_pred, k)
    return kuhn_munkres(-table.T.astype(np.float64))


def accuracy(y_true, y_pred, k):
    """Best-map clustering accuracy via Kuhn-Munkres."""
    table = contingency_table(y_true, y_pred, k)
    mapping = kuhn_munkres(-table.T.astype(np.float64))
    matched = sum(table[mapping[p], p] for p in range(k))
    return float(matched) / int(np.asarray(y_true).shape[0])


def nmi(y_true, y_pred, normalizer="arithmetic"):
    """Normalized mutual information with natural logs.

    Two constant labelings count as identical partitions (NMI 1); a
    constant against a non-constant labeling gives 0.
    """
    y_true, y_pred = _check_labelings(y_true, y_pred)
    n = y_true.size
    k = int(max(y_true.max(), y_pred.max())) + 1
    table = contingency_table(y_true, y_pred, k).astype(np.float64)
    pij = table / n
    pi = pij.sum(axis=1)
    pj = pij.sum(axis=0)

    def entropy(p):
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum())

    h_true, h_pred = entropy(pi), entropy(pj)
    if h_true == 0.0 and h_pred == 0.0:
        return 1.0
    if h_true == 0.0 or h_pred == 0.0:
        return 0.0
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / np.outer(pi, pj)[nz])).sum())
    if normalizer == "arithmetic":
        denom = 0.5 * (h_true + h_pred)
    elif normalizer == "geometric":
        denom = np.sqrt(h_true * h_pred)
    else:
        raise ParameterError(f"unknown normalizer {normalizer!r}")
    return float(np.clip(mi / denom, 0.0, 1.0))


def ari(y_true, y_pred):
    """Adjusted Rand index via the pair-counting closed form."""
    y_true, y_pred = _check_labelings(y_true, y_pred)
    n = y_true.size
    k = int(max(y_true.max(), y_pred.max())) + 1
    table = contingency_table(y_true, y_pred, k)

    def comb2(x):
        return x * (x - 1) / 2.0

    index = comb2(table.astype(np.float64)).sum()
    sum_rows = comb2(table.sum(axis=1).astype(np.float64)).sum()
    sum_cols = comb2(table.sum(axis=0).astype(np.float64)).sum()
    total = comb2(float(n))
    expected = sum_rows * sum_cols / total if total > 0 else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0  # both partitions trivial, hence identical
    return float((index - expected) / (max_index - expected))


def macro_f1(y_true, y_pred, k):
    """Macro-averaged F1 after Kuhn-Munkres label alignment.

    A class absent from both the truth and the mapped predictions
    contributes 0 to the average.
    """
    y_true, y_pred = _check_labelings(y_true, y_pred)
    mapping = best_mapping(y_true, y_pred, k)
    mapped = mapping[y_pred]
    scores = np.zeros(k)
    for c in range(k):
        tp = int(((mapped == c) & (y_true == c)).sum())
        fp = int(((mapped == c) & (y_true != c)).sum())
        fn = int(((mapped != c) & (y_true == c)).sum())
        denom = 2 * tp + fp + fn
        scores[c] = 2.0 * tp / denom if denom > 0 else 0.0
    return float(scores.mean())


def evaluate(y_true, y_pred, k):
    """All four metrics plus the contingency table and label mapping."""
    y_true, y_pred = _check_labelings(y_true, y_pred)
    table = contingency_table(y_true, y_pred, k)
    mapping = kuhn_munkres(-table.T.astype(np.float64))
    matched = sum(table[mapping[p], p] for p in range(k))
    return EvalReport(
        acc=float(matched) / y_true.size,
        nmi=nmi(y_true, y_pred),
        ari=ari(y_true, y_pred),
        f1=macro_f1(y_true, y_pred, k),
        contingency=table,
        mapping=mapping,
    )
