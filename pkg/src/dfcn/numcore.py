"""Dense-matrix numeric core with reverse-mode differentiation.

All values are 2-D float64 arrays; scalars live as 1x1 matrices so the
whole graph stays uniform. Every primitive records itself on a
:class:`Tape` together with a hand-written backward rule, which keeps
the gradient path auditable and lets :func:`finite_diff_check` act as
an independent oracle over any composition.

Reductions run in a fixed sequential order, so identical inputs always
produce bitwise-identical gradients.
"""

import numpy as np

from . import backend
from .errors import ContractError, DeterminismError, ShapeError


def as_matrix(value):
    """Coerce scalars / nested lists / arrays to a 2-D float64 array."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a scalar or 2-D matrix, got ndim={arr.ndim}")
    return arr


class Node:
    """One recorded value: its matrix, its parents and its backward rule."""

    __slots__ = ("value", "parents", "vjp", "requires_grad", "grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        r, c = self.value.shape
        return f"Node({r}x{c}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of primitive operations.

    Nodes are appended in execution order, so the list is topologically
    sorted by construction and :meth:`backward` is a single reverse
    sweep. A tape belongs to one thread; matrices handed to it are
    treated as immutable from that point on.
    """

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    # -- node creation -------------------------------------------------

    def leaf(self, value):
        """A differentiable input (parameter)."""
        arr = as_matrix(value)
        if not np.isfinite(arr).all():
            raise ContractError("leaf value contains non-finite entries")
        node = Node(arr, requires_grad=True)
        self._nodes.append(node)
        return node

    def constant(self, value):
        """A non-differentiable input; backward never flows into it."""
        arr = as_matrix(value)
        if not np.isfinite(arr).all():
            raise ContractError("constant value contains non-finite entries")
        node = Node(arr)
        self._nodes.append(node)
        return node

    def _record(self, value, parents, vjp):
        requires = any(p.requires_grad for p in parents)
        node = Node(value, parents, vjp if requires else None, requires)
        self._nodes.append(node)
        return node

    # -- primitives ----------------------------------------------------

    def matmul(self, a, b):
        if a.value.shape[1] != b.value.shape[0]:
            raise ShapeError(
                f"matmul: inner dimensions disagree, left is "
                f"{a.value.shape[0]}x{a.value.shape[1]} and right is "
                f"{b.value.shape[0]}x{b.value.shape[1]}"
            )
        av, bv = a.value, b.value

        def vjp(g):
            return g @ bv.T, av.T @ g

        return self._record(av @ bv, (a, b), vjp)

    def spmm(self, adj, h):
        """Sparse (CSR adjacency) times dense node; adjacency is constant."""
        if adj.shape[1] != h.value.shape[0]:
            raise ShapeError(
                f"spmm: adjacency is {adj.shape[0]}x{adj.shape[1]} but dense "
                f"operand has {h.value.shape[0]} rows"
            )
        out = backend.csr_matmat(adj.indptr, adj.indices, adj.data, h.value)
        adj_t = adj.transpose()

        def vjp(g):
            return (backend.csr_matmat(adj_t.indptr, adj_t.indices, adj_t.data, g),)

        return self._record(out, (h,), vjp)

    def transpose(self, a):
        def vjp(g):
            return (g.T,)

        return self._record(a.value.T.copy(), (a,), vjp)

    def add(self, a, b):
        self._check_same_shape("add", a, b)

        def vjp(g):
            return g, g

        return self._record(a.value + b.value, (a, b), vjp)

    def sub(self, a, b):
        self._check_same_shape("sub", a, b)

        def vjp(g):
            return g, -g

        return self._record(a.value - b.value, (a, b), vjp)

    def mul(self, a, b):
        """Elementwise (Hadamard) product."""
        self._check_same_shape("mul", a, b)
        av, bv = a.value, b.value

        def vjp(g):
            return g * bv, g * av

        return self._record(av * bv, (a, b), vjp)

    def scale(self, a, factor):
        """Multiply by a Python float constant."""
        factor = float(factor)

        def vjp(g):
            return (factor * g,)

        return self._record(factor * a.value, (a,), vjp)

    def scale_var(self, s, a):
        """Multiply a matrix by a learnable 1x1 scalar node."""
        if s.value.shape != (1, 1):
            raise ShapeError(f"scale_var: scalar operand has shape {s.value.shape}")
        sv, av = s.value, a.value

        def vjp(g):
            return np.array([[float(np.sum(g * av))]]), sv[0, 0] * g

        return self._record(sv[0, 0] * av, (s, a), vjp)

    def lerp(self, alpha, a, b):
        """alpha*a + (1-alpha)*b with a learnable 1x1 alpha."""
        if alpha.value.shape != (1, 1):
            raise ShapeError(f"lerp: alpha has shape {alpha.value.shape}")
        self._check_same_shape("lerp", a, b)
        al = alpha.value[0, 0]
        av, bv = a.value, b.value

        def vjp(g):
            return (
                np.array([[float(np.sum(g * (av - bv)))]]),
                al * g,
                (1.0 - al) * g,
            )

        return self._record(al * av + (1.0 - al) * bv, (alpha, a, b), vjp)

    def add_bias(self, a, bias):
        """Add a 1xC row bias to every row of an NxC matrix."""
        if bias.value.shape != (1, a.value.shape[1]):
            raise ShapeError(
                f"add_bias: matrix is {a.value.shape[0]}x{a.value.shape[1]} but "
                f"bias is {bias.value.shape[0]}x{bias.value.shape[1]}"
            )

        def vjp(g):
            return g, g.sum(axis=0, keepdims=True)

        return self._record(a.value + bias.value, (a, bias), vjp)

    def leaky_relu(self, a, slope=0.2):
        av = a.value
        mask = av >= 0.0

        def vjp(g):
            return (np.where(mask, g, slope * g),)

        return self._record(np.where(mask, av, slope * av), (a,), vjp)

    def tanh(self, a):
        out = np.tanh(a.value)

        def vjp(g):
            return (g * (1.0 - out * out),)

        return self._record(out, (a,), vjp)

    def sigmoid(self, a):
        av = a.value
        out = np.empty_like(av)
        pos = av >= 0.0
        out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
        ez = np.exp(av[~pos])
        out[~pos] = ez / (1.0 + ez)

        def vjp(g):
            return (g * out * (1.0 - out),)

        return self._record(out, (a,), vjp)

    def log(self, a, floor=1e-12):
        """Natural log with the argument floored at ``floor``.

        Entries at or below the floor sit on the flat part of the clamp,
        so their derivative is zero; finite differences agree.
        """
        av = np.maximum(a.value, floor)
        active = a.value > floor

        def vjp(g):
            return (np.where(active, g / av, 0.0),)

        return self._record(np.log(av), (a,), vjp)

    def row_softmax(self, a):
        out = backend.row_softmax(a.value)

        def vjp(g):
            dot = (g * out).sum(axis=1, keepdims=True)
            return (out * (g - dot),)

        return self._record(out, (a,), vjp)

    def row_normalize(self, a):
        """Divide each row by its sum; rows must have positive sums."""
        sums = a.value.sum(axis=1, keepdims=True)
        if np.any(sums <= 0.0):
            raise ContractError("row_normalize: a row sums to zero or less")
        out = a.value / sums

        def vjp(g):
            dot = (g * out).sum(axis=1, keepdims=True)
            return ((g - dot) / sums,)

        return self._record(out, (a,), vjp)

    def student_t_weights(self, z, centers, dof=1.0):
        """Unnormalized Student-t kernel (1 + |z_i - u_j|^2 / v)^(-(v+1)/2).

        Row-normalizing the result gives the soft assignment table.
        """
        if z.value.shape[1] != centers.value.shape[1]:
            raise ShapeError(
                f"student_t_weights: embeddings have {z.value.shape[1]} columns "
                f"but centers have {centers.value.shape[1]}"
            )
        dof = float(dof)
        zv, uv = z.value, centers.value
        base = 1.0 + backend.pairwise_sqdist(zv, uv) / dof
        w = base ** (-(dof + 1.0) / 2.0)

        def vjp(g):
            # dL/d dist^2, then chain through dist^2 = |z_i - u_j|^2
            b = g * (-(dof + 1.0) / (2.0 * dof)) * w / base
            dz = 2.0 * (zv * b.sum(axis=1, keepdims=True) - b @ uv)
            du = 2.0 * (uv * b.sum(axis=0)[:, None] - b.T @ zv)
            return dz, du

        return self._record(w, (z, centers), vjp)

    def frobenius_sq(self, a):
        av = a.value
        out = np.array([[float(np.einsum("ij,ij->", av, av))]])

        def vjp(g):
            return (2.0 * g[0, 0] * av,)

        return self._record(out, (a,), vjp)

    def total_sum(self, a):
        av = a.value

        def vjp(g):
            return (np.full_like(av, g[0, 0]),)

        return self._record(np.array([[float(av.sum())]]), (a,), vjp)

    # -- backward ------------------------------------------------------

    def backward(self, root):
        """Populate adjoints for everything the scalar ``root`` depends on."""
        if root.value.shape != (1, 1):
            raise ContractError(
                f"backward: root must be a 1x1 scalar node, got shape "
                f"{root.value.shape[0]}x{root.value.shape[1]}"
            )
        for node in self._nodes:
            node.grad = None
        root.grad = np.ones((1, 1))
        for node in reversed(self._nodes):
            if node.grad is None or node.vjp is None:
                continue
            for parent, g in zip(node.parents, node.vjp(node.grad)):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g.copy() if g is node.grad else g
                else:
                    parent.grad = parent.grad + g

    def grad(self, node):
        """Adjoint of ``node`` after backward(); zeros if it was unreachable."""
        if node.grad is None:
            return np.zeros_like(node.value)
        return node.grad

    # -- helpers -------------------------------------------------------

    @staticmethod
    def _check_same_shape(op, a, b):
        if a.value.shape != b.value.shape:
            raise ShapeError(
                f"{op}: shapes disagree, left is "
                f"{a.value.shape[0]}x{a.value.shape[1]} and right is "
                f"{b.value.shape[0]}x{b.value.shape[1]}"
            )


def finite_diff_check(build, params, epsilon=1e-5):
    """Compare tape gradients against central finite differences.

    ``build(tape, leaves)`` must construct the computation on the given
    tape from the list of leaf nodes and return the scalar root node.
    ``params`` is the list of arrays used to seed the leaves. Returns the
    maximum over all coordinates of ``|g_tape - g_fd| / max(1, |g_fd|)``.

    The function is evaluated twice up front; any discrepancy means it
    is not deterministic and the check refuses to continue.
    """
    params = [as_matrix(p) for p in params]

    def evaluate(arrays):
        tape = Tape()
        leaves = [tape.leaf(a) for a in arrays]
        root = build(tape, leaves)
        if root.value.shape != (1, 1):
            raise ContractError("finite_diff_check: build() must return a scalar node")
        return float(root.value[0, 0])

    base1 = evaluate(params)
    base2 = evaluate(params)
    if base1 != base2:
        raise DeterminismError(
            f"finite_diff_check: two baseline evaluations differ "
            f"({base1!r} vs {base2!r})"
        )

    tape = Tape()
    leaves = [tape.leaf(p.copy()) for p in params]
    root = build(tape, leaves)
    tape.backward(root)
    analytic = [tape.grad(leaf) for leaf in leaves]

    worst = 0.0
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            bumped = [q.copy() for q in params]
            bumped[k][idx] += epsilon
            f_plus = evaluate(bumped)
            bumped[k][idx] -= 2.0 * epsilon
            f_minus = evaluate(bumped)
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            err = abs(analytic[k][idx] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
