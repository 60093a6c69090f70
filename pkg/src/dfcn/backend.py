"""Kernel backend selection, decided once at import.

With the compiled extension present, each kernel is bound to its
measured-fastest implementation (see benchmarks/bench_backends.py):
the CSR product and the fused Frobenius reduction come from the
extension, where a C loop beats anything NumPy can express, while the
pairwise distances and the row softmax stay on NumPy, whose BLAS GEMM
and vectorized exp outrun scalar loops. Without the extension every
kernel falls back to the NumPy twin.

Set ``DFCN_BACKEND=pure`` or ``DFCN_BACKEND=compiled`` to force every
kernel onto one side (useful for parity debugging); forcing
``compiled`` without the built extension raises instead of silently
degrading.
"""

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

_requested = os.environ.get("DFCN_BACKEND", "").strip().lower()
if _requested not in ("", "pure", "compiled"):
    raise RuntimeError(
        f"DFCN_BACKEND={_requested!r} not understood; use 'pure' or 'compiled'"
    )

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:
    _kernels = None

if _requested == "compiled" and _kernels is None:
    raise RuntimeError(
        "DFCN_BACKEND=compiled but the dfcn._kernels extension is not built; "
        "run 'pip install -e . --no-build-isolation' or drop the override"
    )

if _kernels is None or _requested == "pure":
    BACKEND = "pure"
    KERNEL_SOURCES = dict.fromkeys(
        ("csr_matmat", "pairwise_sqdist", "row_softmax", "frobenius_sq_diff"),
        "pure",
    )
    if _kernels is None and _requested == "":
        log.info("compiled kernels unavailable, using pure-NumPy backend")
elif _requested == "compiled":
    BACKEND = "compiled"
    KERNEL_SOURCES = dict.fromkeys(
        ("csr_matmat", "pairwise_sqdist", "row_softmax", "frobenius_sq_diff"),
        "compiled",
    )
else:
    BACKEND = "auto"
    KERNEL_SOURCES = {
        "csr_matmat": "compiled",
        "frobenius_sq_diff": "compiled",
        "pairwise_sqdist": "pure",
        "row_softmax": "pure",
    }


def _bind(name):
    source = _kernels if KERNEL_SOURCES[name] == "compiled" else _kernels_py
    return getattr(source, name)


csr_matmat = _bind("csr_matmat")
pairwise_sqdist = _bind("pairwise_sqdist")
row_softmax = _bind("row_softmax")
frobenius_sq_diff = _bind("frobenius_sq_diff")
