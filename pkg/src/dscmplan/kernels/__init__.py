"""Numerical kernels with a compiled fast path.

The Cython extension ``_fast`` is used for ``interval_masses`` when it was
built; otherwise the NumPy versions in ``_reference`` are used. Set
``DSCMPLAN_PURE_PYTHON=1`` to force the fallback. ``piecewise_pdf`` always
uses NumPy: its vectorised exp/pow beat the scalar libm loop (see
``benchmarks/bench_kernels.py``); the compiled version is kept for testing.
"""

import os

from . import _reference

BACKEND = "python"
piecewise_pdf = _reference.piecewise_pdf
interval_masses = _reference.interval_masses

if not os.environ.get("DSCMPLAN_PURE_PYTHON"):
    try:
        from . import _fast
    except ImportError:  # extension not built
        _fast = None
    if _fast is not None:
        interval_masses = _fast.interval_masses
        BACKEND = "cython"

__all__ = ["piecewise_pdf", "interval_masses", "BACKEND"]
