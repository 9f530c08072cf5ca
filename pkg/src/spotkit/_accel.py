"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise the
pure-Python twin in ``_pyimpl``. Set ``SPOTKIT_PURE_PYTHON=1`` to force the
fallback (benchmarks and the backend-parity tests do this per call through
:data:`BACKENDS` instead).
"""
from __future__ import annotations

import os

from . import _pyimpl

BACKENDS = {"python": _pyimpl}

try:
    from . import _core
except ImportError:  # extension not built
    _core = None
else:
    BACKENDS["cython"] = _core

if _core is not None and not os.environ.get("SPOTKIT_PURE_PYTHON"):
    impl = _core
    BACKEND = "cython"
else:
    impl = _pyimpl
    BACKEND = "python"

levenshtein = impl.levenshtein
nearest_word = impl.nearest_word
solve_assignment = impl.solve_assignment
intersection_area = impl.intersection_area
