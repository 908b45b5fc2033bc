"""Select the compiled kernels when available, else the numpy fallback.

Set ``FRACSPDE_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by the backend-equivalence tests).
"""

import os

from . import _pycore

if os.environ.get("FRACSPDE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pycore
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pycore
        BACKEND = "python"

ml_rational_sum = _impl.ml_rational_sum
ml_series_sum = _impl.ml_series_sum
cubic_eval_uniform = _impl.cubic_eval_uniform
causal_convolve = _impl.causal_convolve
atom_accumulate = _impl.atom_accumulate

__all__ = [
    "BACKEND",
    "ml_rational_sum",
    "ml_series_sum",
    "cubic_eval_uniform",
    "causal_convolve",
    "atom_accumulate",
]
