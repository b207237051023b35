"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``CUELAB_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

if os.environ.get("CUELAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def available_backends() -> dict:
    backends = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
        backends["cython"] = _kernels
    except ImportError:
        pass
    return backends


def _i64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def best_split(X, y, mult, idx, features, w0, w1, min_leaf, impl=None):
    impl = impl or _impl
    return impl.best_split(_f64(X), _i64(y), _i64(mult), _i64(idx),
                           _i64(features), float(w0), float(w1), int(min_leaf))


def scan_cues(t, p, theta_on, theta_off, refractory, min_consec, state, impl=None):
    impl = impl or _impl
    return impl.scan_cues(_i64(t), _f64(p), float(theta_on), float(theta_off),
                          int(refractory), int(min_consec), tuple(state))


def scan_cue_batch(t, p, offsets, theta_on, theta_off, refractory, min_consec,
                   impl=None):
    impl = impl or _impl
    return impl.scan_cue_batch(_i64(t), _f64(p), _i64(offsets), _f64(theta_on),
                               _f64(theta_off), _i64(refractory), _i64(min_consec))
