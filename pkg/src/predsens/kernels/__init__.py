"""Hot loops behind a backend switch.

The compiled extension ``_core`` is used when it imports; otherwise the
numpy reference implementation in ``_fallback`` is used. Set the
environment variable ``PREDSENS_BACKEND=python`` to force the fallback.
"""

import os

from . import _fallback

BACKENDS = {"python": _fallback}

try:
    from . import _core
except ImportError:  # extension not built
    _core = None
else:
    BACKENDS["cython"] = _core

if os.environ.get("PREDSENS_BACKEND", "").lower() == "python" or _core is None:
    _impl = _fallback
else:
    _impl = _core

BACKEND = _impl.BACKEND
build_tree = _impl.build_tree
predict_trees = _impl.predict_trees
bart_sweep = _impl.bart_sweep
bart_predict = _impl.bart_predict

__all__ = ["BACKEND", "BACKENDS", "build_tree", "predict_trees", "bart_sweep", "bart_predict"]
