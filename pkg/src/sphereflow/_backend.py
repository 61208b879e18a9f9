"""Select the compiled core or the numpy fallback at import time.

Set ``SPHEREFLOW_BACKEND=python`` to force the fallback. ``SPHEREFLOW_THREADS``
caps the number of OpenMP threads used by the compiled core.
"""

import os

from . import _fallback

try:
    from . import _core
except ImportError:  # pragma: no cover - depends on the build
    _core = None

_requested = os.environ.get("SPHEREFLOW_BACKEND", "auto").lower()
if _requested == "python" or _core is None:
    impl = _fallback
    NAME = "python"
else:
    impl = _core
    NAME = "compiled"


def threads():
    """Thread count from ``SPHEREFLOW_THREADS``, defaulting to the CPU count."""
    raw = os.environ.get("SPHEREFLOW_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def module_for(family):
    """The backend module able to evaluate ``family`` (callables need the fallback)."""
    if callable(family):
        return _fallback
    return impl
