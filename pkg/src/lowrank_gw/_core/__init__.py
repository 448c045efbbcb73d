"""Hot kernels: compiled extension when available, numpy fallback otherwise.

The choice is made once at import. Set ``LOWRANK_GW_PURE=1`` to force the
fallback (the test suite also exercises both through :func:`get_backend`).
"""
import os

from . import fallback

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

BACKENDS = {"python": fallback}
if compiled is not None:
    BACKENDS["compiled"] = compiled

if compiled is not None and os.environ.get("LOWRANK_GW_PURE", "") not in ("1", "true", "yes"):
    BACKEND = "compiled"
else:
    BACKEND = "python"

kernels = BACKENDS[BACKEND]


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {sorted(BACKENDS)}") from None
