"""ZODIAC round kernels: compiled extension with a pure-Python fallback.

The compiled module is used when it imports and ``ZODIAC_PURE_PYTHON`` is
not set to a truthy value.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

from . import _fallback


def _load_compiled():
    try:
        from . import _core
    except ImportError:
        return None
    return _core


_compiled = _load_compiled()


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name: str | None = None) -> SimpleNamespace:
    """Return the kernel namespace for ``name`` (``"cython"``, ``"python"`` or default)."""
    if name is None:
        forced = os.environ.get("ZODIAC_PURE_PYTHON", "").lower() in ("1", "true", "yes")
        name = "python" if forced or _compiled is None else "cython"
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel extension zodiac._kernels._core is not built")
        mod = _compiled
    elif name == "python":
        mod = _fallback
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return SimpleNamespace(
        name=name,
        zodiac_rounds_logistic=mod.zodiac_rounds_logistic,
        zodiac_rounds_quadratic=mod.zodiac_rounds_quadratic,
        quadratic_second_moment=mod.quadratic_second_moment,
    )


BACKEND = get_backend().name
