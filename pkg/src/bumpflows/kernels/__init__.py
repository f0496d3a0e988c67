"""Backend selection for the mixture-evaluation hot loop.

The compiled Cython extension is preferred when importable; otherwise
the NumPy reference implementation is used. Set ``BUMPFLOWS_KERNELS`` to
``python`` or ``compiled`` to force a choice (forcing ``compiled`` when
the extension is missing raises at import).

Both backends implement the same three entry points with identical
semantics; the test suite asserts elementwise agreement.
"""

import os

from . import reference

_requested = os.environ.get("BUMPFLOWS_KERNELS", "auto")

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from . import _mixturecore as _compiled
    except ImportError:
        if _requested == "compiled":
            raise
        _compiled = None

_active = _compiled if _compiled is not None else reference


def backend_name() -> str:
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def available_backends() -> list:
    names = ["python"]
    if _compiled is not None:
        names.append("compiled")
    return names


def get_backend(name: str = "active"):
    """Module implementing the kernel API (mixture_values, mixture_jets,
    mixture_values_grid)."""
    if name in ("active", "auto"):
        return _active
    if name == "python":
        return reference
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel backend is not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def mixture_values(*args, backend="active", **kw):
    return get_backend(backend).mixture_values(*args, **kw)


def mixture_jets(*args, backend="active", **kw):
    return get_backend(backend).mixture_jets(*args, **kw)


def mixture_values_grid(*args, backend="active", **kw):
    return get_backend(backend).mixture_values_grid(*args, **kw)


def prepare_norms(*args, backend="active", **kw):
    return get_backend(backend).prepare_norms(*args, **kw)
