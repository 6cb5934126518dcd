"""Kernel backend selection.

The compiled extension is preferred; the pure-Python module is the
drop-in fallback. Set FASTERTUCKER_BACKEND=python or =c to force one
(forcing the compiled backend raises if it is not built). Both backends
produce bit-identical parameters.
"""

import os

_forced = os.environ.get("FASTERTUCKER_BACKEND", "").lower()

if _forced in ("python", "py"):
    from . import _pykern as impl

    COMPILED = False
elif _forced in ("c", "compiled", "ext"):
    from . import _ckern as impl  # type: ignore[no-redef]

    COMPILED = True
elif _forced:
    raise RuntimeError(f"unknown FASTERTUCKER_BACKEND={_forced!r} (use 'c' or 'python')")
else:
    try:
        from . import _ckern as impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        from . import _pykern as impl

        COMPILED = False

BACKEND = impl.BACKEND


def get_backend(name: str):
    """Return the kernel module for an explicit backend name."""
    if name in ("python", "py"):
        from . import _pykern

        return _pykern
    if name in ("c", "compiled", "ext"):
        from . import _ckern

        return _ckern
    raise ValueError(f"unknown backend {name!r}")


def current_backend() -> str:
    return impl.BACKEND


from contextlib import contextmanager


@contextmanager
def use_backend(name: str):
    """Temporarily run all sweeps on the named kernel backend."""
    global impl
    previous = impl
    impl = get_backend(name)
    try:
        yield impl
    finally:
        impl = previous
