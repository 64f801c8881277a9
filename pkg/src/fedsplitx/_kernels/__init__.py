"""Kernel backend selection.

The package ships two interchangeable kernel sets: a compiled Cython core
(`_fastkern`) and a pure-numpy fallback. The compiled one is used when it
imported successfully; the environment variable FEDSPLITX_BACKEND
("compiled" or "numpy") forces a choice. `use()` switches at runtime, which
the backend benchmark relies on.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import numpy_backend

try:
    from . import _fastkern
except ImportError:
    _fastkern = None

_BACKENDS = {"numpy": numpy_backend}
if _fastkern is not None:
    _BACKENDS["compiled"] = _fastkern


def available() -> list[str]:
    return sorted(_BACKENDS)


def _initial() -> str:
    forced = os.environ.get("FEDSPLITX_BACKEND", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise RuntimeError(
                f"FEDSPLITX_BACKEND={forced!r} not available; "
                f"choices: {available()}"
            )
        return forced
    return "compiled" if "compiled" in _BACKENDS else "numpy"


_active_name = _initial()


def active():
    """Return the active backend module."""
    return _BACKENDS[_active_name]


def active_name() -> str:
    return _active_name


def set_backend(name: str) -> None:
    global _active_name
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choices: {available()}")
    _active_name = name


@contextmanager
def use(name: str):
    """Temporarily switch the active backend."""
    prev = _active_name
    set_backend(name)
    try:
        yield _BACKENDS[name]
    finally:
        set_backend(prev)
