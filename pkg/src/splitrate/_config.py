"""Global numerical tolerances, overridable per run."""

from contextlib import contextmanager
from dataclasses import dataclass, replace

__all__ = ["Tolerances", "get_tolerances", "set_tolerances", "tolerance_context"]


@dataclass(frozen=True)
class Tolerances:
    membership: float = 1e-10
    orthonormal: float = 1e-12
    root_abs: float = 1e-14
    root_max_iter: int = 200


_current = Tolerances()


def get_tolerances():
    return _current


def set_tolerances(**changes):
    """Replace selected global tolerances and return the previous values."""
    global _current
    previous = _current
    _current = replace(_current, **changes)
    return previous


@contextmanager
def tolerance_context(**changes):
    """Temporarily override tolerances, e.g. ``with tolerance_context(membership=1e-8):``."""
    previous = set_tolerances(**changes)
    try:
        yield get_tolerances()
    finally:
        global _current
        _current = previous
