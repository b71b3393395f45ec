"""Global working-precision control.

Everything numeric runs through mpmath; the default of 150 decimal digits can
be overridden globally or per call site with the `workdps` context manager.
"""

from __future__ import annotations

import contextlib

import mpmath

DEFAULT_DPS = 150

_current_dps = DEFAULT_DPS


def set_working_dps(dps: int) -> None:
    global _current_dps
    if dps < 15:
        raise ValueError("working precision below 15 digits is not supported")
    _current_dps = dps


def get_working_dps() -> int:
    return _current_dps


@contextlib.contextmanager
def workdps(dps: int | None = None, extra: int = 0):
    """mpmath precision context at the package working precision (plus slack)."""
    target = (dps if dps is not None else _current_dps) + extra
    with mpmath.workdps(target):
        yield mpmath.mp
