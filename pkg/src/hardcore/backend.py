"""Kernel backend selection.

The hot numeric kernels in :mod:`hardcore.kernels` exist twice: a numba
@njit build and a pure-numpy fallback. Which build runs is decided once at
import time from the ``HARDCORE_BACKEND`` environment variable:

* ``auto`` (default) — numba if it imports, else numpy with a warning
* ``numba``          — require numba, raise if unavailable
* ``numpy``          — force the fallback (useful for debugging and for the
  kernel benchmark)
"""

from __future__ import annotations

import os
import warnings

ENV_VAR = "HARDCORE_BACKEND"
_CHOICES = ("auto", "numba", "numpy")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def select_backend() -> str:
    """Resolve the backend name ("numba" or "numpy") from the environment."""
    requested = os.environ.get(ENV_VAR, "auto").strip().lower()
    if requested not in _CHOICES:
        raise ValueError(
            f"{ENV_VAR}={requested!r} is not one of {_CHOICES}"
        )
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if not _numba_available():
            raise ImportError(
                f"{ENV_VAR}=numba but numba is not importable"
            )
        return "numba"
    if _numba_available():
        return "numba"
    warnings.warn(
        "numba not available, falling back to pure-numpy kernels "
        f"(set {ENV_VAR}=numpy to silence)",
        RuntimeWarning,
        stacklevel=2,
    )
    return "numpy"
