"""Kernel backend selection.

The compiled extension is used when importable; otherwise (or when the
environment variable ``ACIMTOOLS_PURE`` is set to a non-empty value other
than ``0``) the numpy fallback is used.  ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

KIND_NEUTRAL_1D = 0
KIND_EXAMPLE1 = 1
KIND_EXAMPLE2 = 2


def _load():
    if os.environ.get("ACIMTOOLS_PURE", "0") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "compiled"


_impl, BACKEND = _load()

escape_local = _impl.escape_local
inverse_orbit = _impl.inverse_orbit
orbit_histogram_1d = _impl.orbit_histogram_1d
