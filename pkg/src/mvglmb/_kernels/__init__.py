"""Hot-loop kernels: compiled core with a pure-NumPy fallback.

Two implementations of the same two kernels live here:

* ``_core`` — Cython extension (built by setup.py).
* ``pure`` — NumPy/Python fallback with identical semantics.

Both consume one pregenerated uniform stream with a fixed draw pattern
(1 + n_cameras draws per row per sweep), so for equal inputs they produce
bit-identical association samples.  Selection happens at import: the
compiled module is preferred unless it is missing or ``MVGLMB_PURE=1``.
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("MVGLMB_PURE", "0") == "1":
    _impl = pure
    IMPLEMENTATION = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        IMPLEMENTATION = "compiled"
    except ImportError:
        _impl = pure
        IMPLEMENTATION = "python"

gibbs_sweeps = _impl.gibbs_sweeps
shadow_pair_matrix = _impl.shadow_pair_matrix


def get_impl(name: str = "auto"):
    """Return the kernel namespace for ``name`` in {auto, compiled, python}."""
    if name == "auto":
        return _impl
    if name == "python":
        return pure
    if name == "compiled":
        from . import _core  # raises ImportError if not built

        return _core
    raise ValueError(f"unknown kernel implementation {name!r}")
