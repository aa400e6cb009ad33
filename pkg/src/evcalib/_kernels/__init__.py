"""Kernel backend selection.

The compiled Cython backend is preferred; the pure-numpy fallback is used
when the extension is unavailable or EVCALIB_PURE_PYTHON is set. Both expose
the same functions and produce bit-identical results.
"""

import os

if os.environ.get("EVCALIB_PURE_PYTHON"):
    from . import _ref as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _ref as _impl

        BACKEND = "python"

build_sae_maps = _impl.build_sae_maps
estimate_flow_fields = _impl.estimate_flow_fields
label_components = _impl.label_components
ransac_plane = _impl.ransac_plane
rng_draws = _impl.rng_draws

__all__ = [
    "BACKEND",
    "build_sae_maps",
    "estimate_flow_fields",
    "label_components",
    "ransac_plane",
    "rng_draws",
]
