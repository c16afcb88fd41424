"""Kernel backend selection.

The compiled Cython backend is preferred when present; the numpy fallback is
always available.  Set JULIADIM_BACKEND=numpy (or =compiled) to force one —
forcing the compiled backend raises if the extension is missing.
"""

import os

_choice = os.environ.get("JULIADIM_BACKEND", "").strip().lower()

if _choice in ("np", "numpy", "pure"):
    from juliadim.kernels import _np as _impl

    BACKEND = "numpy"
elif _choice in ("", "cy", "compiled", "cython"):
    try:
        from juliadim.kernels import _cy as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _choice:
            raise
        from juliadim.kernels import _np as _impl

        BACKEND = "numpy"
else:
    raise RuntimeError(f"unknown JULIADIM_BACKEND={_choice!r} (want 'compiled' or 'numpy')")

iterate_points = _impl.iterate_points
escape_dem = _impl.escape_dem
phi_orbit = _impl.phi_orbit
psi_push = _impl.psi_push
