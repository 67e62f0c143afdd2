"""Kernel backend selection.

The compiled extension is preferred when importable; set the environment
variable ``GENROM_DISABLE_EXTENSION=1`` to force the numpy reference path
(useful for debugging and for the backend parity benchmark).
"""

from __future__ import annotations

import os

from . import _ref

_ext = None
if not os.environ.get("GENROM_DISABLE_EXTENSION"):
    try:
        from . import _core as _ext  # type: ignore[attr-defined]
    except ImportError:
        _ext = None

if _ext is not None:
    BACKEND = "compiled"
    reduced_force_tangent = _ext.reduced_force_tangent
    newmark_reduced = _ext.newmark_reduced
else:
    BACKEND = "numpy"
    reduced_force_tangent = _ref.reduced_force_tangent
    newmark_reduced = _ref.newmark_reduced

# full-order assembly stays on the numpy path by design
element_elongations = _ref.element_elongations
element_state = _ref.element_state
assemble_force = _ref.assemble_force
assemble_force_tangent = _ref.assemble_force_tangent
newmark_full = _ref.newmark_full

reference = _ref

__all__ = [
    "BACKEND",
    "reference",
    "element_elongations",
    "element_state",
    "assemble_force",
    "assemble_force_tangent",
    "reduced_force_tangent",
    "newmark_full",
    "newmark_reduced",
]
