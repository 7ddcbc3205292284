"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The backend is picked once at import time. ``EWCLAB_KERNELS`` forces it:
``c`` requires the compiled extension (built via ``python setup.py
build_ext --inplace``), ``py`` forces the numpy fallback, ``auto``
(default) prefers the extension when present.
"""

import os

_choice = os.environ.get("EWCLAB_KERNELS", "auto").lower()

if _choice not in ("auto", "c", "py"):
    raise ValueError(f"EWCLAB_KERNELS must be auto, c or py, got {_choice!r}")

if _choice == "py":
    from . import _pykernels as _impl

    BACKEND = "py"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise
        from . import _pykernels as _impl

        BACKEND = "py"

adam_update = _impl.adam_update
ewc_terms = _impl.ewc_terms
perplexity_calibrate = _impl.perplexity_calibrate
pairwise_sq_dists = _impl.pairwise_sq_dists
student_terms = _impl.student_terms
