"""Numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is picked once at import time: numba when importable (the
default), pure numpy when numba is unavailable or when the environment
variable ``PLANESTEREO_NO_NUMBA`` is set to a truthy value.  Both backends
expose the same function names with identical semantics; numpy_backend.py is
the reference implementation.  ``benchmarks/bench_kernels.py`` times the two
side by side.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}


def numba_disabled() -> bool:
    return os.environ.get("PLANESTEREO_NO_NUMBA", "").strip().lower() in _TRUTHY


if numba_disabled():
    from . import numpy_backend as _backend

    HAS_NUMBA = False
else:
    try:
        from . import numba_backend as _backend

        HAS_NUMBA = True
    except ImportError:
        from . import numpy_backend as _backend

        HAS_NUMBA = False

BACKEND_NAME = "numba" if HAS_NUMBA else "numpy"

tq_sums = _backend.tq_sums
plane_mins = _backend.plane_mins
pair_min_gaps = _backend.pair_min_gaps
quad_forms = _backend.quad_forms
mplp_run = _backend.mplp_run
slic_iterate = _backend.slic_iterate
label_components = _backend.label_components
census_transform = _backend.census_transform
census_cost_volume = _backend.census_cost_volume
aggregate_costs = _backend.aggregate_costs
wta_margin = _backend.wta_margin
subpixel_refine = _backend.subpixel_refine
right_argmin = _backend.right_argmin
occlusion_scan = _backend.occlusion_scan
