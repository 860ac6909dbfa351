"""Backend dispatch for the numeric hot kernels.

Two interchangeable implementations exist:

* ``numba_impl`` -- loop kernels compiled with ``@njit(cache=True)``.
* ``numpy_impl`` -- vectorized pure-numpy reference implementations.

The active backend is chosen once at import time from the environment
variable ``SCHEDPRICE_BACKEND``:

* ``auto`` (default): numba if importable, else numpy.
* ``numba``: require numba, raise if unavailable.
* ``numpy``: force the pure-numpy path.

Both backends implement the same signatures and agree to floating-point
noise; ``tests/test_kernels.py`` asserts the equivalence and
``benchmarks/bench_kernels.py`` compares their speed.
"""

import os

_requested = os.environ.get("SCHEDPRICE_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"SCHEDPRICE_BACKEND={_requested!r} not understood; "
        "expected 'auto', 'numba', or 'numpy'"
    )

if _requested == "numpy":
    from . import numpy_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import numpy_impl as _impl

        BACKEND = "numpy"

reference_prices_batch = _impl.reference_prices_batch
mnl_probabilities = _impl.mnl_probabilities
mnl_nll_grad = _impl.mnl_nll_grad
two_param_objective_grid = _impl.two_param_objective_grid

__all__ = [
    "BACKEND",
    "reference_prices_batch",
    "mnl_probabilities",
    "mnl_nll_grad",
    "two_param_objective_grid",
]
