"""Hot elementwise kernels with a compiled fast path.

At import time we try the Cython extension (`_fastops`); if it was not
built (or fails to load) the pure-numpy fallback in `_pyops` is used.
Both backends implement the same contracts; `benchmarks/bench_kernels.py`
compares their throughput.
"""

try:
    from . import _fastops as _impl

    BACKEND = "cython"
except ImportError:  # extension not built on this platform
    from . import _pyops as _impl

    BACKEND = "numpy"

from . import _pyops

gelu_forward = _impl.gelu_forward
gelu_backward = _impl.gelu_backward
adamw_update = _impl.adamw_update


def use_backend(name: str):
    """Force a backend ('cython' or 'numpy'); used by the benchmark."""
    global gelu_forward, gelu_backward, adamw_update
    if name == "numpy":
        mod = _pyops
    elif name == "cython":
        from . import _fastops as mod
    else:
        raise ValueError(f"unknown kernel backend: {name}")
    gelu_forward = mod.gelu_forward
    gelu_backward = mod.gelu_backward
    adamw_update = mod.adamw_update
    return mod
