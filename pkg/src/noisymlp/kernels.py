"""Backend selection for the elementwise kernels.

The compiled Cython module is used when importable; otherwise the pure
numpy implementations take over. Set ``NOISYMLP_KERNELS`` to ``python``
or ``compiled`` to force a backend (``compiled`` raises if the extension
is missing), or leave it at ``auto``.
"""
import os

from noisymlp import _kernels_py

_choice = os.environ.get("NOISYMLP_KERNELS", "auto")
if _choice not in ("auto", "compiled", "python"):
    raise ImportError(
        f"NOISYMLP_KERNELS must be auto, compiled or python, got {_choice!r}")

if _choice == "python":
    _impl = _kernels_py
else:
    try:
        from noisymlp import _ckernels as _impl
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "compiled"

RELU = _impl.RELU
SIGMOID = _impl.SIGMOID
TANH = _impl.TANH
LINEAR = _impl.LINEAR

act_forward = _impl.act_forward
act_backward = _impl.act_backward
zero_masked = _impl.zero_masked
adadelta_update = _impl.adadelta_update
