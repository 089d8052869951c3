"""Convolution kernel backend selection.

Two interchangeable implementations exist:

* ``native`` - direct-loop kernels compiled from ``_native.pyx``
* ``python`` - vectorized numpy im2col/GEMM kernels

The compiled module is preferred when present; set ``DAGF_BACKEND`` to
``native``, ``python`` or ``auto`` to override.  Both expose the same three
functions (`conv2d_forward`, `conv2d_grad_input`, `conv2d_grad_kernel`)
and agree to 1e-6; the test suite asserts this whenever the extension is
built.  Benchmarks comparing the two live in ``benchmarks/``.
"""

import os

from . import _conv_numpy
from .errors import ConfigError

try:
    from . import _native
except ImportError:
    _native = None


def _select(choice):
    if choice == "python":
        return _conv_numpy, "python"
    if choice == "native":
        if _native is None:
            raise ConfigError(
                "DAGF_BACKEND=native but the compiled extension is not built; "
                "run `python setup.py build_ext --inplace`"
            )
        return _native, "native"
    if choice == "auto":
        if _native is not None:
            return _native, "native"
        return _conv_numpy, "python"
    raise ConfigError(f"unknown DAGF_BACKEND value {choice!r} (use auto|native|python)")


_impl, _name = _select(os.environ.get("DAGF_BACKEND", "auto"))


def active_backend():
    """Name of the kernel backend in use: 'native' or 'python'."""
    return _name


def has_native():
    return _native is not None


def get_backend(name):
    """Return the kernel module for an explicit backend name (testing/benchmarks)."""
    return _select(name)[0]


conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_kernel = _impl.conv2d_grad_kernel
