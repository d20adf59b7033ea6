"""Hot-kernel dispatch: compiled Cython core when available, NumPy otherwise.

The lane is picked once at import. ``HSIGAN_KERNELS=python`` forces the
NumPy fallback, ``HSIGAN_KERNELS=compiled`` demands the extension (raising
if it never built). Everything downstream calls the module-level functions
and stays lane-agnostic.
"""

import os

import numpy as np

from hsigancrf._kernels import reference

try:
    from hsigancrf._kernels import _core
except ImportError:
    _core = None

_mode = os.environ.get("HSIGAN_KERNELS", "auto").lower()
if _mode == "compiled" and _core is None:
    raise ImportError(
        "HSIGAN_KERNELS=compiled but the hsigancrf._kernels._core extension "
        "is not built; reinstall the package or use HSIGAN_KERNELS=python"
    )
_use_compiled = _core is not None and _mode != "python"


def kernel_backend() -> str:
    """Name of the active kernel lane: 'compiled' or 'python'."""
    return "compiled" if _use_compiled else "python"


def _c(a):
    return np.ascontiguousarray(a)


if _use_compiled:

    def band_conv(x, kern, stride, pad):
        return _core.band_conv(_c(x), _c(kern), stride, pad)

    def band_scatter(y, kern, stride, pad, out_bands):
        return _core.band_scatter(_c(y), _c(kern), stride, pad, out_bands)

    def band_kernel_grad(x, g, kb, stride, pad):
        return _core.band_kernel_grad(_c(x), _c(g), kb, stride, pad)

    def plane_conv(x, kern, stride, pad):
        return _core.plane_conv(_c(x), _c(kern), stride, pad)

    def plane_scatter(y, kern, stride, pad, out_h, out_w):
        return _core.plane_scatter(_c(y), _c(kern), stride, pad, out_h, out_w)

    def plane_kernel_grad(x, g, kh, kw, stride, pad):
        return _core.plane_kernel_grad(_c(x), _c(g), kh, kw, stride, pad)

    def crf_message_pass(pos, app, q, theta_alpha, theta_beta):
        return _core.crf_message_pass(
            _c(np.asarray(pos, dtype=np.float64)),
            _c(np.asarray(app, dtype=np.float64)),
            _c(np.asarray(q, dtype=np.float64)),
            float(theta_alpha),
            float(theta_beta),
        )

else:
    band_conv = reference.band_conv
    band_scatter = reference.band_scatter
    band_kernel_grad = reference.band_kernel_grad
    plane_conv = reference.plane_conv
    plane_scatter = reference.plane_scatter
    plane_kernel_grad = reference.plane_kernel_grad
    crf_message_pass = reference.crf_message_pass

__all__ = [
    "kernel_backend",
    "band_conv",
    "band_scatter",
    "band_kernel_grad",
    "plane_conv",
    "plane_scatter",
    "plane_kernel_grad",
    "crf_message_pass",
]
