"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it was built at install time; setting
``NEUROERGO_PURE=1`` forces the fallback. ``BACKEND`` names the active one.
"""
import os

from . import _fallback

_ext = None
if os.environ.get("NEUROERGO_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _ext
    except ImportError:  # extension not built
        _ext = None

BACKEND = "cython" if _ext is not None else "python"
_impl = _ext if _ext is not None else _fallback

im2col_nhwc = _impl.im2col_nhwc
col2im_nhwc = _impl.col2im_nhwc
pt_threshold_scan = _impl.pt_threshold_scan
perplexity_search = _impl.perplexity_search

__all__ = [
    "BACKEND",
    "im2col_nhwc",
    "col2im_nhwc",
    "pt_threshold_scan",
    "perplexity_search",
]
