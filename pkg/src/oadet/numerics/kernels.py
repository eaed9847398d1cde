"""Backend selection for the GRU hot loops.

The compiled extension is used when it imports; otherwise the numpy
reference is used. ``OADET_KERNELS=python`` forces the fallback,
``OADET_KERNELS=native`` makes a missing extension an ImportError.
"""

import os

from . import _kernels_py

_choice = os.environ.get("OADET_KERNELS", "auto").lower()

if _choice == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels_ext as _impl
    except ImportError:
        if _choice == "native":
            raise
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "native"

gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward
gru_generate = _impl.gru_generate
gru_generate_backward = _impl.gru_generate_backward
