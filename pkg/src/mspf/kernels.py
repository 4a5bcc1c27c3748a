"""Backend selection for the hot kernels.

The compiled extension is used when it has been built; otherwise the numpy
implementations are used. Set ``MSPF_BACKEND=python`` to force the fallback
(or ``cython`` to fail loudly when the extension is missing).
"""

import os
from types import SimpleNamespace

from . import _pykernels

_NAMES = ("systematic_select", "multinomial_select", "shift_gather",
          "ecdf_sq_distance", "ecdf_sq_distance_rows")

python = SimpleNamespace(name="python", **{n: getattr(_pykernels, n) for n in _NAMES})

try:
    from . import _kernels as _ext
except ImportError:  # extension not built
    _ext = None
    cython = None
else:
    cython = SimpleNamespace(name="cython", **{n: getattr(_ext, n) for n in _NAMES})


def get_backend(name=None) -> SimpleNamespace:
    """Return the kernel namespace for ``name`` ("python", "cython" or auto)."""
    name = (name or os.environ.get("MSPF_BACKEND", "auto")).lower()
    if name == "python":
        return python
    if name == "cython":
        if cython is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .` or "
                              "`python setup.py build_ext --inplace`")
        return cython
    if name != "auto":
        raise ValueError(f"unknown kernel backend {name!r}")
    return cython if cython is not None else python


def available_backends():
    return [b for b in (python, cython) if b is not None]


default = get_backend()
