"""Select the compiled objective kernel if present, else the NumPy one.

Set ``GPGROUND_BACKEND=python`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("GPGROUND_BACKEND", "").lower() != "python":
    try:
        from ._core import segment_term  # noqa: F401
        BACKEND = "cython"
    except ImportError:
        from ._pycore import segment_term  # noqa: F401
else:
    from ._pycore import segment_term  # noqa: F401

from . import _pycore as python_backend  # noqa: E402,F401
