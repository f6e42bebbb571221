"""Backend switch for the hot kernels.

Set ``INCARPOSE_DISABLE_NUMBA=1`` to run the pure-numpy fallbacks instead of
the numba-compiled loops. The flag is read once at import time.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}

NUMBA_DISABLED = os.environ.get("INCARPOSE_DISABLE_NUMBA", "0").strip().lower() not in _FALSY

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED

NUMBA_OPTS = {"cache": True, "nogil": True}
