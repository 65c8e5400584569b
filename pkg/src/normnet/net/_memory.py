"""Allocator tuning so hot loops reuse warm pages.

Training repeatedly allocates and frees multi-hundred-MB column matrices.
glibc returns blocks that large to the kernel on free, so every step pays
first-touch page faults again; on some hosts that dwarfs the actual math.
Keeping freed blocks in the process heap makes step times stable.
"""

from __future__ import annotations

import ctypes
import ctypes.util

_M_TRIM_THRESHOLD = -1
_M_MMAP_MAX = -4

_done = False


def retain_freed_memory() -> bool:
    """Keep freed malloc blocks in-process instead of unmapping them.

    Returns True if the allocator accepted the hint. Safe no-op on
    platforms without glibc mallopt. Idempotent.
    """
    global _done
    if _done:
        return True
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6",
                           use_errno=True)
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    mallopt.argtypes = (ctypes.c_int, ctypes.c_int)
    mallopt.restype = ctypes.c_int
    ok = mallopt(_M_MMAP_MAX, 0) == 1 and mallopt(_M_TRIM_THRESHOLD, -1) == 1
    _done = bool(ok)
    return _done
