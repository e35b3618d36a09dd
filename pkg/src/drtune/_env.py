"""Process-level numeric environment defaults.

Imported before numpy: the workloads here are many small matrix ops, where
BLAS thread pools only add overhead, and experiments parallelize across
candidate processes instead. Respects any value already set by the user;
the thread settings have no effect if numpy was imported first.

Also raises glibc's mmap threshold: minibatch temporaries (~256 KB) sit
right at the default threshold, and per-op mmap/munmap churn dominates the
update step when the allocator refuses to reuse them.
"""

import ctypes
import os
import sys

if "numpy" not in sys.modules:
    for _var in (
        "OPENBLAS_NUM_THREADS",
        "OMP_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(_var, "1")

# Inherited by worker processes, whose glibc reads these at startup.
os.environ.setdefault("MALLOC_MMAP_THRESHOLD_", str(8 * 1024 * 1024))
os.environ.setdefault("MALLOC_TRIM_THRESHOLD_", str(32 * 1024 * 1024))

try:
    _libc = ctypes.CDLL(None)
    _libc.mallopt(-3, 8 * 1024 * 1024)  # M_MMAP_THRESHOLD
    _libc.mallopt(-1, 32 * 1024 * 1024)  # M_TRIM_THRESHOLD
except (OSError, AttributeError):
    pass
