"""Sparse mutually exciting network estimation.

The compiled extension carries the full API; this package re-exports it.
"""

try:
    # installed-wheel layout: the extension sits inside the package
    from hawkesnet._hawkesnet import *  # noqa: F401,F403
except ImportError:
    # development layout: the extension is on sys.path (CMake build tree)
    from _hawkesnet import *  # noqa: F401,F403
