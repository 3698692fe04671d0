"""Shared helpers for the check scripts in this directory.

Each ``scripts/test_*.py`` defines ``test_*`` functions that call ``check``
and ends with ``sys.exit(run_all(globals()))``. The same files are
collectable by pytest.
"""

import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)


def check(label, condition, detail=""):
    status = "ok" if condition else "FAIL"
    print(f"  [{status}] {label}{(' - ' + detail) if detail and not condition else ''}")
    if not condition:
        raise AssertionError(f"{label}: {detail}" if detail else label)


def raises(exc_type, fn, *args, **kwargs):
    """True if ``fn(*args, **kwargs)`` raises ``exc_type``."""
    try:
        fn(*args, **kwargs)
    except exc_type:
        return True
    return False


def rel_error(a, b):
    import numpy as np
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)


def run_all(namespace) -> int:
    tests = [(name, fn) for name, fn in namespace.items() if name.startswith("test_") and callable(fn)]
    failures = []
    for name, fn in tests:
        print(f"{name}:")
        try:
            fn()
        except Exception as e:
            failures.append(name)
            print(f"  [FAIL] {type(e).__name__}: {e}")
    print()
    if failures:
        print(f"{len(failures)} of {len(tests)} tests failed: {', '.join(failures)}")
        return 1
    print(f"All {len(tests)} tests passed.")
    return 0
