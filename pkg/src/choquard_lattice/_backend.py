"""Pick the pair-sum implementation at import time.

The compiled extension is used when it was built; setting the environment
variable ``CHOQUARD_LATTICE_PURE_PYTHON=1`` forces the NumPy fallback.
"""
import importlib
import logging
import os

log = logging.getLogger(__name__)

BACKENDS = ("compiled", "python")


def load(name):
    if name == "compiled":
        return importlib.import_module("choquard_lattice._kernels")
    if name == "python":
        return importlib.import_module("choquard_lattice._kernels_py")
    raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")


def available():
    names = []
    for name in BACKENDS:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    if os.environ.get("CHOQUARD_LATTICE_PURE_PYTHON", "") not in ("", "0"):
        return "python", load("python")
    try:
        return "compiled", load("compiled")
    except ImportError:
        log.info("compiled kernels unavailable; using the NumPy fallback")
        return "python", load("python")


NAME, kernels = _select()


def set_num_threads(n):
    for name in available():
        load(name).set_num_threads(n)
