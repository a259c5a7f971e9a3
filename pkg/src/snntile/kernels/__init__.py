"""Hot loops, in two interchangeable flavours.

``*_nb`` modules hold numba ``@njit`` kernels written as explicit loops;
``*_np`` modules hold pure-numpy equivalents. The backend is chosen by the
``SNNTILE_BACKEND`` environment variable (``numba`` or ``numpy``), defaulting
to numba when it imports. Both flavours return bit-identical results.
"""
import importlib
import os
import warnings

ENV_VAR = "SNNTILE_BACKEND"
BACKENDS = ("numba", "numpy")


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def resolve_backend(name: str | None = None) -> str:
    name = (name or os.environ.get(ENV_VAR) or "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")
    if name == "numba" and not numba_available():
        warnings.warn("numba not importable, falling back to numpy kernels")
        name = "numpy"
    return name


def behavior(backend: str | None = None):
    suffix = "nb" if resolve_backend(backend) == "numba" else "np"
    return importlib.import_module(f"{__name__}.behavior_{suffix}")


def pipeline(backend: str | None = None):
    suffix = "nb" if resolve_backend(backend) == "numba" else "np"
    return importlib.import_module(f"{__name__}.pipeline_{suffix}")
