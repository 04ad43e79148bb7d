"""Model-free data assimilation with delay-embedding state reconstruction."""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "bench",
    "cli",
    "config",
    "dmd",
    "embedding",
    "ensemble_filter",
    "models",
    "pipeline",
    "reconstruction",
    "serialize",
)


def __getattr__(name):
    # Submodules load lazily so the CLI can cap BLAS threads before numpy
    # is imported.
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
