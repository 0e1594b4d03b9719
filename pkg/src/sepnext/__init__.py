"""Desk-scale engine for separable-convolution audio tagging CNNs.

Submodules are imported lazily so that the CLI can configure BLAS thread
counts before numpy is loaded.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "tensor",
    "ops",
    "frontend",
    "augment",
    "layers",
    "models",
    "checkpoint",
    "profiler",
    "evalkit",
    "trainer",
    "toydata",
    "cli",
    "errors",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
