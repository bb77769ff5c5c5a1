"""Cyclic reduction for QBD chains and block tridiagonal Toeplitz systems
with adaptive-rank (HODLR) block arithmetic.

Submodule imports are deferred (PEP 562) so that ``import qbdcr`` stays
free of numpy; the command-line front end relies on this to pin the BLAS
thread count before any numerical module loads.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "SingularBlockError": "linalg",
    "default_split": "linalg",
    "ArithmeticConfig": "hodlr",
    "HMatrix": "hodlr",
    "build_hmatrix": "hodlr",
    "QbdProblem": "qbd",
    "random_qbd": "qbd",
    "spectral_annulus": "qbd",
    "CrState": "cr",
    "cr_step": "cr",
    "cr_solve_G": "cr",
    "SolveReport": "cr",
    "decay_profile": "analysis",
    "decay_bounds": "analysis",
    "delta_estimate": "analysis",
    "lemma_oracles": "analysis",
    "save_problem": "io",
    "load_problem": "io",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(importlib.import_module(f".{module}", __name__), name)


def __dir__():
    return __all__
