"""Python bindings for the hayama sub-signature toolkit."""

from ._hayama import (
    Automaton,
    Catalog,
    __version__,
    generate_synthetic,
    lasso_select,
    pls_max_correlation,
    roc,
    run_pipeline,
)

__all__ = [
    "Automaton",
    "Catalog",
    "generate_synthetic",
    "lasso_select",
    "pls_max_correlation",
    "roc",
    "run_pipeline",
    "__version__",
]
