"""Multimodal cognitive screening toolkit."""

from ._core import (
    FairnessUndefinedError,
    ValidationError,
    __version__,
    accuracy,
    auroc,
    cli,
    evaluate,
    macro_f1,
    make_folds,
    synthesize,
)

__all__ = [
    "FairnessUndefinedError",
    "ValidationError",
    "__version__",
    "accuracy",
    "auroc",
    "cli",
    "evaluate",
    "macro_f1",
    "make_folds",
    "synthesize",
]
