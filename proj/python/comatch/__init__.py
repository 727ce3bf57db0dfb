"""Combined-attention sentence matching: python surface over the C++ core.

The heavy lifting (autodiff, the attention mechanism, the encoder, training)
lives in the compiled extension; this package re-exports the main operations.
"""

from ._core import (  # noqa: F401
    ShapeError,
    ValueError,
    __version__,
    affinity_matrix,
    attend,
    compose,
    default_config,
    difference_matrix,
    generate,
    gradcheck_attend,
    normalize_difference,
    pairwise_l1,
    softmax_rows,
    token_names,
    train_toy,
)

__all__ = [
    "ShapeError",
    "ValueError",
    "__version__",
    "affinity_matrix",
    "attend",
    "compose",
    "default_config",
    "difference_matrix",
    "generate",
    "gradcheck_attend",
    "normalize_difference",
    "pairwise_l1",
    "softmax_rows",
    "token_names",
    "train_toy",
]
