"""Desk-scale laboratory for group-normalized reward-matching objectives.

The compiled extension carries the whole API; this package just finds it,
whether installed as a wheel (giftlab._core) or imported from a development
tree with the build directory on PYTHONPATH (bare _core).
"""

try:
    from giftlab._core import (
        __version__,
        default_config,
        evaluate,
        gift_loss_value,
        group_normalize,
        train,
        z_cancellation_check,
    )
except ImportError:
    from _core import (
        __version__,
        default_config,
        evaluate,
        gift_loss_value,
        group_normalize,
        train,
        z_cancellation_check,
    )

__all__ = [
    "__version__",
    "default_config",
    "evaluate",
    "gift_loss_value",
    "group_normalize",
    "train",
    "z_cancellation_check",
]
