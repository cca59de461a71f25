"""Python surface of the P3O lab: the driving env, the action grid, and the
default experiment configuration. Training itself lives in the C++ CLI."""

try:
    from ._p3o import (  # installed package layout
        Env,
        default_config_json,
        discretize_action,
        num_action_classes,
        preset_ids,
        undiscretize_action,
    )
except ImportError:  # build-tree layout: _p3o sits on PYTHONPATH
    from _p3o import (
        Env,
        default_config_json,
        discretize_action,
        num_action_classes,
        preset_ids,
        undiscretize_action,
    )

__all__ = [
    "Env",
    "default_config_json",
    "discretize_action",
    "num_action_classes",
    "preset_ids",
    "undiscretize_action",
]
