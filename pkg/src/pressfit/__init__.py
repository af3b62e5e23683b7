"""pressfit: multimodal demonstration retrieval + residual RL for insertion.

A desk-scale pipeline for contact-rich peg insertion: demonstrations carry
tactile grids, audio snippets and end-effector poses; a nearest-neighbor
policy retrieves demonstrated actions from learned (or random-projection)
embeddings; a residual soft actor-critic refines it.  Everything is verified
against a deterministic synthetic insertion simulator.
"""

from pressfit.geometry import (
    DeltaAction,
    NormalizationScales,
    Pose6D,
    action_mse,
    compose,
    delta_between,
    minmax_denormalize,
    minmax_normalize,
)

__version__ = "0.1.0"

__all__ = [
    "DeltaAction",
    "NormalizationScales",
    "Pose6D",
    "action_mse",
    "compose",
    "delta_between",
    "minmax_denormalize",
    "minmax_normalize",
    "__version__",
]
