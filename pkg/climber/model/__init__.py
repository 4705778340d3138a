"""Multi-block adaptive transformer network with bit-wise gating fusion."""

from .bias import TIME_BOUNDARIES, position_bucket, relative_bias, row_positions, time_bucket
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ABLATION_VARIANTS, ModelConfig, ablation_variant, transformer_baseline
from .layers import (
    LayerWeights,
    atl_forward,
    attention_layer,
    bgf_forward,
    head_logits,
    layer_temperature,
    stack_blocks,
    temperature_from_theta,
)
from .masks import batch_masks, build_mask
from .network import (
    BlockInputs,
    ClimberModel,
    RequestBatch,
    batch_for_users,
    block_forward,
    embed,
    forward_logits,
    fuse_and_score,
    prepare_batch,
    score,
)
from .params import Parameters, parameter_shapes

__all__ = [
    "ModelConfig",
    "Parameters",
    "ClimberModel",
    "Checkpoint",
    "LayerWeights",
    "BlockInputs",
    "RequestBatch",
    "ABLATION_VARIANTS",
    "TIME_BOUNDARIES",
    "ablation_variant",
    "transformer_baseline",
    "parameter_shapes",
    "position_bucket",
    "time_bucket",
    "row_positions",
    "relative_bias",
    "build_mask",
    "batch_masks",
    "embed",
    "atl_forward",
    "attention_layer",
    "layer_temperature",
    "temperature_from_theta",
    "block_forward",
    "stack_blocks",
    "bgf_forward",
    "head_logits",
    "fuse_and_score",
    "forward_logits",
    "prepare_batch",
    "batch_for_users",
    "score",
    "save_checkpoint",
    "load_checkpoint",
]
