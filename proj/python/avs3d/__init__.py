# SPDX-License-Identifier: Apache-2.0
"""Auto-vocabulary 3D semantic segmentation."""

from ._core import (
    CountOverflowError,
    FormatError,
    MagicMismatchError,
    MissingResourceError,
    SchemaError,
    Scene,
    SmapParams,
    SyntheticSpace,
    TruncatedPayloadError,
    caption_points,
    caption_to_tags,
    encode_points_oracle,
    evaluate,
    export_ply,
    generate_scene,
    map_vocabulary,
    pillar_masks,
    read_checkpoint,
    read_scene,
    sector_masks,
    segment_scene,
    smap_forward,
    tpss,
    tpss_labels,
    train_smap,
    write_checkpoint,
    write_scene,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
