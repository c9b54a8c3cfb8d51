"""polymp: shape classification of 2D vector polygons.

A numpy-backed library with four small architectures over polygon graphs
(message passing, set pooling, graph convolution, 1D convolution), a
reverse-mode autodiff engine sized for them, a synthetic letter-shape
dataset with label-preserving augmentations, and a reproducible training
and evaluation pipeline. See README.md for a tour and the `polymp` CLI.
"""

import os as _os

# Tiny matrices dominate here; single-threaded BLAS is both faster and
# bit-reproducible. Respect explicit user settings.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"

from . import tensor  # noqa: E402
from .geometry import (  # noqa: E402
    Point2,
    Polygon,
    TransformTag,
    centroid,
    normalize,
    parse_geojson_features,
    parse_wkt,
    rotate,
    scale,
    serialize_geojson_features,
    serialize_wkt,
    shear,
    simplify_dp,
    translate,
)
from .graph import (  # noqa: E402
    EdgeWeights,
    PolyGraph,
    encode_graph,
    laplacian_weights,
    permute_graph,
    to_padded_sequence,
)
from .models import (  # noqa: E402
    ARCHS,
    ModelConfig,
    ModelParams,
    default_config,
    forward_logits,
    init_params,
    load_checkpoint,
    node_saliency,
    save_checkpoint,
)
from .dataset import (  # noqa: E402
    DEFAULT_CLASS_NAMES,
    RATIOS,
    Dataset,
    Sample,
    build_ratio_split,
    build_simplified_view,
    densify,
    generate_base_samples,
    generate_test_set,
    load_dataset,
    save_dataset,
)
from .training import (  # noqa: E402
    AdamState,
    EvalReport,
    TrainConfig,
    adam_step,
    early_stop,
    evaluate,
    fine_tune,
    lr_on_plateau,
    train,
)
from .gradcheck import finite_difference_check, model_gradcheck  # noqa: E402

__all__ = [
    "ARCHS",
    "AdamState",
    "DEFAULT_CLASS_NAMES",
    "Dataset",
    "EdgeWeights",
    "EvalReport",
    "ModelConfig",
    "ModelParams",
    "Point2",
    "PolyGraph",
    "Polygon",
    "RATIOS",
    "Sample",
    "TrainConfig",
    "TransformTag",
    "adam_step",
    "build_ratio_split",
    "build_simplified_view",
    "centroid",
    "default_config",
    "densify",
    "early_stop",
    "encode_graph",
    "evaluate",
    "fine_tune",
    "finite_difference_check",
    "forward_logits",
    "generate_base_samples",
    "generate_test_set",
    "init_params",
    "laplacian_weights",
    "load_checkpoint",
    "load_dataset",
    "lr_on_plateau",
    "model_gradcheck",
    "node_saliency",
    "normalize",
    "parse_geojson_features",
    "parse_wkt",
    "permute_graph",
    "rotate",
    "save_checkpoint",
    "save_dataset",
    "scale",
    "serialize_geojson_features",
    "serialize_wkt",
    "shear",
    "simplify_dp",
    "tensor",
    "to_padded_sequence",
    "train",
    "translate",
]
