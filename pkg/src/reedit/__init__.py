"""reedit: detection and attribution of AI image edits via re-editing.

Given a base image, a suspicious image, and a registry of n candidate
editing models, the pipeline re-edits both images through every candidate
with a caption-derived proxy prompt, measures six similarity metrics per
re-edited image against the suspicious image, and classifies the resulting
12n-dimensional feature vector as non-edited / edited-by-model-i /
edited-by-unseen-model.
"""

__version__ = "0.1.0"

from .core import (
    Decision,
    ImageBuffer,
    Manifest,
    PairRecord,
    Verdict,
    load_image,
    load_manifest,
    resize_canonical,
    save_image,
    save_manifest,
)
from .backends import BackendRegistry, load_registry, make_simulated_registry
from .features import (
    FeatureTable,
    FeatureVector,
    build_feature_table,
    build_proxy_prompt,
    extract_features,
    slice_features,
)
from .classifier import (
    MlpModel,
    TrainConfig,
    calibrate_unseen,
    load_model,
    predict,
    predict_with_unseen,
    save_model,
    train_bin,
    train_bin_multiple,
    train_multiclass,
)

__all__ = [
    "Decision",
    "ImageBuffer",
    "Manifest",
    "PairRecord",
    "Verdict",
    "BackendRegistry",
    "FeatureTable",
    "FeatureVector",
    "MlpModel",
    "TrainConfig",
    "build_feature_table",
    "build_proxy_prompt",
    "calibrate_unseen",
    "extract_features",
    "load_image",
    "load_manifest",
    "load_model",
    "load_registry",
    "make_simulated_registry",
    "predict",
    "predict_with_unseen",
    "resize_canonical",
    "save_image",
    "save_manifest",
    "save_model",
    "slice_features",
    "train_bin",
    "train_bin_multiple",
    "train_multiclass",
    "__version__",
]
