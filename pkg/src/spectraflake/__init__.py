"""SWIR hyper-spectral polymer flake segmentation toolkit.

Reflectance correction, per-pixel spectral transforms, compact convolutional
segmentation models trained from scratch, overlap-tiled inference and
IoU/precision/recall evaluation, plus a deterministic synthetic scene
generator for end-to-end testing without camera data.
"""

import os as _os

# Honor the thread cap before numpy (and hence any BLAS) is imported.
# Has no effect if numpy was already imported by the embedding process.
_cap = _os.environ.get("SPECTRAFLAKE_THREADS")
if _cap:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _cap)

from .cube import (
    ClassCatalog,
    DEFAULT_CLASS_NAMES,
    HSCube,
    LabelMask,
    ReferenceProfile,
    column_mean,
    default_catalog,
    read_envi,
    read_mask,
    reflectance_correct,
    write_envi,
    write_mask,
)
from .preprocess import Preproc, apply, hyper_hsv_inverse, output_channels
from .nn import AdamState, ConvLayer, adam_step, conv2d_forward, softmax_xent
from .models import (
    ComplexityReport,
    Model,
    ReferenceSpectra,
    build_mlpnet,
    build_plasticnet,
    build_samnet,
    compute_reference_spectra,
    count_complexity,
    load_weights,
    sam_classify_oracle,
    save_weights,
)
from .pipeline import Dataset, TileGrid, TrainConfig, infer_tiled, receptive_field_radius, train
from .metrics import EvalReport, confusion, evaluate, macro, per_class
from .synth import SynthConfig, generate_scene, signature_library

__version__ = "0.1.0"
