"""Radial lens distortion toolkit.

Forward/inverse polynomial distortion math in a focal- and
resolution-independent parameterization, synthetic distorted-crop
generation from equirectangular panoramas, a distortion-area loss, a small
convolutional estimator of the two leading coefficients, image
rectification, and an evaluation harness.
"""

from .distortion import (
    DEFAULT_R_MAX,
    CameraIntrinsics,
    CoordScale,
    InversePolynomial,
    RadialDistortion,
    apparent_from_normalized,
    distort_point,
    distortion_factor,
    inverse_coefficients,
    is_monotonic,
    manifold_k2,
    rescale,
    roundtrip_error,
    undistort_point_newton,
    undistort_point_poly,
)
from .errors import (
    DataError,
    DomainError,
    FoldedDistortionError,
    IterationError,
    NumericError,
    RadistortError,
    TrainingError,
)
from .imaging import (
    RemapField,
    build_undistort_remap,
    read_image,
    rectify,
    remap,
    resize_bilinear,
    sample_bilinear,
    write_image,
)
from .loss import RadiusGrid, default_grid, distortion_loss, loss_gradient, split_loss
from .panorama import (
    CropParams,
    SamplingSpec,
    generate_dataset,
    procedural_panorama,
    render_crop,
    sample_crop_params,
)
from .weights_io import Weights, load_weights, save_weights

__version__ = "0.1.0"
