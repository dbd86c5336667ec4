"""Bidirectional stereo image codec."""

from ._core import (
    CoderError,
    Error,
    FormatError,
    IntegrityError,
    IoError,
    Model,
    OverlapError,
    ParameterError,
    ShapeError,
    TrainingFault,
    bd_quality,
    bd_rate,
    bpp,
    ms_ssim,
    psnr,
    selftest,
    synthetic_pair,
)

__version__ = "0.1.0"
