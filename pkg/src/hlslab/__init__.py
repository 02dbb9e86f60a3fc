"""Hearing-loss simulation toolkit and paired-comparison experiment pipeline."""

from hlslab.audiogram import (
    ActiveGainCalibration,
    AudiogramProfile,
    CompressionHealth,
    HLDecomposition,
    builtin_profile,
    decompose_hl,
    default_calibration,
    interpolate_hl,
    reduction_active,
    reduction_total,
)

__version__ = "0.1.0"
