"""Mono WAV reading/writing (PCM 16-bit or IEEE float).

Samples are exchanged as float64 in [-1, 1].  Writing back preserves the
source subtype; PCM-16 output is clipped and the clip count reported.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = ["read_wav", "write_wav"]

_PCM16_SCALE = 32768.0


def read_wav(path: str | Path) -> tuple[np.ndarray, float, str]:
    """Read a mono WAV file; returns (samples, sample_rate, subtype)."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono WAV files are supported")
    if data.dtype == np.int16:
        return data.astype(float) / _PCM16_SCALE, float(rate), "pcm16"
    if data.dtype == np.float32:
        return data.astype(float), float(rate), "float32"
    if data.dtype == np.float64:
        return data.copy(), float(rate), "float64"
    raise ValueError(f"{path}: unsupported sample format {data.dtype}")


def write_wav(
    path: str | Path, samples: np.ndarray, sample_rate: float, subtype: str = "pcm16"
) -> int:
    """Write mono samples; returns the number of clipped samples.

    Float subtypes store out-of-range values untouched (still counted).
    """
    samples = np.asarray(samples, dtype=float)
    n_clipped = int(np.sum(np.abs(samples) > 1.0))
    if subtype == "pcm16":
        clipped = np.clip(samples, -1.0, 32767.0 / _PCM16_SCALE)
        data = np.round(clipped * _PCM16_SCALE).astype(np.int16)
    elif subtype == "float32":
        data = samples.astype(np.float32)
    elif subtype == "float64":
        data = samples
    else:
        raise ValueError(f"unsupported subtype {subtype!r}")
    wavfile.write(str(path), int(round(sample_rate)), data)
    return n_clipped
