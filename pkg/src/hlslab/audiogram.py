"""Hearing profiles and the split of total hearing level into an active
(level-dependent) and a passive (constant) part.

The split is controlled by a compression-health parameter ``alpha`` in
[0, 1]: ``alpha = 1`` means the compressive gain is fully healthy (no
active loss), ``alpha = 0`` means it is completely lost.  The active part
shrinks with presentation level (loudness recruitment); the passive part
is a fixed attenuation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "AudiogramProfile",
    "CompressionHealth",
    "ActiveGainCalibration",
    "HLDecomposition",
    "builtin_profile",
    "default_calibration",
    "interpolate_hl",
    "decompose_hl",
    "reduction_active",
    "reduction_total",
]

# Caps above this many dB are treated as "no cap" (JSON files use null).
_UNCAPPED = 1.0e6


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D sequence")
    return arr


def _loginterp(fc, freqs: np.ndarray, values: np.ndarray):
    """Linear interpolation of ``values`` over log-frequency, holding the
    edge value outside the tabulated range."""
    return np.interp(np.log(fc), np.log(freqs), values)


@dataclass(frozen=True)
class AudiogramProfile:
    """Total hearing level (dB HL) tabulated at audiometric frequencies."""

    frequencies: np.ndarray
    hearing_level: np.ndarray
    name: str = ""

    def __post_init__(self):
        freqs = _as_float_array(self.frequencies, "frequencies")
        levels = _as_float_array(self.hearing_level, "hearing_level")
        if len(freqs) != len(levels):
            raise ValueError("frequencies and hearing_level must have equal length")
        if len(freqs) < 2:
            raise ValueError("profile needs at least two tabulated frequencies")
        if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise ValueError("frequencies must be strictly increasing and positive")
        if np.any(levels < 0) or np.any(levels > 120):
            raise ValueError("hearing levels must lie in [0, 120] dB HL")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "hearing_level", levels)

    @classmethod
    def from_json(cls, path: str | Path) -> "AudiogramProfile":
        data = json.loads(Path(path).read_text())
        return cls(
            frequencies=data["frequencies_hz"],
            hearing_level=data["hearing_level_db"],
            name=data.get("name", Path(path).stem),
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "frequencies_hz": self.frequencies.tolist(),
            "hearing_level_db": self.hearing_level.tolist(),
        }


# Average hearing level of 70-year-old male listeners at the standard
# audiometric octave frequencies (ISO 7029 based).
_PROFILE_70YR = AudiogramProfile(
    frequencies=[125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0],
    hearing_level=[8.0, 8.0, 9.0, 10.0, 19.0, 43.0, 59.0],
    name="70yr",
)


def builtin_profile(name: str) -> AudiogramProfile:
    """Return a profile shipped with the toolkit (currently only ``"70yr"``)."""
    if name == "70yr":
        return _PROFILE_70YR
    raise KeyError(f"unknown built-in profile: {name!r}")


@dataclass(frozen=True)
class CompressionHealth:
    """Fraction of the compressive (active) cochlear process remaining."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= float(self.alpha) <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True)
class ActiveGainCalibration:
    """Per-frequency constants of the active-loss model.

    ``g_cal`` is the maximum active gain available at ``alpha = 0``;
    ``c_cap`` is an absolute ceiling on the active loss; ``l_at`` is the
    threshold level at which the full active reduction applies and
    ``l_ceiling`` the level at which it has shrunk to zero.
    """

    frequencies: np.ndarray
    g_cal: np.ndarray
    c_cap: np.ndarray
    l_at: np.ndarray = field(default=None)
    l_ceiling: float = 100.0

    def __post_init__(self):
        freqs = _as_float_array(self.frequencies, "frequencies")
        g = _as_float_array(self.g_cal, "g_cal")
        cap = np.minimum(_as_float_array(self.c_cap, "c_cap"), _UNCAPPED)
        lat = self.l_at
        if lat is None:
            lat = np.zeros_like(freqs)
        lat = _as_float_array(lat, "l_at")
        if not (len(freqs) == len(g) == len(cap) == len(lat)):
            raise ValueError("calibration arrays must share one frequency grid")
        if np.any(g < 0) or np.any(cap < 0):
            raise ValueError("g_cal and c_cap must be nonnegative")
        if not self.l_ceiling > lat.max():
            raise ValueError("l_ceiling must exceed every threshold level")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "g_cal", g)
        object.__setattr__(self, "c_cap", cap)
        object.__setattr__(self, "l_at", lat)
        object.__setattr__(self, "l_ceiling", float(self.l_ceiling))

    @classmethod
    def from_json(cls, path: str | Path) -> "ActiveGainCalibration":
        data = json.loads(Path(path).read_text())
        cap = [_UNCAPPED if c is None else c for c in data["c_cap_db"]]
        return cls(
            frequencies=data["frequencies_hz"],
            g_cal=data["g_cal_db"],
            c_cap=cap,
            l_at=data.get("l_at_db"),
            l_ceiling=data.get("l_ceiling_db", 100.0),
        )


def default_calibration() -> ActiveGainCalibration:
    """Calibration that reproduces the published 70-yr decomposition table.

    ``g_cal`` is twice the active part of the ``alpha = 0.5`` row; the
    single finite cap (44 dB at 8 kHz) matches the published ``alpha = 0``
    cell there.
    """
    return ActiveGainCalibration(
        frequencies=[125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0],
        g_cal=[16.0, 16.0, 18.0, 20.0, 38.0, 54.0, 54.0],
        c_cap=[_UNCAPPED] * 6 + [44.0],
    )


@dataclass(frozen=True)
class HLDecomposition:
    """Per-frequency split ``hearing_level = hl_act + hl_pas``."""

    frequencies: np.ndarray
    hl_act: np.ndarray
    hl_pas: np.ndarray
    alpha: CompressionHealth

    def __post_init__(self):
        freqs = _as_float_array(self.frequencies, "frequencies")
        act = _as_float_array(self.hl_act, "hl_act")
        pas = _as_float_array(self.hl_pas, "hl_pas")
        if not (len(freqs) == len(act) == len(pas)):
            raise ValueError("decomposition arrays must share one frequency grid")
        if np.any(act < 0) or np.any(pas < 0):
            raise ValueError("hl_act and hl_pas must be nonnegative")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "hl_act", act)
        object.__setattr__(self, "hl_pas", pas)

    @property
    def hl_total(self) -> np.ndarray:
        return self.hl_act + self.hl_pas


def interpolate_hl(profile: AudiogramProfile, fc) -> float | np.ndarray:
    """Hearing level at frequency ``fc``, interpolated on a log-frequency
    axis with edge-hold outside the tabulated range."""
    if np.any(np.asarray(fc) <= 0):
        raise ValueError("fc must be positive")
    out = _loginterp(fc, profile.frequencies, profile.hearing_level)
    return float(out) if np.isscalar(fc) else out


def decompose_hl(
    profile: AudiogramProfile,
    alpha: CompressionHealth | float,
    cal: ActiveGainCalibration | None = None,
) -> HLDecomposition:
    """Split the profile's hearing level into active and passive parts.

    The active part is ``min(hl_total, c_cap, (1 - alpha) * g_cal)`` per
    frequency; the passive part is the remainder.  Calibration constants
    are interpolated log-linearly onto the profile grid when the grids
    differ.
    """
    if not isinstance(alpha, CompressionHealth):
        alpha = CompressionHealth(alpha)
    if cal is None:
        cal = default_calibration()
    freqs = profile.frequencies
    g = _loginterp(freqs, cal.frequencies, cal.g_cal)
    cap = _loginterp(freqs, cal.frequencies, cal.c_cap)
    hl_act = np.minimum.reduce([profile.hearing_level, cap, (1.0 - alpha.alpha) * g])
    hl_act = np.maximum(hl_act, 0.0)
    return HLDecomposition(
        frequencies=freqs,
        hl_act=hl_act,
        hl_pas=profile.hearing_level - hl_act,
        alpha=alpha,
    )


def reduction_active(
    decomp: HLDecomposition,
    cal: ActiveGainCalibration,
    fc,
    level,
) -> float | np.ndarray:
    """Level-dependent active reduction at ``fc`` for a signal at ``level``.

    Equals the full active loss at the threshold level and shrinks
    linearly (in dB) to zero at ``l_ceiling`` — the recruitment ramp.
    ``fc`` and ``level`` broadcast like numpy arrays.
    """
    fc = np.asarray(fc, dtype=float)
    if np.any(fc <= 0):
        raise ValueError("fc must be positive")
    hl_act = _loginterp(fc, decomp.frequencies, decomp.hl_act)
    l_at = _loginterp(fc, cal.frequencies, cal.l_at)
    ramp = (cal.l_ceiling - np.asarray(level, dtype=float)) / (cal.l_ceiling - l_at)
    out = hl_act * np.clip(ramp, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def reduction_total(
    decomp: HLDecomposition,
    cal: ActiveGainCalibration,
    fc,
    level,
) -> float | np.ndarray:
    """Total reduction: active part at this level plus the constant
    passive part."""
    fc = np.asarray(fc, dtype=float)
    out = reduction_active(decomp, cal, fc, level) + _loginterp(
        fc, decomp.frequencies, decomp.hl_pas
    )
    return float(out) if np.ndim(out) == 0 else out
