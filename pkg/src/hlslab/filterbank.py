"""ERB-spaced gammatone analysis filterbank and framewise level estimation.

The bank is linear: channel filters are finite impulse responses of the
classic 4th-order gammatone, spaced uniformly on the ERB-number scale and
normalized to unit gain at their center frequency.  All level dependence
of the simulation lives downstream in the reduction functions, not here.

Each channel's carrier is phased so that it crosses zero phase at the
envelope peak; advancing a channel by its envelope-peak delay therefore
phase-aligns the bank for resynthesis by summation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import oaconvolve
from scipy.signal.windows import hann

__all__ = [
    "FilterbankSpec",
    "GammatoneBank",
    "ChannelSignals",
    "LevelFrames",
    "erb_bandwidth",
    "erb_number",
    "erb_number_to_hz",
    "erb_space",
    "design_filterbank",
    "analyze",
    "estimate_levels",
]

# Glasberg & Moore ERB constants; 1.019 is the usual gammatone bandwidth factor.
_ERB_Q = 4.37 / 1000.0
_ERB_MIN = 24.7
_BW_FACTOR = 1.019

DEFAULT_FRAME_HOP = 0.001
DEFAULT_FRAME_LEN = 0.002
# Digital RMS 1.0 corresponds to 30 dB SPL unless recalibrated.
DEFAULT_CALIBRATION_DB = 30.0
DEFAULT_LEVEL_FLOOR_DB = -20.0


def erb_bandwidth(fc) -> float | np.ndarray:
    """Equivalent rectangular bandwidth (Hz) of the auditory filter at ``fc``."""
    fc = np.asarray(fc, dtype=float)
    if np.any(fc <= 0):
        raise ValueError("fc must be positive")
    out = _ERB_MIN * (_ERB_Q * fc + 1.0)
    return float(out) if out.ndim == 0 else out


def erb_number(f) -> float | np.ndarray:
    """Position of frequency ``f`` on the ERB-number scale."""
    out = 21.4 * np.log10(_ERB_Q * np.asarray(f, dtype=float) + 1.0)
    return float(out) if out.ndim == 0 else out


def erb_number_to_hz(e) -> float | np.ndarray:
    out = (np.power(10.0, np.asarray(e, dtype=float) / 21.4) - 1.0) / _ERB_Q
    return float(out) if out.ndim == 0 else out


def erb_space(f_lo: float, f_hi: float, n: int) -> np.ndarray:
    """``n`` frequencies uniformly spaced on the ERB-number scale, endpoints
    included."""
    return erb_number_to_hz(np.linspace(erb_number(f_lo), erb_number(f_hi), n))


@dataclass(frozen=True)
class FilterbankSpec:
    sample_rate: float
    n_channels: int = 100
    f_lo: float = 100.0
    f_hi: float = 8000.0
    filter_order: int = 4

    def __post_init__(self):
        if self.n_channels < 2:
            raise ValueError("need at least 2 channels")
        if not (0 < self.f_lo < self.f_hi < self.sample_rate / 2):
            raise ValueError("require 0 < f_lo < f_hi < sample_rate/2")
        if self.filter_order < 1:
            raise ValueError("filter order must be >= 1")


@dataclass(frozen=True)
class GammatoneBank:
    """Designed bank: FIR taps, per-channel envelope-peak delays (samples)
    and synthesis equalization weights."""

    spec: FilterbankSpec
    center_frequencies: np.ndarray
    taps: np.ndarray  # [channel, tap]
    delays: np.ndarray  # int samples
    synth_weights: np.ndarray

    @property
    def sample_rate(self) -> float:
        return self.spec.sample_rate

    @property
    def n_channels(self) -> int:
        return len(self.center_frequencies)

    def frequency_response(self, nfft: int = 1 << 16) -> tuple[np.ndarray, np.ndarray]:
        """Magnitude responses on an rfft grid: (freqs, |H| [channel, bin])."""
        freqs = np.fft.rfftfreq(nfft, 1.0 / self.sample_rate)
        mags = np.abs(np.fft.rfft(self.taps, nfft, axis=1))
        return freqs, mags


@dataclass(frozen=True)
class ChannelSignals:
    center_frequencies: np.ndarray
    signals: np.ndarray  # [channel, sample]
    sample_rate: float

    def __post_init__(self):
        if self.signals.ndim != 2 or self.signals.shape[0] != len(
            self.center_frequencies
        ):
            raise ValueError("need one signal row per center frequency")


@dataclass(frozen=True)
class LevelFrames:
    """Per-channel, per-frame level estimates in calibrated dB SPL."""

    center_frequencies: np.ndarray
    frame_times: np.ndarray  # frame centers, seconds
    levels: np.ndarray  # [channel, frame]
    floor: float = DEFAULT_LEVEL_FLOOR_DB
    frame_hop: float = DEFAULT_FRAME_HOP
    frame_len: float = DEFAULT_FRAME_LEN

    def __post_init__(self):
        if self.levels.shape != (len(self.center_frequencies), len(self.frame_times)):
            raise ValueError("levels must be [channel, frame]")
        if len(self.frame_times) > 1:
            hops = np.diff(self.frame_times)
            if np.any(hops <= 0) or not np.allclose(hops, hops[0], rtol=1e-9):
                raise ValueError("frame times must increase by a uniform hop")
        if np.any(self.levels < self.floor - 1e-9):
            raise ValueError("levels below the declared floor")


def _gammatone_taps(fc: float, order: int, fs: float, n_taps: int) -> tuple[np.ndarray, int]:
    """FIR gammatone taps and the sample index of the envelope peak.

    The carrier is phased to cross zero phase at the rounded envelope-peak
    sample, so channels advanced by that integer delay sum coherently;
    referencing the true (fractional) peak instead would leave up to half a
    sample of carrier misalignment, several dB of ripple at high channels.
    """
    lam = 2.0 * np.pi * _BW_FACTOR * erb_bandwidth(fc)
    t = np.arange(n_taps) / fs
    t_peak = (order - 1) / lam
    delay = int(round(t_peak * fs))
    env = t ** (order - 1) * np.exp(-lam * t)
    g = env * np.cos(2.0 * np.pi * fc * (t - delay / fs))
    # unit gain at fc
    h_fc = np.sum(g * np.exp(-2j * np.pi * fc * t))
    g = g / np.abs(h_fc)
    return g, delay


def _tap_count(spec: FilterbankSpec) -> int:
    """Taps needed for the slowest (lowest-frequency) envelope to decay to
    1e-5 of its peak."""
    lam = 2.0 * np.pi * _BW_FACTOR * erb_bandwidth(spec.f_lo)
    n = spec.filter_order - 1
    t_peak = n / lam if n else 1.0 / lam
    t = t_peak
    peak = t_peak**n * np.exp(-lam * t_peak) if n else 1.0
    while (t**n) * np.exp(-lam * t) > 1e-5 * peak:
        t *= 1.25
    return min(int(np.ceil(t * spec.sample_rate)), 1 << 14)


def design_filterbank(spec: FilterbankSpec) -> GammatoneBank:
    """Design the bank: ERB-spaced channels, per-channel peak delays, and
    synthesis weights equalizing the delay-compensated sum to unit gain."""
    fcs = erb_space(spec.f_lo, spec.f_hi, spec.n_channels)
    n_taps = _tap_count(spec)
    taps = np.empty((spec.n_channels, n_taps))
    delays = np.empty(spec.n_channels, dtype=int)
    for k, fc in enumerate(fcs):
        taps[k], delays[k] = _gammatone_taps(fc, spec.filter_order, spec.sample_rate, n_taps)

    # Equalize the resynthesis sum: iterate weights against the composite
    # response of the peak-advanced channels, measured at the channel centers.
    # Advancing a channel output by d is a pure phase shift of its response;
    # the pre-peak taps keep contributing (from negative time), so the
    # advance must not be modelled by truncating taps.
    nfft = 1 << max(12, int(np.ceil(np.log2(4 * n_taps))))
    freqs = np.fft.rfftfreq(nfft, 1.0 / spec.sample_rate)
    h_adv = np.fft.rfft(taps, nfft, axis=1)
    h_adv *= np.exp(2j * np.pi * np.outer(delays / spec.sample_rate, freqs))
    weights = np.ones(spec.n_channels)
    for _ in range(8):
        composite = np.abs(weights @ h_adv)
        at_fc = np.interp(fcs, freqs, composite)
        weights = weights / at_fc
    return GammatoneBank(
        spec=spec,
        center_frequencies=fcs,
        taps=taps,
        delays=delays,
        synth_weights=weights,
    )


def analyze(bank: GammatoneBank, signal: np.ndarray, sample_rate: float | None = None) -> ChannelSignals:
    """Filter ``signal`` through every channel of the bank."""
    if sample_rate is not None and sample_rate != bank.sample_rate:
        raise ValueError(
            f"sample rate {sample_rate} does not match bank rate {bank.sample_rate}"
        )
    signal = np.asarray(signal, dtype=float)
    out = np.empty((bank.n_channels, len(signal)))
    for k in range(bank.n_channels):
        out[k] = oaconvolve(signal, bank.taps[k])[: len(signal)]
    return ChannelSignals(
        center_frequencies=bank.center_frequencies,
        signals=out,
        sample_rate=bank.sample_rate,
    )


def _frame_view(x: np.ndarray, hop: int, length: int) -> np.ndarray:
    """Windowless frame matrix [frame, sample] at offsets 0, hop, 2*hop, ...
    covering every input sample; the tail is zero-padded."""
    n = len(x)
    n_frames = max(1, -(-n // hop))
    padded = np.zeros((n_frames - 1) * hop + length)
    padded[:n] = x
    view = np.lib.stride_tricks.sliding_window_view(padded, length)
    return view[:: hop][:n_frames]


def frame_grid(n_samples: int, sample_rate: float, frame_hop: float, frame_len: float) -> np.ndarray:
    """Frame-center times of the analysis/synthesis grid for a signal of
    ``n_samples``."""
    hop = max(1, int(round(frame_hop * sample_rate)))
    length = max(1, int(round(frame_len * sample_rate)))
    if length > n_samples:
        return np.array([n_samples / 2.0 / sample_rate])
    n_frames = max(1, -(-n_samples // hop))
    return (np.arange(n_frames) * hop + length / 2.0) / sample_rate


def estimate_levels(
    channels: ChannelSignals,
    frame_hop: float = DEFAULT_FRAME_HOP,
    frame_len: float = DEFAULT_FRAME_LEN,
    calibration: float = DEFAULT_CALIBRATION_DB,
    floor: float = DEFAULT_LEVEL_FLOOR_DB,
) -> LevelFrames:
    """Hann-weighted RMS level per channel per frame, in calibrated dB.

    A frame longer than the signal degrades to a single whole-signal frame.
    Silent frames sit at ``floor``.
    """
    if not frame_len >= frame_hop > 0:
        raise ValueError("require frame_len >= frame_hop > 0")
    fs = channels.sample_rate
    n = channels.signals.shape[1]
    hop = max(1, int(round(frame_hop * fs)))
    length = max(1, int(round(frame_len * fs)))
    if length > n:
        length = n
        hop = n
    window = hann(length, sym=False) if length > 1 else np.ones(1)
    wsum = window.sum() if window.sum() > 0 else 1.0
    rows = []
    for x in channels.signals:
        frames = _frame_view(x, hop, length)
        power = (frames * frames) @ window / wsum
        rows.append(power)
    power = np.asarray(rows)
    with np.errstate(divide="ignore"):
        levels = 10.0 * np.log10(power) + calibration
    levels = np.maximum(levels, floor)
    n_frames = levels.shape[1]
    frame_times = (np.arange(n_frames) * hop + length / 2.0) / fs
    return LevelFrames(
        center_frequencies=channels.center_frequencies,
        frame_times=frame_times,
        levels=levels,
        floor=floor,
        frame_hop=hop / fs,
        frame_len=length / fs,
    )
