"""Synthesis back-ends turning gain trajectories into the simulated signal.

Two routes produce the output:

* DTVF — one minimum-phase FIR is designed per time frame from the
  channel-grid reduction values, convolved with the Hann-windowed frame
  and overlap-added.  A single filter per frame needs no cross-channel
  phase alignment.
* FBAS — classic filterbank analysis/synthesis: per-channel time-varying
  gains, a fixed per-channel delay compensating each filter's envelope
  lag, then summation.  Residual misalignment between channels is an
  inherent property of this route.

Minimum-phase design uses the real-cepstrum folding method: interpolate
the dB target onto the FFT grid, fold the cepstrum of the log magnitude
onto the causal side, and exponentiate back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import oaconvolve
from scipy.signal.windows import hann

from hlslab.audiogram import ActiveGainCalibration, HLDecomposition, reduction_total
from hlslab.filterbank import ChannelSignals, GammatoneBank, LevelFrames

__all__ = [
    "GainTrajectory",
    "MinPhaseFilter",
    "OlaParams",
    "compute_gain_trajectory",
    "design_minphase_fir",
    "synth_dtvf",
    "synth_fbas",
]

DB_TO_LN = np.log(10.0) / 20.0


@dataclass(frozen=True)
class GainTrajectory:
    """Per-channel, per-frame total reduction in dB (applied as -r_total)."""

    center_frequencies: np.ndarray
    frame_times: np.ndarray
    r_total: np.ndarray  # [channel, frame]

    def __post_init__(self):
        if self.r_total.shape != (
            len(self.center_frequencies),
            len(self.frame_times),
        ):
            raise ValueError("r_total must be [channel, frame]")
        if np.any(self.r_total < 0):
            raise ValueError("reductions must be nonnegative")


@dataclass(frozen=True)
class MinPhaseFilter:
    taps: np.ndarray
    design_grid: tuple[np.ndarray, np.ndarray]  # (frequencies, target dB)


@dataclass(frozen=True)
class OlaParams:
    """Overlap-add geometry: Hann window at 50% overlap (exact COLA)."""

    frame_hop: float = 0.001
    frame_len: float = 0.002
    fir_len: int = 128
    fft_size: int = 1024

    def __post_init__(self):
        if abs(self.frame_len - 2.0 * self.frame_hop) > 1e-12:
            raise ValueError("frame_len must equal 2 * frame_hop")
        if not 0 < self.fir_len <= self.fft_size:
            raise ValueError("require 0 < fir_len <= fft_size")


def compute_gain_trajectory(
    levels: LevelFrames,
    decomp: HLDecomposition,
    cal: ActiveGainCalibration,
    spl_to_hl_offset: float = 0.0,
) -> GainTrajectory:
    """Total reduction per channel per frame from the estimated levels.

    ``spl_to_hl_offset`` converts the calibrated dB SPL frames to dB HL
    (identity by default).
    """
    fcs = levels.center_frequencies[:, None]
    level_hl = levels.levels - spl_to_hl_offset
    r = reduction_total(decomp, cal, fcs, level_hl)
    return GainTrajectory(
        center_frequencies=levels.center_frequencies,
        frame_times=levels.frame_times,
        r_total=np.asarray(r),
    )


def _interp_targets_to_bins(
    target_freqs: np.ndarray, target_db: np.ndarray, fft_size: int, sample_rate: float
) -> np.ndarray:
    """Log-frequency linear interpolation of dB targets onto rfft bins.

    Edge values are held outside the target range, so DC and Nyquist take
    the nearest target.  ``target_db`` may be a matrix [batch, target].
    """
    bins = np.fft.rfftfreq(fft_size, 1.0 / sample_rate)
    with np.errstate(divide="ignore"):
        logb = np.log(bins)
    logt = np.log(target_freqs)
    idx = np.clip(np.searchsorted(logt, logb), 1, len(logt) - 1)
    lo, hi = idx - 1, idx
    w = (logb - logt[lo]) / (logt[hi] - logt[lo])
    w = np.clip(w, 0.0, 1.0)
    t = np.atleast_2d(target_db)
    out = t[:, lo] * (1.0 - w) + t[:, hi] * w
    return out


def _minphase_taps(db_bins: np.ndarray, fir_len: int, fft_size: int) -> np.ndarray:
    """Minimum-phase FIR taps for desired magnitudes given in dB on the
    rfft grid; batched over rows.

    The truncated tail is faded with a half-Hann over the final quarter:
    a hard cut leaves Gibbs error in the fitted magnitude and can push
    zeros across the unit circle.
    """
    log_mag = np.atleast_2d(db_bins) * DB_TO_LN
    cep = np.fft.irfft(log_mag, fft_size, axis=-1)
    half = fft_size // 2
    folded = np.zeros_like(cep)
    folded[:, 0] = cep[:, 0]
    folded[:, 1:half] = 2.0 * cep[:, 1:half]
    folded[:, half] = cep[:, half]
    h = np.fft.irfft(np.exp(np.fft.rfft(folded, axis=-1)), fft_size, axis=-1)
    h = h[:, :fir_len]
    n_fade = fir_len // 4
    if n_fade:
        fade = 0.5 + 0.5 * np.cos(np.pi * np.arange(1, n_fade + 1) / (n_fade + 1))
        h = h * np.concatenate([np.ones(fir_len - n_fade), fade])
    return h


def design_minphase_fir(
    target_freqs,
    target_db,
    fir_len: int = 128,
    fft_size: int = 1024,
    sample_rate: float = 48000.0,
) -> MinPhaseFilter:
    """Design one minimum-phase FIR matching the dB targets at the given
    frequencies."""
    freqs = np.asarray(target_freqs, dtype=float)
    gains = np.asarray(target_db, dtype=float)
    if freqs.ndim != 1 or freqs.shape != gains.shape:
        raise ValueError("target frequencies and gains must be matching 1-D arrays")
    if np.any(np.diff(freqs) <= 0):
        raise ValueError("target frequencies must be strictly increasing")
    if freqs[0] <= 0 or freqs[-1] >= sample_rate / 2:
        raise ValueError("targets must lie strictly inside (0, Nyquist)")
    if fir_len > fft_size:
        raise ValueError("fir_len must not exceed fft_size")
    db_bins = _interp_targets_to_bins(freqs, gains, fft_size, sample_rate)
    taps = _minphase_taps(db_bins, fir_len, fft_size)[0]
    return MinPhaseFilter(taps=taps, design_grid=(freqs, gains))


def _frame_count(n_samples: int, hop: int) -> int:
    return max(1, -(-n_samples // hop))


def synth_dtvf(
    signal: np.ndarray,
    sample_rate: float,
    trajectory: GainTrajectory,
    ola: OlaParams = OlaParams(),
) -> np.ndarray:
    """Direct time-varying filtering: per frame, design one minimum-phase
    FIR from the trajectory column, convolve with the Hann-windowed frame
    and overlap-add.

    Frames sit at multiples of the hop; a half-window lead-in frame
    (reusing the first trajectory column) completes the overlap sum at the
    signal head.  The convolution tail past the input length is dropped.
    """
    signal = np.asarray(signal, dtype=float)
    n = len(signal)
    fs = sample_rate
    hop = int(round(ola.frame_hop * fs))
    flen = int(round(ola.frame_len * fs))
    n_frames = _frame_count(n, hop)
    r = trajectory.r_total
    if r.shape[1] not in (n_frames, 1):
        raise ValueError(
            f"trajectory has {r.shape[1]} frames, signal needs {n_frames}"
        )
    if len(trajectory.frame_times) > 1:
        traj_hop = trajectory.frame_times[1] - trajectory.frame_times[0]
        if abs(traj_hop - ola.frame_hop) > 1e-9:
            raise ValueError("trajectory hop does not match overlap-add hop")

    # unique columns: constant trajectories collapse to one design
    cols, inverse = np.unique(r, axis=1, return_inverse=True)
    taps_u = _minphase_taps(
        _interp_targets_to_bins(
            trajectory.center_frequencies, -cols.T, ola.fft_size, fs
        ),
        ola.fir_len,
        ola.fft_size,
    )

    if n < flen:
        # degenerate short input: single static filter on the whole signal
        return oaconvolve(signal, taps_u[inverse[0]])[:n]

    seg_len = flen + ola.fir_len - 1
    conv_fft = 1 << int(np.ceil(np.log2(seg_len)))
    h_u = np.fft.rfft(taps_u, conv_fft, axis=1)
    window = hann(flen, sym=False)

    padded = np.zeros(hop + (n_frames - 1) * hop + flen)
    padded[hop : hop + n] = signal
    frames = np.lib.stride_tricks.sliding_window_view(padded, flen)[::hop]
    frames = frames[: n_frames + 1] * window
    spectra = np.fft.rfft(frames, conv_fft, axis=1)
    traj_idx = inverse[np.clip(np.arange(-1, n_frames), 0, r.shape[1] - 1)]
    segs = np.fft.irfft(spectra * h_u[traj_idx], conv_fft, axis=1)[:, :seg_len]

    out = np.zeros(hop + (n_frames - 1) * hop + seg_len)
    for j in range(n_frames + 1):
        start = j * hop
        out[start : start + seg_len] += segs[j]
    return out[hop : hop + n]


def synth_fbas(
    channels: ChannelSignals,
    trajectory: GainTrajectory,
    bank: GammatoneBank,
) -> np.ndarray:
    """Filterbank resynthesis: samplewise time-varying gain per channel
    (dB-linear between frame centers), fixed envelope-peak delay
    compensation, then weighted summation."""
    if channels.signals.shape[0] != bank.n_channels or not np.array_equal(
        channels.center_frequencies, bank.center_frequencies
    ):
        raise ValueError("channel signals do not match the bank grid")
    if not np.array_equal(trajectory.center_frequencies, bank.center_frequencies):
        raise ValueError("trajectory grid does not match the bank grid")
    n = channels.signals.shape[1]
    t = np.arange(n) / channels.sample_rate
    out = np.zeros(n)
    for k in range(bank.n_channels):
        r_k = np.interp(t, trajectory.frame_times, trajectory.r_total[k])
        y = channels.signals[k] * np.power(10.0, -r_k / 20.0)
        d = bank.delays[k]
        out[: n - d] += bank.synth_weights[k] * y[d:]
    return out
