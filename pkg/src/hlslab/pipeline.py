"""End-to-end simulation: analysis, level estimation, reduction, synthesis."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from hlslab.audiogram import (
    ActiveGainCalibration,
    AudiogramProfile,
    decompose_hl,
    default_calibration,
)
from hlslab.filterbank import (
    DEFAULT_CALIBRATION_DB,
    FilterbankSpec,
    analyze,
    design_filterbank,
    estimate_levels,
)
from hlslab.stimuli import ConditionSpec, leq
from hlslab.synthesis import OlaParams, compute_gain_trajectory, synth_dtvf, synth_fbas

__all__ = ["SimulationResult", "simulate", "condition_simulator", "bank_for"]


@dataclass(frozen=True)
class SimulationResult:
    samples: np.ndarray
    input_leq: float
    output_leq: float
    method: str
    alpha: float


@lru_cache(maxsize=8)
def bank_for(spec: FilterbankSpec):
    """Banks are expensive to design and immutable; cache per spec."""
    return design_filterbank(spec)


def default_spec(sample_rate: float) -> FilterbankSpec:
    """Default analysis bank, with the top edge pulled under Nyquist for
    low sample rates."""
    return FilterbankSpec(
        sample_rate=sample_rate, f_hi=min(8000.0, 0.45 * sample_rate)
    )


def simulate(
    signal: np.ndarray,
    sample_rate: float,
    profile: AudiogramProfile,
    alpha: float,
    method: str = "dtvf",
    cal: ActiveGainCalibration | None = None,
    spec: FilterbankSpec | None = None,
    ola: OlaParams = OlaParams(),
    level_calibration: float = DEFAULT_CALIBRATION_DB,
    spl_to_hl_offset: float = 0.0,
) -> SimulationResult:
    """Simulate hearing loss on ``signal`` with either synthesis back-end."""
    if method not in ("dtvf", "fbas"):
        raise ValueError(f"unknown method {method!r}")
    if cal is None:
        cal = default_calibration()
    if spec is None:
        spec = default_spec(sample_rate)
    if spec.sample_rate != sample_rate:
        raise ValueError("filterbank spec does not match the signal sample rate")
    bank = bank_for(spec)
    decomp = decompose_hl(profile, alpha, cal)
    channels = analyze(bank, signal)
    levels = estimate_levels(
        channels,
        frame_hop=ola.frame_hop,
        frame_len=ola.frame_len,
        calibration=level_calibration,
    )
    trajectory = compute_gain_trajectory(levels, decomp, cal, spl_to_hl_offset)
    if method == "dtvf":
        out = synth_dtvf(signal, sample_rate, trajectory, ola)
    else:
        out = synth_fbas(channels, trajectory, bank)
    return SimulationResult(
        samples=out,
        input_leq=leq(signal, level_calibration),
        output_leq=leq(out, level_calibration),
        method=method,
        alpha=alpha,
    )


def condition_simulator(**kwargs):
    """Adapter matching the ``simulate(condition, samples, rate)`` shape
    used by stimulus preparation."""

    def run(cond: ConditionSpec, samples: np.ndarray, sample_rate: float):
        return simulate(
            samples,
            sample_rate,
            profile=cond.profile,
            alpha=cond.alpha,
            method=cond.method,
            **kwargs,
        ).samples

    return run
