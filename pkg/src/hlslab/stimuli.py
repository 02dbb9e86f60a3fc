"""Experiment stimulus preparation.

Covers equivalent-level measurement and scaling, room-impulse-response
convolution, a synthetic triad generator for instrument-style test
material, and the per-item condition pipeline that processes one source
through every simulation condition and normalizes all outputs to the
reference condition's level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hlslab.audiogram import AudiogramProfile

__all__ = [
    "ConditionSpec",
    "StimulusItem",
    "ItemPreparationError",
    "leq",
    "set_leq",
    "convolve_rir",
    "gen_triads",
    "process_item",
    "prepare_item",
    "INSTRUMENT_PARTIALS",
]

DEFAULT_CALIBRATION_DB = 30.0
DEFAULT_INPUT_LEQ = 70.0
LEQ_FLOOR_DB = -100.0

# Triad voicings as semitone offsets below the configured top note: a
# first-inversion tonic chord, an augmented-dominant, back to the tonic.
TRIAD_PROGRESSION = (
    (-8, -5, 0),
    (-10, -4, -1),
    (-8, -5, 0),
)

# Harmonic amplitude recipes standing in for sampled instruments; purely
# synthetic, labelled as such.
INSTRUMENT_PARTIALS = {
    "organ": [1.0, 0.9, 0.2, 0.5, 0.1, 0.25],
    "horn": [1.0, 0.6, 0.35, 0.2, 0.1, 0.05],
    "piano": [1.0, 0.45, 0.25, 0.12, 0.06, 0.03, 0.015],
}


class ItemPreparationError(RuntimeError):
    """Raised when any condition of an item fails; carries per-condition
    error messages."""

    def __init__(self, item_id: str, errors: dict[str, str]):
        self.item_id = item_id
        self.errors = errors
        detail = "; ".join(f"{label}: {msg}" for label, msg in errors.items())
        super().__init__(f"item {item_id!r} failed: {detail}")


@dataclass(frozen=True)
class ConditionSpec:
    """One simulation condition of the experiment."""

    label: str
    method: str  # dtvf | fbas | external
    alpha: float = 1.0
    profile: AudiogramProfile | None = None
    external_dir: str | None = None

    def __post_init__(self):
        if self.method not in ("dtvf", "fbas", "external"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "external" and not self.external_dir:
            raise ValueError("external conditions need external_dir")
        if self.method != "external" and self.profile is None:
            raise ValueError(f"condition {self.label!r} needs a profile")


@dataclass
class StimulusItem:
    """One prepared stimulus: per-condition output files and levels."""

    id: str
    kind: str  # speech | instrument
    source: str
    prepared: dict[str, str] = field(default_factory=dict)
    leq: dict[str, float] = field(default_factory=dict)


def leq(
    signal: np.ndarray,
    calibration: float = DEFAULT_CALIBRATION_DB,
    floor: float = LEQ_FLOOR_DB,
) -> float:
    """Equivalent continuous level: 10*log10(mean square) + calibration."""
    signal = np.asarray(signal, dtype=float)
    if signal.size == 0:
        raise ValueError("empty signal")
    ms = np.mean(signal**2)
    if ms == 0.0:
        return floor
    return float(10.0 * np.log10(ms) + calibration)


def set_leq(
    signal: np.ndarray, target: float, calibration: float = DEFAULT_CALIBRATION_DB
) -> np.ndarray:
    """Scaled copy whose equivalent level equals ``target``."""
    signal = np.asarray(signal, dtype=float)
    current = leq(signal, calibration)
    if current == LEQ_FLOOR_DB:
        raise ValueError("cannot set the level of an all-zero signal")
    return signal * 10.0 ** ((target - current) / 20.0)


def convolve_rir(
    signal: np.ndarray, sample_rate: float, rir: np.ndarray, rir_rate: float
) -> np.ndarray:
    """Full linear convolution with a room impulse response."""
    if sample_rate != rir_rate:
        raise ValueError(
            f"sample rate mismatch: signal {sample_rate} Hz, RIR {rir_rate} Hz"
        )
    return np.convolve(np.asarray(signal, dtype=float), np.asarray(rir, dtype=float))


def _midi_to_hz(midi: float) -> float:
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


def gen_triads(
    tonic_midi: int,
    instrument_partials,
    chord_dur: float = 1.0,
    sample_rate: float = 48000.0,
    progression=TRIAD_PROGRESSION,
    decay: float = 0.4,
) -> np.ndarray:
    """Three consecutive additive-synthesis chords (tonic, augmented
    dominant, tonic), 1 s each by default.

    ``tonic_midi`` is the top note of the tonic voicing.  Partials landing
    at or above Nyquist are dropped (a warning reports how many).
    """
    if not 0 <= tonic_midi <= 127:
        raise ValueError("tonic_midi outside the MIDI range")
    partials = np.asarray(instrument_partials, dtype=float)
    n = int(round(chord_dur * sample_rate))
    t = np.arange(n) / sample_rate
    envelope = np.exp(-t / decay)
    attack = int(round(0.005 * sample_rate))
    if attack:
        envelope[:attack] *= np.linspace(0.0, 1.0, attack)
    dropped = 0
    chords = []
    for offsets in progression:
        chord = np.zeros(n)
        for off in offsets:
            f0 = _midi_to_hz(tonic_midi + off)
            for k, amp in enumerate(partials, start=1):
                if f0 * k >= sample_rate / 2.0:
                    dropped += 1
                    continue
                chord += amp * np.sin(2.0 * np.pi * f0 * k * t)
        chords.append(chord * envelope)
    if dropped:
        warnings.warn(f"dropped {dropped} partials at or above Nyquist")
    out = np.concatenate(chords)
    peak = np.max(np.abs(out))
    if peak > 0:
        out = out * (0.5 / peak)
    return out


def process_item(
    source: np.ndarray,
    sample_rate: float,
    conditions: list[ConditionSpec],
    reference: str,
    simulate,
    rir: np.ndarray | None = None,
    rir_rate: float | None = None,
    input_leq: float = DEFAULT_INPUT_LEQ,
    calibration: float = DEFAULT_CALIBRATION_DB,
    precomputed: dict[str, np.ndarray] | None = None,
    item_id: str = "item",
) -> dict[str, tuple[np.ndarray, float]]:
    """Run one source through every condition and normalize to the
    reference condition's output level.

    ``simulate`` is called as ``simulate(condition, samples, sample_rate)``
    for the dtvf/fbas conditions; ``precomputed`` supplies the outputs of
    external conditions.  Returns ``{label: (samples, leq_db)}``.
    """
    labels = [c.label for c in conditions]
    if len(set(labels)) != len(labels):
        raise ValueError("condition labels must be unique")
    if reference not in labels:
        raise ValueError(f"reference {reference!r} not among conditions")
    prepared = np.asarray(source, dtype=float)
    if rir is not None:
        prepared = convolve_rir(prepared, sample_rate, rir, rir_rate or sample_rate)
    prepared = set_leq(prepared, input_leq, calibration)

    outputs: dict[str, np.ndarray] = {}
    errors: dict[str, str] = {}
    for cond in conditions:
        try:
            if cond.method == "external":
                if precomputed is None or cond.label not in precomputed:
                    raise ValueError("no external audio supplied")
                outputs[cond.label] = np.asarray(precomputed[cond.label], dtype=float)
            else:
                outputs[cond.label] = simulate(cond, prepared, sample_rate)
        except Exception as exc:  # noqa: BLE001 - report per condition
            errors[cond.label] = str(exc)
    if errors:
        raise ItemPreparationError(item_id, errors)

    ref_leq = leq(outputs[reference], calibration)
    result = {}
    for label, samples in outputs.items():
        result[label] = (set_leq(samples, ref_leq, calibration), ref_leq)
    return result


def prepare_item(
    item_id: str,
    source_path: str | Path,
    conditions: list[ConditionSpec],
    reference: str,
    out_dir: str | Path,
    simulate,
    kind: str = "speech",
    rir_path: str | Path | None = None,
    input_leq: float = DEFAULT_INPUT_LEQ,
    calibration: float = DEFAULT_CALIBRATION_DB,
) -> StimulusItem:
    """File-level wrapper around :func:`process_item`: reads the source
    (and optional RIR), writes one WAV per condition under
    ``out_dir/item_id/`` and returns the item record."""
    from hlslab.wavio import read_wav, write_wav

    source, fs, subtype = read_wav(source_path)
    rir = rir_rate = None
    if rir_path is not None:
        rir, rir_rate, _ = read_wav(rir_path)
    precomputed = {}
    for cond in conditions:
        if cond.method == "external":
            ext = Path(cond.external_dir) / f"{item_id}.wav"
            ext_samples, ext_rate, _ = read_wav(ext)
            if ext_rate != fs:
                raise ValueError(f"{ext}: sample rate mismatch")
            precomputed[cond.label] = ext_samples

    results = process_item(
        source,
        fs,
        conditions,
        reference,
        simulate,
        rir=rir,
        rir_rate=rir_rate,
        input_leq=input_leq,
        calibration=calibration,
        precomputed=precomputed,
        item_id=item_id,
    )
    item = StimulusItem(id=item_id, kind=kind, source=str(source_path))
    item_dir = Path(out_dir) / item_id
    item_dir.mkdir(parents=True, exist_ok=True)
    for label, (samples, lvl) in results.items():
        path = item_dir / f"{label}.wav"
        write_wav(path, samples, fs, subtype)
        item.prepared[label] = str(path)
        item.leq[label] = lvl
    return item
