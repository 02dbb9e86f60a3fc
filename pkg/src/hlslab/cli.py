"""Command-line entry point: simulate, decompose, prepare, session-build,
serve, score, triads.

Data goes to stdout or files; diagnostics go to stderr.  Exit status is 0
only when the subcommand succeeded.  A JSON config file can preset any
flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from hlslab import __version__
from hlslab.audiogram import (
    ActiveGainCalibration,
    AudiogramProfile,
    builtin_profile,
    decompose_hl,
    default_calibration,
)
from hlslab.experiment import aggregate_counts, mean_ci, thurstone_scores, tukey_hsd
from hlslab.pipeline import condition_simulator, simulate
from hlslab.report import (
    atomic_write_text,
    log_spectral_distance,
    render_lsd_figure,
    render_score_figure,
    write_score_report,
)
from hlslab.stimuli import ConditionSpec, gen_triads, prepare_item, INSTRUMENT_PARTIALS
from hlslab.synthesis import OlaParams, design_minphase_fir
from hlslab.wavio import read_wav, write_wav

DEFAULTS = {
    "profile": "70yr",
    "alpha": 1.0,
    "method": "dtvf",
    "cal_offset": 30.0,
    "fir_len": 128,
    "hop_ms": 1.0,
    "fft_size": 1024,
    "seed": 0,
    "port": 8770,
    "host": "127.0.0.1",
    "input_leq": 70.0,
    "q_crit": None,
    "pass_threshold": "10/12",
}


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def load_profile(name_or_path: str) -> AudiogramProfile:
    if Path(name_or_path).exists():
        return AudiogramProfile.from_json(name_or_path)
    return builtin_profile(name_or_path)


def _atomic_write_wav(path: Path, samples, rate, subtype) -> int:
    tmp = tempfile.NamedTemporaryFile(
        dir=path.parent, suffix=".wav.tmp", delete=False
    )
    tmp.close()
    try:
        clipped = write_wav(tmp.name, samples, rate, subtype)
        os.replace(tmp.name, path)
    except BaseException:
        os.unlink(tmp.name)
        raise
    return clipped


def _ola_from(args) -> OlaParams:
    hop = args.hop_ms / 1000.0
    return OlaParams(
        frame_hop=hop, frame_len=2 * hop, fir_len=args.fir_len,
        fft_size=args.fft_size,
    )


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    samples, rate, subtype = read_wav(args.input)
    profile = load_profile(args.profile)
    cal = (
        ActiveGainCalibration.from_json(args.calibration)
        if args.calibration
        else default_calibration()
    )
    result = simulate(
        samples, rate, profile, args.alpha, method=args.method, cal=cal,
        ola=_ola_from(args), level_calibration=args.cal_offset,
    )
    if args.verify_linear:
        from scipy.signal import oaconvolve
        from hlslab.pipeline import default_spec, bank_for

        bank = bank_for(default_spec(rate))
        hl = decompose_hl(profile, args.alpha, cal)
        from hlslab.audiogram import reduction_total

        r0 = reduction_total(hl, cal, bank.center_frequencies, args.input_leq)
        static = design_minphase_fir(
            bank.center_frequencies, -np.asarray(r0),
            fir_len=args.fir_len, fft_size=args.fft_size, sample_rate=rate,
        )
        ref = oaconvolve(samples, static.taps)[: len(samples)]
        num = np.sum((result.samples - ref) ** 2)
        den = np.sum(result.samples**2)
        resid = 10 * np.log10(num / den) if den > 0 else float("-inf")
        print(f"static_residual_db={resid:.1f}", file=sys.stderr)
    out = Path(args.output)
    clipped = _atomic_write_wav(out, result.samples, rate, subtype)
    print(
        f"input_leq_db={result.input_leq:.2f} "
        f"output_leq_db={result.output_leq:.2f} clipped={clipped}"
    )
    return 0


def cmd_decompose(args) -> int:
    profile = load_profile(args.profile)
    cal = (
        ActiveGainCalibration.from_json(args.calibration)
        if args.calibration
        else default_calibration()
    )
    d = decompose_hl(profile, args.alpha, cal)
    freqs = " ".join(f"{f:g}" for f in profile.frequencies)
    total = " ".join(f"{v:g}" for v in profile.hearing_level)
    split = " ".join(f"{a:g}+{p:g}" for a, p in zip(d.hl_act, d.hl_pas))
    print(f"freq_hz: {freqs}")
    print(f"hl_total: {total}")
    print(f"alpha={args.alpha:g}: {split}")
    return 0


def _load_conditions(path: str) -> list[ConditionSpec]:
    entries = json.loads(Path(path).read_text())
    conditions = []
    for entry in entries:
        profile = None
        if entry.get("profile"):
            profile = load_profile(entry["profile"])
        conditions.append(
            ConditionSpec(
                label=entry["label"],
                method=entry["method"],
                alpha=entry.get("alpha", 1.0),
                profile=profile,
                external_dir=entry.get("external_dir"),
            )
        )
    return conditions


def cmd_prepare(args) -> int:
    conditions = _load_conditions(args.conditions)
    labels = [c.label for c in conditions]
    if args.reference not in labels:
        return _fail(f"reference {args.reference!r} not in conditions {labels}")
    source = Path(args.source)
    if source.is_dir():
        sources = sorted(source.glob("*.wav"))
    else:
        sources = [source]
    if not sources:
        return _fail(f"no WAV files under {source}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = condition_simulator(
        ola=_ola_from(args), level_calibration=args.cal_offset
    )
    items = {}
    lsd: dict[str, dict[str, float]] = {}
    for src in sources:
        item = prepare_item(
            src.stem, src, conditions, args.reference, out_dir, sim,
            kind=args.kind, rir_path=args.rir, input_leq=args.input_leq,
            calibration=args.cal_offset,
        )
        items[item.id] = {
            "kind": item.kind,
            "source": item.source,
            "prepared": item.prepared,
            "leq_db": item.leq,
        }
        ref_samples, rate, _ = read_wav(item.prepared[args.reference])
        for label, path in item.prepared.items():
            if label == args.reference:
                continue
            cond_samples, _, _ = read_wav(path)
            lsd.setdefault(label, {})[item.id] = log_spectral_distance(
                cond_samples, ref_samples, rate
            )
        print(f"prepared {item.id}: {len(item.prepared)} conditions", file=sys.stderr)

    manifest = {
        "seed": args.seed,
        "reference": args.reference,
        "input_leq_db": args.input_leq,
        "conditions": labels,
        "items": items,
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=1))
    lsd_means = {
        label: float(np.mean(list(per.values()))) for label, per in lsd.items()
    }
    lsd_report = {
        "reference": args.reference,
        "note": "exploratory log-spectral distance to the reference condition; no pass/fail",
        "mean_db": lsd_means,
        "per_item_db": lsd,
    }
    atomic_write_text(out_dir / "lsd_report.json", json.dumps(lsd_report, indent=1))
    if args.plot_dir and lsd_means:
        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        render_lsd_figure(plot_dir / "lsd.png", lsd_means)
    print(json.dumps({"items": len(items), "out": str(out_dir)}))
    return 0


def cmd_session_build(args) -> int:
    from hlslab.service import build_store

    manifest = json.loads(Path(args.manifest).read_text())
    mapping = {
        item_id: entry["prepared"] for item_id, entry in manifest["items"].items()
    }
    threshold = float(Fraction(args.pass_threshold))
    store = build_store(
        args.store,
        mapping,
        participants=args.participants.split(","),
        seed=args.seed,
        reference=args.reference,
        distorted=args.distorted.split(","),
        training_items=args.training_items.split(","),
        practice_items=args.practice_items.split(","),
        main_items=args.main_items.split(","),
        pass_threshold=threshold,
    )
    print(json.dumps({"store": str(store.root), "seed": args.seed}))
    return 0


def cmd_serve(args) -> int:
    from hlslab.service import ExperimentStore, serve

    if not args.store:
        return _fail("no store given (use --store or HLS_LAB_STORE)")
    store = ExperimentStore(args.store)
    static = args.static or (
        str(store.root / "webui") if (store.root / "webui").is_dir() else None
    )
    server = serve(store, host=args.host, port=args.port, static_dir=static)
    host, port = server.server_address[:2]
    print(f"serving {store.root} on http://{host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _read_response_logs(paths: list[Path]):
    from hlslab.experiment import ResponseRecord

    records, warnings_list = [], []
    for path in paths:
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(ResponseRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                warnings_list.append(f"{path}:{lineno}: malformed line ({exc})")
    return records, warnings_list


def cmd_score(args) -> int:
    paths = []
    for raw in args.responses:
        p = Path(raw)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.jsonl")))
        else:
            paths.append(p)
    if not paths:
        return _fail("no response logs found")
    records, warnings_list = _read_response_logs(paths)
    for w in warnings_list:
        _warn(w)
    main_records = [r for r in records if r.phase == "main"]
    if not main_records:
        return _fail("no main-phase responses to score")
    conditions = sorted({label for r in main_records for label in r.pair})
    matrices = aggregate_counts(main_records, conditions)
    counts = {pid: int(m.totals.sum() // 2) for pid, m in matrices.items()}
    if len(set(counts.values())) > 1:
        msg = f"participants have unequal main-trial counts: {counts}"
        warnings_list.append(msg)
        _warn(msg)

    listeners = sorted(matrices)
    per_listener = np.array(
        [thurstone_scores(matrices[pid]) for pid in listeners]
    )
    significant = None
    if len(listeners) >= 2:
        result = mean_ci(per_listener, level=0.99, conditions=conditions)
        mean, ci = result.mean, result.ci_halfwidth
        if args.q_crit is not None:
            _, significant = tukey_hsd(per_listener, args.q_crit)
    else:
        mean, ci = per_listener[0], None
        msg = "single listener: confidence intervals omitted"
        warnings_list.append(msg)
        _warn(msg)

    out_dir = Path(args.out)
    write_score_report(
        out_dir, conditions, per_listener, mean, ci, 0.99,
        significant=significant, q_crit=args.q_crit, seed=args.seed,
        warnings_list=warnings_list,
    )
    if args.plot_dir:
        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        render_score_figure(plot_dir / "scores.png", conditions, mean, ci, significant)
    print((out_dir / "scores.txt").read_text(), end="")
    return 0


def cmd_triads(args) -> int:
    if args.instrument in INSTRUMENT_PARTIALS:
        partials = INSTRUMENT_PARTIALS[args.instrument]
    else:
        partials = [float(x) for x in args.instrument.split(",")]
    samples = gen_triads(
        args.top_midi, partials, chord_dur=args.chord_dur,
        sample_rate=args.rate,
    )
    clipped = _atomic_write_wav(Path(args.output), samples, args.rate, "pcm16")
    print(f"samples={len(samples)} clipped={clipped}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser(overrides: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hlslab",
        description="Hearing-loss simulation and paired-comparison experiment toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file presetting any flag default")
    parser.add_argument(
        "--show-config", action="store_true", help="print effective defaults and exit"
    )
    sub = parser.add_subparsers(dest="command")
    subparsers: list[argparse.ArgumentParser] = []

    def common_dsp(p):
        p.add_argument("--cal-offset", type=float, default=DEFAULTS["cal_offset"],
                       help="dB offset mapping digital RMS 1.0 to SPL")
        p.add_argument("--fir-len", type=int, default=DEFAULTS["fir_len"])
        p.add_argument("--hop-ms", type=float, default=DEFAULTS["hop_ms"])
        p.add_argument("--fft-size", type=int, default=DEFAULTS["fft_size"])

    p = sub.add_parser("simulate", help="run the hearing-loss simulation on a WAV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--profile", default=DEFAULTS["profile"])
    p.add_argument("--calibration", help="active-gain calibration JSON")
    p.add_argument("--alpha", type=float, default=DEFAULTS["alpha"])
    p.add_argument("--method", choices=("dtvf", "fbas"), default=DEFAULTS["method"])
    p.add_argument("--input-leq", type=float, default=DEFAULTS["input_leq"])
    p.add_argument("--verify-linear", action="store_true",
                   help="report residual vs a single static filter pass")
    common_dsp(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decompose", help="print the active/passive split table")
    p.add_argument("--profile", default=DEFAULTS["profile"])
    p.add_argument("--calibration")
    p.add_argument("--alpha", type=float, default=DEFAULTS["alpha"])
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("prepare", help="prepare stimuli across conditions")
    p.add_argument("--source", required=True, help="WAV file or directory")
    p.add_argument("--rir", help="room impulse response WAV")
    p.add_argument("--conditions", required=True, help="conditions JSON")
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", default="speech", choices=("speech", "instrument"))
    p.add_argument("--input-leq", type=float, default=DEFAULTS["input_leq"])
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--plot-dir", help="render report figures into this directory")
    common_dsp(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("session-build", help="lay out an experiment store")
    p.add_argument("--store", default=os.environ.get("HLS_LAB_STORE"))
    p.add_argument("--manifest", required=True, help="manifest.json from prepare")
    p.add_argument("--participants", required=True, help="comma-separated ids")
    p.add_argument("--reference", required=True)
    p.add_argument("--distorted", required=True, help="comma-separated labels")
    p.add_argument("--training-items", required=True)
    p.add_argument("--practice-items", required=True)
    p.add_argument("--main-items", required=True)
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--pass-threshold", default=DEFAULTS["pass_threshold"],
                   help="training pass fraction, e.g. 10/12")
    p.set_defaults(func=cmd_session_build)

    p = sub.add_parser("serve", help="serve sessions, audio and response logging")
    p.add_argument("--store", default=os.environ.get("HLS_LAB_STORE"))
    p.add_argument("--host", default=DEFAULTS["host"])
    p.add_argument("--port", type=int, default=DEFAULTS["port"])
    p.add_argument("--static", help="directory of web client files to serve")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("score", help="Thurstone-score response logs")
    p.add_argument("responses", nargs="+", help="JSONL files or directories")
    p.add_argument("--out", default="score_report")
    p.add_argument("--q-crit", type=float, default=DEFAULTS["q_crit"],
                   help="studentized-range critical value for Tukey HSD")
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--plot-dir", help="render score figure into this directory")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("triads", help="generate synthetic triad stimuli")
    p.add_argument("output")
    p.add_argument("--top-midi", type=int, default=60)
    p.add_argument("--instrument", default="organ",
                   help="preset name or comma-separated partial amplitudes")
    p.add_argument("--chord-dur", type=float, default=1.0)
    p.add_argument("--rate", type=float, default=48000.0)
    p.set_defaults(func=cmd_triads)

    if overrides:
        # subcommands parse into fresh namespaces, so presets must land on
        # each subparser that knows the flag
        known = {a.dest for sp in sub.choices.values() for a in sp._actions}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for sp in sub.choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in overrides.items() if k in dests})
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        try:
            raw = json.loads(Path(pre.config).read_text())
            overrides = {k.replace("-", "_"): v for k, v in raw.items()}
            parser = build_parser(overrides)
        except (OSError, ValueError) as exc:
            return _fail(f"bad config file: {exc}")
    args = parser.parse_args(argv)
    if args.show_config:
        print(json.dumps(DEFAULTS, indent=1))
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single CLI error surface
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
