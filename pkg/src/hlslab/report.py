"""Score and spectral-distance reporting: JSON/CSV/text tables, optional
figures rendered to files."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.signal import welch

__all__ = [
    "atomic_write_text",
    "log_spectral_distance",
    "write_score_report",
    "render_score_figure",
    "render_lsd_figure",
]


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via temp-and-rename so readers never see partial files."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def log_spectral_distance(
    a: np.ndarray,
    b: np.ndarray,
    sample_rate: float,
    band: tuple[float, float] = (125.0, 8000.0),
    nperseg: int = 4096,
) -> float:
    """RMS difference of the two long-term log spectra over ``band``, dB.

    An exploratory distortion figure: no pass/fail semantics attached.
    """
    nper = min(nperseg, len(a), len(b))
    f, pa = welch(a, sample_rate, nperseg=nper)
    _, pb = welch(b, sample_rate, nperseg=nper)
    keep = (f >= band[0]) & (f <= band[1])
    eps = np.finfo(float).tiny
    diff = 10.0 * np.log10((pa[keep] + eps) / (pb[keep] + eps))
    return float(np.sqrt(np.mean(diff**2)))


def _fmt_row(cells, widths):
    return "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))


def write_score_report(
    out_dir: str | Path,
    conditions,
    per_listener: np.ndarray,
    mean: np.ndarray,
    ci_halfwidth: np.ndarray | None,
    level: float,
    significant: np.ndarray | None = None,
    q_crit: float | None = None,
    seed: int | None = None,
    warnings_list: list[str] | None = None,
) -> dict:
    """Write scores.json, scores.csv and scores.txt into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    conditions = list(conditions)
    report = {
        "conditions": conditions,
        "n_listeners": int(per_listener.shape[0]),
        "mean": mean.tolist(),
        "ci_halfwidth": None if ci_halfwidth is None else ci_halfwidth.tolist(),
        "ci_level": level,
        "per_listener": per_listener.tolist(),
        "seed": seed,
        "warnings": warnings_list or [],
    }
    if significant is not None:
        report["tukey"] = {
            "q_crit": q_crit,
            "significant_pairs": [
                [conditions[i], conditions[j]]
                for i in range(len(conditions))
                for j in range(i + 1, len(conditions))
                if significant[i, j]
            ],
        }
    atomic_write_text(out_dir / "scores.json", json.dumps(report, indent=1))

    lines = ["condition,mean,ci_halfwidth"]
    for i, cond in enumerate(conditions):
        ci = "" if ci_halfwidth is None else f"{ci_halfwidth[i]:.6f}"
        lines.append(f"{cond},{mean[i]:.6f},{ci}")
    atomic_write_text(out_dir / "scores.csv", "\n".join(lines) + "\n")

    widths = [max(len(c) for c in conditions + ["condition"]), 8, 10, 6]
    txt = [
        f"Thurstone scores (higher = less perceived distortion), "
        f"n = {per_listener.shape[0]} listeners",
        _fmt_row(["condition", "mean", f"ci{int(level*100)}", "sig"], widths),
    ]
    for i, cond in enumerate(conditions):
        ci = "-" if ci_halfwidth is None else f"{ci_halfwidth[i]:.3f}"
        flag = ""
        if significant is not None and significant[i].any():
            flag = "**"
        txt.append(_fmt_row([cond, f"{mean[i]:+.3f}", ci, flag], widths))
    for w in warnings_list or []:
        txt.append(f"warning: {w}")
    atomic_write_text(out_dir / "scores.txt", "\n".join(txt) + "\n")
    return report


def render_score_figure(
    path: str | Path,
    conditions,
    mean: np.ndarray,
    ci_halfwidth: np.ndarray | None,
    significant: np.ndarray | None = None,
) -> None:
    """Bar chart of mean scores with confidence error bars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(conditions))
    yerr = None if ci_halfwidth is None else ci_halfwidth
    ax.bar(x, mean, yerr=yerr, capsize=4, color="#4878a8")
    if significant is not None:
        for i in range(len(conditions)):
            if significant[i].any():
                offset = (ci_halfwidth[i] if ci_halfwidth is not None else 0.0)
                ax.text(i, mean[i] + np.sign(mean[i] or 1) * (offset + 0.05),
                        "**", ha="center")
    ax.set_xticks(x)
    ax.set_xticklabels(conditions, rotation=30, ha="right")
    ax.set_ylabel("Thurstone score")
    ax.axhline(0.0, color="k", linewidth=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_lsd_figure(path: str | Path, lsd_by_condition: dict[str, float]) -> None:
    """Bar chart of mean log-spectral distance per condition."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = list(lsd_by_condition)
    values = [lsd_by_condition[k] for k in labels]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(np.arange(len(labels)), values, color="#a85848")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("log-spectral distance (dB)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
