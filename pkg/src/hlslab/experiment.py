"""Paired-comparison experiment machinery: session construction, training
grading, response aggregation and Thurstone-scale scoring.

Scoring follows Thurstone's Case V: the preference proportion for each
condition pair maps through the inverse normal CDF; a condition's score
is the mean of its row (self term zero), shifted so scores sum to zero.
Proportions are clipped to [1/(2N), 1 - 1/(2N)] so unanimous cells stay
finite.  Scores are oriented so that higher means less perceived
distortion.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import t as t_dist

__all__ = [
    "SessionPlan",
    "ResponseRecord",
    "PreferenceMatrix",
    "ScoreResult",
    "TrainingGrade",
    "IncompleteSessionError",
    "build_pairs",
    "build_session",
    "build_training_session",
    "grade_training",
    "aggregate_counts",
    "inverse_normal",
    "thurstone_scores",
    "mean_ci",
    "tukey_hsd",
    "SPEECH_PASS_THRESHOLD",
    "INSTRUMENT_PASS_THRESHOLD",
]

SPEECH_PASS_THRESHOLD = 10 / 12
INSTRUMENT_PASS_THRESHOLD = 7 / 8

PHASES = ("training", "practice", "main")


class IncompleteSessionError(RuntimeError):
    def __init__(self, missing: list[int]):
        self.missing = missing
        super().__init__(f"unanswered trials: {missing}")


@dataclass(frozen=True)
class SessionPlan:
    session_id: str
    phase: str
    trials: tuple  # of (item, first_condition, second_condition)
    seed: int
    feedback: bool = False
    pass_threshold: float | None = None
    answer_key: dict | None = None  # trial index -> "first" | "second"

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.phase == "training" and (
            not self.feedback or self.pass_threshold is None
        ):
            raise ValueError("training sessions need feedback and a pass threshold")
        object.__setattr__(self, "trials", tuple(tuple(t) for t in self.trials))

    def to_json(self) -> dict:
        data = {
            "session_id": self.session_id,
            "phase": self.phase,
            "seed": self.seed,
            "feedback": self.feedback,
            "pass_threshold": self.pass_threshold,
            "trials": [list(t) for t in self.trials],
        }
        if self.answer_key is not None:
            data["answer_key"] = {str(k): v for k, v in self.answer_key.items()}
        return data

    @classmethod
    def from_json(cls, data: dict) -> "SessionPlan":
        key = data.get("answer_key")
        return cls(
            session_id=data["session_id"],
            phase=data["phase"],
            trials=tuple(tuple(t) for t in data["trials"]),
            seed=data["seed"],
            feedback=data["feedback"],
            pass_threshold=data.get("pass_threshold"),
            answer_key={int(k): v for k, v in key.items()} if key else None,
        )


@dataclass(frozen=True)
class ResponseRecord:
    session_id: str
    participant_id: str
    trial_index: int
    item: str
    pair: tuple  # (first condition, second condition)
    choice: str  # "first" | "second" — the interval judged MORE distorted
    timestamp: float
    phase: str

    def __post_init__(self):
        if self.choice not in ("first", "second"):
            raise ValueError(f"malformed choice {self.choice!r}")
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        object.__setattr__(self, "pair", tuple(self.pair))

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "participant_id": self.participant_id,
            "trial_index": self.trial_index,
            "item": self.item,
            "pair": list(self.pair),
            "choice": self.choice,
            "timestamp": self.timestamp,
            "phase": self.phase,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ResponseRecord":
        return cls(
            session_id=data["session_id"],
            participant_id=data["participant_id"],
            trial_index=int(data["trial_index"]),
            item=data["item"],
            pair=tuple(data["pair"]),
            choice=data["choice"],
            timestamp=float(data["timestamp"]),
            phase=data["phase"],
        )


@dataclass
class PreferenceMatrix:
    """counts[i][j]: times condition i was judged MORE distorted than j."""

    conditions: tuple
    counts: np.ndarray = None
    totals: np.ndarray = None

    def __post_init__(self):
        k = len(self.conditions)
        if self.counts is None:
            self.counts = np.zeros((k, k), dtype=int)
        if self.totals is None:
            self.totals = np.zeros((k, k), dtype=int)

    def add(self, more_distorted: str, other: str) -> None:
        i = self.conditions.index(more_distorted)
        j = self.conditions.index(other)
        self.counts[i, j] += 1
        self.totals[i, j] += 1
        self.totals[j, i] += 1


@dataclass(frozen=True)
class ScoreResult:
    conditions: tuple
    per_listener: np.ndarray  # [listener, condition]
    mean: np.ndarray
    ci_halfwidth: np.ndarray | None
    level: float

    def __post_init__(self):
        scores = np.asarray(self.per_listener)
        # sum-zero is a property of full Thurstone score tables; single
        # columns (one condition) carry plain means instead
        if scores.ndim == 2 and scores.shape[1] >= 2:
            if np.abs(scores.sum(axis=1)).max() > 1e-9:
                raise ValueError("per-listener scores must sum to zero")


@dataclass(frozen=True)
class TrainingGrade:
    passed: bool
    n_correct: int
    n_total: int

    @property
    def score(self) -> float:
        return self.n_correct / self.n_total


def build_pairs(conditions) -> list[tuple]:
    """All ordered pairs (i, j) with i != j; k*(k-1) of them."""
    conditions = list(conditions)
    return [(a, b) for a in conditions for b in conditions if a != b]


def build_session(
    items,
    conditions,
    phase: str,
    seed: int,
    session_id: str | None = None,
    feedback: bool = False,
    pass_threshold: float | None = None,
) -> SessionPlan:
    """Cross items with every ordered condition pair and shuffle
    reproducibly."""
    items = list(items)
    if not items or not conditions:
        raise ValueError("need at least one item and one condition")
    trials = [(item, a, b) for item in items for a, b in build_pairs(conditions)]
    seed = int(seed)
    random.Random(seed).shuffle(trials)
    return SessionPlan(
        session_id=session_id or f"{phase}-{seed}",
        phase=phase,
        trials=tuple(trials),
        seed=seed,
        feedback=feedback,
        pass_threshold=pass_threshold,
    )


def build_training_session(
    items,
    reference: str,
    distorted,
    seed: int,
    pass_threshold: float,
    session_id: str | None = None,
) -> SessionPlan:
    """Training plan of reference-vs-distorted pairs in both orders, with
    the answer key marking the distorted interval."""
    items = list(items)
    distorted = list(distorted)
    if not items or not distorted:
        raise ValueError("need at least one item and one distorted condition")
    seed = int(seed)
    trials = []
    for item in items:
        for d in distorted:
            trials.append((item, reference, d))
            trials.append((item, d, reference))
    random.Random(seed).shuffle(trials)
    key = {
        idx: ("second" if first == reference else "first")
        for idx, (_, first, _second) in enumerate(trials)
    }
    return SessionPlan(
        session_id=session_id or f"training-{seed}",
        phase="training",
        trials=tuple(trials),
        seed=seed,
        feedback=True,
        pass_threshold=pass_threshold,
        answer_key=key,
    )


def grade_training(
    responses, answer_key: dict, threshold: float
) -> TrainingGrade:
    """Score a completed training session against its answer key."""
    answered = {}
    for rec in responses:
        if rec.trial_index in answered:
            raise ValueError(f"duplicate response for trial {rec.trial_index}")
        answered[rec.trial_index] = rec.choice
    missing = sorted(set(answer_key) - set(answered))
    if missing:
        raise IncompleteSessionError(missing)
    n_correct = sum(
        1 for idx, correct in answer_key.items() if answered[idx] == correct
    )
    n_total = len(answer_key)
    return TrainingGrade(
        passed=n_correct / n_total >= threshold,
        n_correct=n_correct,
        n_total=n_total,
    )


def aggregate_counts(responses, conditions) -> dict[str, PreferenceMatrix]:
    """Per-participant preference matrices from main-phase responses."""
    conditions = tuple(conditions)
    out: dict[str, PreferenceMatrix] = {}
    for rec in responses:
        if rec.phase != "main":
            raise ValueError(f"non-main response in aggregation: {rec.phase}")
        first, second = rec.pair
        if first not in conditions or second not in conditions:
            raise ValueError(f"unknown condition in pair {rec.pair}")
        matrix = out.setdefault(
            rec.participant_id, PreferenceMatrix(conditions=conditions)
        )
        if rec.choice == "first":
            matrix.add(first, second)
        else:
            matrix.add(second, first)
    return out


def inverse_normal(p: float) -> float:
    """Standard normal quantile."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly inside (0, 1)")
    return float(ndtri(p))


def thurstone_scores(matrix: PreferenceMatrix) -> np.ndarray:
    """Case V scores, higher = less perceived distortion, sum zero."""
    k = len(matrix.conditions)
    if k == 0:
        raise ValueError("empty preference matrix")
    z = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            total = matrix.totals[i, j]
            if total <= 0:
                raise ValueError(
                    f"no trials for pair {matrix.conditions[i]}/{matrix.conditions[j]}"
                )
            # probability that i was preferred, i.e. judged less distorted
            p = matrix.counts[j, i] / total
            eps = 1.0 / (2.0 * total)
            z[i, j] = inverse_normal(np.clip(p, eps, 1.0 - eps))
    scores = z.sum(axis=1) / k
    return scores - scores.mean()


def mean_ci(
    per_listener_scores: np.ndarray,
    level: float = 0.99,
    conditions=None,
) -> ScoreResult:
    """Across-listener mean and two-sided t confidence half-width per
    condition."""
    scores = np.asarray(per_listener_scores, dtype=float)
    n = scores.shape[0]
    if n < 2:
        raise ValueError("confidence intervals need at least 2 listeners")
    mean = scores.mean(axis=0)
    sd = scores.std(axis=0, ddof=1)
    t_crit = t_dist.ppf(0.5 + level / 2.0, n - 1)
    if conditions is None:
        conditions = tuple(range(scores.shape[1]))
    return ScoreResult(
        conditions=tuple(conditions),
        per_listener=scores,
        mean=mean,
        ci_halfwidth=t_crit * sd / np.sqrt(n),
        level=level,
    )


def tukey_hsd(
    per_listener_scores: np.ndarray, q_crit: float
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise significance by the studentized range criterion.

    The error term comes from the condition-by-listener repeated-measures
    decomposition.  Returns (statistic matrix, significant boolean matrix);
    critical values are caller-supplied, not tabulated here.
    """
    if q_crit is None:
        raise ValueError("q_crit is required")
    scores = np.asarray(per_listener_scores, dtype=float)
    n, k = scores.shape
    grand = scores.mean()
    cond_means = scores.mean(axis=0)
    listener_means = scores.mean(axis=1)
    ss_total = np.sum((scores - grand) ** 2)
    ss_cond = n * np.sum((cond_means - grand) ** 2)
    ss_listener = k * np.sum((listener_means - grand) ** 2)
    df_error = (k - 1) * (n - 1)
    ms_error = max(ss_total - ss_cond - ss_listener, 0.0) / df_error
    diffs = np.abs(cond_means[:, None] - cond_means[None, :])
    if ms_error > 0:
        stat = diffs / np.sqrt(ms_error / n)
    else:
        stat = np.where(diffs > 0, np.inf, 0.0)
    significant = stat >= q_crit
    np.fill_diagonal(significant, False)
    return stat, significant
