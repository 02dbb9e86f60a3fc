import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import simulate_matrix
from hlslab.experiment import (
    INSTRUMENT_PASS_THRESHOLD,
    SPEECH_PASS_THRESHOLD,
    IncompleteSessionError,
    PreferenceMatrix,
    ResponseRecord,
    SessionPlan,
    aggregate_counts,
    build_pairs,
    build_session,
    build_training_session,
    grade_training,
    inverse_normal,
    mean_ci,
    thurstone_scores,
    tukey_hsd,
)

CONDS = ("dtvf_a1", "dtvf_a05", "dtvf_a0", "fbas_a05", "other_sim")


def normal_cdf_quadrature(x):
    """Independent oracle: numerically integrate the standard normal pdf."""
    val, _ = quad(lambda u: np.exp(-u * u / 2) / np.sqrt(2 * np.pi), -40, x)
    return val


def make_response(idx, pair, choice, phase="main", participant="p1"):
    return ResponseRecord(
        session_id="s1",
        participant_id=participant,
        trial_index=idx,
        item="w1",
        pair=pair,
        choice=choice,
        timestamp=float(idx),
        phase=phase,
    )


class TestPairsAndSessions:
    def test_five_conditions_twenty_pairs(self):
        assert len(build_pairs(CONDS)) == 20

    def test_two_conditions_two_pairs(self):
        assert build_pairs(["a", "b"]) == [("a", "b"), ("b", "a")]

    def test_one_condition_no_pairs(self):
        assert build_pairs(["a"]) == []

    @given(k=st.integers(1, 8), items=st.integers(1, 12))
    @settings(max_examples=30, deadline=None)
    def test_trial_count_formula(self, k, items):
        conds = [f"c{i}" for i in range(k)]
        ids = [f"w{i}" for i in range(items)]
        if k == 1:
            assert len(build_pairs(conds)) == 0
            return
        plan = build_session(ids, conds, "main", seed=1)
        assert len(plan.trials) == items * k * (k - 1)

    def test_paper_trial_counts(self):
        assert len(build_session([f"w{i}" for i in range(10)], CONDS, "main", 0).trials) == 200
        assert len(build_session([f"i{i}" for i in range(4)], CONDS, "main", 0).trials) == 80

    def test_seed_determinism(self):
        a = build_session(["w1", "w2"], CONDS, "main", seed=42)
        b = build_session(["w1", "w2"], CONDS, "main", seed=42)
        c = build_session(["w1", "w2"], CONDS, "main", seed=43)
        assert a.trials == b.trials
        assert a.trials != c.trials

    def test_training_plan_structure(self):
        plan = build_training_session(
            ["t1", "t2", "t3"], "dtvf_a1", ["fbas_a05", "other_sim"], seed=7,
            pass_threshold=SPEECH_PASS_THRESHOLD,
        )
        assert len(plan.trials) == 12
        assert plan.feedback and plan.pass_threshold == SPEECH_PASS_THRESHOLD
        for idx, (item, first, second) in enumerate(plan.trials):
            correct = plan.answer_key[idx]
            distorted = first if correct == "first" else second
            assert distorted != "dtvf_a1"
            assert "dtvf_a1" in (first, second)

    def test_training_without_threshold_rejected(self):
        with pytest.raises(ValueError):
            SessionPlan(
                session_id="x", phase="training", trials=(), seed=0, feedback=True
            )

    def test_plan_json_roundtrip(self):
        plan = build_training_session(
            ["t1"], "ref", ["d1"], seed=3, pass_threshold=0.8
        )
        again = SessionPlan.from_json(plan.to_json())
        assert again == plan


class TestGradeTraining:
    def _plan(self):
        return build_training_session(
            ["t1", "t2", "t3"], "ref", ["d1", "d2"], seed=5,
            pass_threshold=SPEECH_PASS_THRESHOLD,
        )

    def _responses(self, plan, n_correct):
        recs = []
        for idx in range(len(plan.trials)):
            correct = plan.answer_key[idx]
            wrong = "second" if correct == "first" else "first"
            recs.append(make_response(idx, plan.trials[idx][1:], correct if idx < n_correct else wrong, phase="training"))
        return recs

    def test_speech_pass_at_10_of_12(self):
        plan = self._plan()
        grade = grade_training(self._responses(plan, 10), plan.answer_key, SPEECH_PASS_THRESHOLD)
        assert grade.passed and grade.n_correct == 10 and grade.n_total == 12

    def test_speech_fail_at_9_of_12(self):
        plan = self._plan()
        grade = grade_training(self._responses(plan, 9), plan.answer_key, SPEECH_PASS_THRESHOLD)
        assert not grade.passed

    def test_instrument_boundary(self):
        plan = build_training_session(
            ["t1", "t2"], "ref", ["d1", "d2"], seed=6,
            pass_threshold=INSTRUMENT_PASS_THRESHOLD,
        )
        recs = self._responses(plan, 7)
        grade = grade_training(recs[:8], plan.answer_key, INSTRUMENT_PASS_THRESHOLD)
        assert grade.n_total == 8 and grade.passed
        grade = grade_training(
            self._responses(plan, 6)[:8], plan.answer_key, INSTRUMENT_PASS_THRESHOLD
        )
        assert not grade.passed

    def test_missing_responses_listed(self):
        plan = self._plan()
        recs = self._responses(plan, 12)[:-2]
        with pytest.raises(IncompleteSessionError) as exc:
            grade_training(recs, plan.answer_key, SPEECH_PASS_THRESHOLD)
        assert exc.value.missing == [10, 11]

    def test_duplicate_rejected(self):
        plan = self._plan()
        recs = self._responses(plan, 12)
        with pytest.raises(ValueError):
            grade_training(recs + [recs[0]], plan.answer_key, SPEECH_PASS_THRESHOLD)


class TestAggregate:
    def test_empty(self):
        assert aggregate_counts([], CONDS) == {}

    def test_single_trial_first_choice(self):
        out = aggregate_counts(
            [make_response(0, ("dtvf_a1", "fbas_a05"), "first")], CONDS
        )
        m = out["p1"]
        assert m.counts[CONDS.index("dtvf_a1"), CONDS.index("fbas_a05")] == 1
        assert m.totals[CONDS.index("dtvf_a1"), CONDS.index("fbas_a05")] == 1
        assert m.totals[CONDS.index("fbas_a05"), CONDS.index("dtvf_a1")] == 1

    def test_count_conservation(self):
        rng = np.random.default_rng(0)
        recs = []
        for idx in range(40):
            pair = tuple(rng.choice(CONDS, size=2, replace=False))
            recs.append(make_response(idx, pair, rng.choice(["first", "second"])))
        m = aggregate_counts(recs, CONDS)["p1"]
        np.testing.assert_array_equal(m.counts + m.counts.T, m.totals)
        assert m.counts.diagonal().sum() == 0
        assert m.totals.sum() == 2 * 40

    def test_non_main_rejected(self):
        with pytest.raises(ValueError):
            aggregate_counts(
                [make_response(0, ("dtvf_a1", "fbas_a05"), "first", phase="training")],
                CONDS,
            )

    def test_unknown_condition_rejected(self):
        with pytest.raises(ValueError):
            aggregate_counts([make_response(0, ("nope", "fbas_a05"), "first")], CONDS)


class TestInverseNormal:
    def test_half_is_zero(self):
        assert inverse_normal(0.5) == 0.0

    def test_value_from_quadrature_oracle(self):
        # oracle: integrate the pdf to find the p whose quantile is 1.0
        p = normal_cdf_quadrature(1.0)
        assert p == pytest.approx(0.8413447461, abs=1e-9)
        assert inverse_normal(0.8413447461) == pytest.approx(1.0, abs=1e-6)

    def test_accuracy_against_quadrature_sweep(self):
        for p in (1e-6, 1e-3, 0.2, 0.7, 1 - 1e-3, 1 - 1e-6):
            z = inverse_normal(p)
            assert normal_cdf_quadrature(z) == pytest.approx(p, abs=1e-7)

    def test_antisymmetry(self):
        for p in (0.01, 0.3, 0.45, 0.9):
            assert inverse_normal(p) == pytest.approx(-inverse_normal(1 - p), abs=1e-12)

    def test_domain(self):
        for bad in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError):
                inverse_normal(bad)


class TestThurstone:
    def test_uniform_preferences_zero(self):
        m = PreferenceMatrix(conditions=CONDS)
        m.counts = np.full((5, 5), 10)
        np.fill_diagonal(m.counts, 0)
        m.totals = np.full((5, 5), 20)
        np.fill_diagonal(m.totals, 0)
        np.testing.assert_allclose(thurstone_scores(m), 0.0, atol=1e-12)

    def test_two_condition_hand_example(self):
        # p(1 preferred over 2) = Phi(1) => scores (+0.5, -0.5)
        m = PreferenceMatrix(conditions=("a", "b"))
        n = 10**7
        wins = round(0.8413447461 * n)
        m.counts = np.array([[0, n - wins], [wins, 0]])
        m.totals = np.array([[0, n], [n, 0]])
        scores = thurstone_scores(m)
        np.testing.assert_allclose(scores, [0.5, -0.5], atol=1e-6)

    def test_sum_zero_random(self, rng):
        for _ in range(50):
            latent = rng.normal(size=4)
            m = simulate_matrix(latent, ("a", "b", "c", "d"), 12, rng)
            assert abs(thurstone_scores(m).sum()) < 1e-9

    def test_permutation_equivariance(self, rng):
        latent = np.array([1.0, 0.3, -0.2, -1.1])
        m = simulate_matrix(latent, ("a", "b", "c", "d"), 50, rng)
        scores = thurstone_scores(m)
        perm = [2, 0, 3, 1]
        m2 = PreferenceMatrix(
            conditions=tuple(m.conditions[i] for i in perm),
            counts=m.counts[np.ix_(perm, perm)],
            totals=m.totals[np.ix_(perm, perm)],
        )
        np.testing.assert_allclose(thurstone_scores(m2), scores[perm], atol=1e-12)

    def test_monotone_in_wins(self):
        m = PreferenceMatrix(conditions=("a", "b", "c"))
        m.counts = np.array([[0, 5, 5], [5, 0, 5], [5, 5, 0]])
        m.totals = np.full((3, 3), 10)
        np.fill_diagonal(m.totals, 0)
        base = thurstone_scores(m)[0]
        m.counts[1, 0] += 1  # b judged more distorted against a once more
        m.counts[0, 1] -= 1
        assert thurstone_scores(m)[0] > base

    def test_planted_ordering_recovered(self, rng):
        latent = np.array([1.0, 0.5, 0.0, -0.5, -1.0])
        m = simulate_matrix(latent, CONDS, 200, rng)
        scores = thurstone_scores(m)
        assert list(np.argsort(-scores)) == [0, 1, 2, 3, 4]

    def test_empty_and_missing_cells(self):
        with pytest.raises(ValueError):
            thurstone_scores(PreferenceMatrix(conditions=()))
        m = PreferenceMatrix(conditions=("a", "b"))
        with pytest.raises(ValueError):
            thurstone_scores(m)  # totals zero


class TestMeanCi:
    def test_identical_scores_zero_width(self):
        scores = np.tile([0.5, -0.5], (6, 1))
        result = mean_ci(scores)
        np.testing.assert_allclose(result.mean, [0.5, -0.5])
        np.testing.assert_allclose(result.ci_halfwidth, 0.0, atol=1e-12)
        assert result.level == 0.99

    def test_two_listener_hand_example(self):
        # t-quantile oracle for df=1: t(q) = tan(pi*(q - 0.5))
        t_crit = np.tan(np.pi * (0.995 - 0.5))
        result = mean_ci(np.array([[0.0], [2.0]]), level=0.99)
        assert result.mean[0] == pytest.approx(1.0)
        assert result.ci_halfwidth[0] == pytest.approx(
            t_crit * np.sqrt(2) / np.sqrt(2), rel=1e-9
        )

    def test_means_sum_zero(self, rng):
        per = np.array(
            [
                thurstone_scores(simulate_matrix(rng.normal(size=5), CONDS, 10, rng))
                for _ in range(8)
            ]
        )
        result = mean_ci(per, conditions=CONDS)
        assert abs(result.mean.sum()) < 1e-9
        assert result.conditions == CONDS

    def test_sum_zero_invariant_enforced(self):
        with pytest.raises(ValueError):
            mean_ci(np.array([[0.5, 0.5], [0.1, -0.1]]))

    def test_single_listener_rejected(self):
        with pytest.raises(ValueError):
            mean_ci(np.array([[0.1, -0.1]]))


class TestTukeyHsd:
    def test_identical_conditions_not_flagged(self):
        scores = np.random.default_rng(0).normal(size=(8, 1)) * np.ones((8, 4))
        stat, sig = tukey_hsd(scores, q_crit=0.5)
        assert not sig.any()

    def test_zero_crit_flags_unequal(self):
        scores = np.array([[1.0, 0.0, 1.0], [1.2, -0.2, 1.2], [0.9, 0.1, 0.9]])
        _, sig = tukey_hsd(scores, q_crit=0.0)
        assert sig[0, 1] and sig[1, 0]
        assert not sig.diagonal().any()

    def test_two_group_separation_vs_permutation_oracle(self, rng):
        # group A conditions sit ~2 units above group B
        n = 12
        scores = np.concatenate(
            [
                rng.normal(1.0, 0.2, size=(n, 2)),
                rng.normal(-1.0, 0.2, size=(n, 2)),
            ],
            axis=1,
        )
        scores -= scores.mean(axis=1, keepdims=True)
        stat, sig = tukey_hsd(scores, q_crit=4.0)
        # permutation oracle: shuffle condition labels within listeners
        diffs = np.abs(scores.mean(0)[:, None] - scores.mean(0)[None, :])
        n_perm, exceed = 500, np.zeros((4, 4))
        for _ in range(n_perm):
            perm = np.array([rng.permutation(4) for _ in range(n)])
            shuffled = np.take_along_axis(scores, perm, axis=1)
            d = np.abs(shuffled.mean(0)[:, None] - shuffled.mean(0)[None, :])
            exceed += d >= diffs
        pvals = exceed / n_perm
        for i in range(4):
            for j in range(4):
                if sig[i, j]:
                    assert pvals[i, j] < 0.05
        assert sig[0, 2] and sig[1, 3] and not sig[0, 1] and not sig[2, 3]

    def test_q_crit_required(self):
        with pytest.raises(ValueError):
            tukey_hsd(np.zeros((3, 2)), q_crit=None)
