import numpy as np
import pytest
from scipy.stats import norm

from hlslab.experiment import PreferenceMatrix, ResponseRecord


def simulate_matrix(latent, conditions, trials_per_ordered_pair, rng):
    """Sample a preference matrix from planted latent quality scores
    (higher latent = less distorted), Case V response model."""
    k = len(conditions)
    m = PreferenceMatrix(conditions=tuple(conditions))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            # probability that i (played first) is judged MORE distorted
            p_first = norm.cdf(latent[j] - latent[i])
            wins = rng.binomial(trials_per_ordered_pair, p_first)
            m.counts[i, j] += wins
            m.counts[j, i] += trials_per_ordered_pair - wins
            m.totals[i, j] += trials_per_ordered_pair
            m.totals[j, i] += trials_per_ordered_pair
    return m


def simulate_response_log(
    latent,
    conditions,
    items,
    participants,
    rng,
    session_id="main-1",
):
    """Full main-phase response log sampled from planted latent scores."""
    from hlslab.experiment import build_session

    records = []
    for pid in participants:
        plan = build_session(items, conditions, "main", seed=rng.integers(2**31))
        for idx, (item, first, second) in enumerate(plan.trials):
            i = conditions.index(first)
            j = conditions.index(second)
            p_first_more_distorted = norm.cdf(latent[j] - latent[i])
            choice = "first" if rng.random() < p_first_more_distorted else "second"
            records.append(
                ResponseRecord(
                    session_id=session_id,
                    participant_id=pid,
                    trial_index=idx,
                    item=item,
                    pair=(first, second),
                    choice=choice,
                    timestamp=float(idx),
                    phase="main",
                )
            )
    return records


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
