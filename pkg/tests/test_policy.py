import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import profile
from smscoach.core import Arm, CoachError, MessageKind
from smscoach.features import COLUMNS, Standardization
from smscoach.policy import (
    STALENESS_SECONDS,
    PatientHistory,
    PolicyMode,
    PolicyState,
    WeeklyRules,
    boltzmann_probabilities,
    control_decide,
    daily_decide,
    initial_action_from_draws,
    initial_probabilities,
    is_fresh,
    predict_changes,
    sample_index,
    weekly_summary_decide,
)
from smscoach.regression import ManifestMismatchError, ModelState

K = MessageKind
fractions = st.floats(0, 1)
unit = st.floats(0, 1, exclude_max=True)


@given(fractions)
def test_initial_probabilities(f):
    p = initial_probabilities(f)
    assert p.sum() == pytest.approx(1.0)
    assert p[3] == 0.2
    assert p[1] == p[2]


@given(fractions, unit, unit, unit)
def test_initial_draws_follow_rule(f, a, b, c):
    action = initial_action_from_draws(f, (a, b, c))
    if a < 0.2:
        assert action == K.NO_MESSAGE
    elif b > f:
        assert action == K.NEGATIVE
    else:
        assert action in (K.POSITIVE_SELF, K.POSITIVE_SOCIAL)


def test_initial_rejects_bad_fraction():
    with pytest.raises(CoachError):
        initial_probabilities(1.5)


def test_boltzmann_values():
    p = boltzmann_probabilities([5.0, 0.0, 0.0, 0.0], 5.0)
    assert p[0] == pytest.approx(math.e / (math.e + 3), rel=1e-14)
    assert np.allclose(boltzmann_probabilities([1, 1, 1, 1], 0.01), 0.25)
    # huge predictions must not overflow
    assert np.all(np.isfinite(boltzmann_probabilities([1e6, 0, 0, -1e6], 5.0)))
    with pytest.raises(CoachError):
        boltzmann_probabilities([0, 0, 0, 0], 0.0)
    with pytest.raises(CoachError):
        boltzmann_probabilities([np.nan, 0, 0, 0], 5.0)


@given(st.lists(st.floats(-100, 100), min_size=4, max_size=4), st.floats(0.1, 50))
def test_boltzmann_order_preserving(preds, t):
    p = boltzmann_probabilities(preds, t)
    assert p.sum() == pytest.approx(1.0)
    for i in range(4):
        for j in range(4):
            if preds[i] > preds[j]:
                assert p[i] >= p[j]


def test_sample_index_boundaries():
    probs = [0.25, 0.25, 0.25, 0.25]
    assert sample_index(probs, 0.0) == 0
    assert sample_index(probs, 0.2499) == 0
    assert sample_index(probs, 0.25) == 1
    assert sample_index(probs, 0.9999999) == 3
    assert sample_index([0.0, 1.0, 0.0, 0.0], 0.0) == 1


def test_staleness_boundary():
    now = 100_000
    assert is_fresh(now - STALENESS_SECONDS + 1, now)
    assert not is_fresh(now - STALENESS_SECONDS, now)  # exactly 12 h counts as stale
    assert not is_fresh(None, now)


def _policy(mode=PolicyMode.INITIAL, model=None):
    return PolicyState(np.random.default_rng(0), mode=mode, model=model)


def test_daily_decide_suppressed_and_arm():
    p = profile()
    today = date(2015, 1, 6)
    d = daily_decide(_policy(), p, PatientHistory(last_upload=None), today, 0)
    assert d.suppressed
    with pytest.raises(CoachError):
        daily_decide(_policy(), profile(arm=Arm.CONTROL), PatientHistory(last_upload=0), today, 10)


def _zero_model(bias_action=None):
    beta = np.zeros(len(COLUMNS))
    if bias_action is not None:
        beta[11 + bias_action] = 5.0
    return ModelState(beta, COLUMNS, Standardization.identity(), 1e-6, 10, None, 0.0)


def test_daily_decide_learned():
    p = profile()
    policy = _policy(PolicyMode.LEARNED, _zero_model(bias_action=0))
    d = daily_decide(policy, p, PatientHistory(last_upload=0), date(2015, 1, 6), 3600)
    assert d.mode == PolicyMode.LEARNED
    assert np.allclose(d.predicted_rewards, [5, 0, 0, 0])
    assert d.action_probabilities[0] == pytest.approx(math.e / (math.e + 3))
    assert len(d.draws) == 1
    with pytest.raises(CoachError):
        daily_decide(_policy(PolicyMode.LEARNED), p, PatientHistory(last_upload=0), date(2015, 1, 6), 10)


def test_predict_rejects_foreign_manifest():
    m = ModelState(np.zeros(len(COLUMNS)), tuple(f"c{i}" for i in range(len(COLUMNS))),
                   Standardization.identity(), 0.0, 1, None, 0.0)
    from smscoach.features import ContextVector

    with pytest.raises(ManifestMismatchError):
        predict_changes(m, ContextVector.from_array([0.0] * 10))


def test_switch_happens_once():
    policy = _policy()
    assert not policy.observe_training_size(policy.switch_threshold - 1)
    assert policy.observe_training_size(policy.switch_threshold)
    assert policy.mode == PolicyMode.LEARNED
    assert not policy.observe_training_size(10_000)


p140 = profile(goal=140.0)


@pytest.mark.parametrize(
    "history, cohort, log, want",
    [
        ([150.0], [], [], K.WEEKLY_REMINDER),  # first week: no baseline
        ([100.0, 130.0], [30.0], [], K.WEEKLY_REMINDER),  # below the goal
        ([150.0, 140.0], [-10.0], [], K.WEEKLY_REMINDER),  # no increase
        ([100.0, 150.0], [50.0, 20.0], [], K.MAX_INCREASE),
        ([100.0, 200.0, 150.0, 180.0], [30.0, 10.0], [], K.MAX_SOCIAL),
        ([100.0, 200.0, 150.0, 180.0], [30.0, 40.0], [], K.SIG_INCREASE),
        ([100.0, 200.0, 300.0, 400.0, 405.0], [5.0, 1.0, 2.0, 40.0], [], K.SIG_SOCIAL),
        ([100.0, 150.0], [50.0], [0], K.WEEKLY_REMINDER),  # cooldown
        ([100.0, 110.0, 120.0, 130.0, 200.0], [70.0], [1], K.MAX_INCREASE),
    ],
)
def test_weekly_summary(history, cohort, log, want):
    assert weekly_summary_decide(p140, history, cohort, log, WeeklyRules(3, 1.0)) == want


def test_max_social_needs_sole_winner():
    got = weekly_summary_decide(p140, [100.0, 200.0, 150.0, 180.0], [30.0, 30.0], [])
    assert got == K.SIG_INCREASE


def test_control_reminder_weekly():
    p = profile(arm=Arm.CONTROL)
    days = [d for d in range(21) if control_decide(p, date.fromordinal(p.enrolled_on.toordinal() + d))]
    assert days == [0, 7, 14]
    with pytest.raises(CoachError):
        control_decide(profile(), date(2015, 1, 4))
