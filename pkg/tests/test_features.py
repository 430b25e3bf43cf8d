from datetime import date

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import profile
from smscoach.core import CoachError, DailyRecord, MessageKind
from smscoach.features import (
    COLUMNS,
    N_CONTEXT,
    RECENCY_CAP,
    ContextVector,
    Standardization,
    build_context,
    design_matrix,
    kesler_augment,
    manifest_hash,
    recency_features,
)

D = date


def test_layout():
    assert len(COLUMNS) == 76
    assert len(set(COLUMNS)) == 76
    assert COLUMNS[0] == "intercept"
    assert COLUMNS[11:15] == tuple(f"action_{k}" for k in ("negative", "positive_self", "positive_social", "no_message"))
    # the manifest hash is part of the log format; changing the layout must change it
    assert manifest_hash() == manifest_hash(list(COLUMNS))
    assert manifest_hash(COLUMNS[:-1]) != manifest_hash()


def test_recency():
    log = [(D(2015, 1, 4), MessageKind.NO_MESSAGE), (D(2015, 1, 5), MessageKind.NEGATIVE),
           (D(2015, 1, 6), MessageKind.POSITIVE_SELF)]
    assert recency_features(log, D(2015, 1, 7)) == (2.0, 1.0, float(RECENCY_CAP), 3.0)
    assert recency_features([], D(2015, 1, 7)) == (14.0,) * 4
    assert recency_features([(D(2014, 1, 1), MessageKind.NEGATIVE)], D(2015, 1, 7))[0] == 14.0
    with pytest.raises(CoachError):
        recency_features(log, D(2015, 1, 6))
    with pytest.raises(CoachError):
        recency_features(list(reversed(log)), D(2015, 1, 7))


def test_build_context_oracle():
    p = profile(goal=140.0)
    records = [
        DailyRecord(p.id, D(2015, 1, 3), 99.0),  # before enrollment week
        DailyRecord(p.id, D(2015, 1, 4), 30.0),
        DailyRecord(p.id, D(2015, 1, 6), 20.0),
        DailyRecord(p.id, D(2015, 1, 7), 15.0),  # today: not yet known
    ]
    log = [(D(2015, 1, 5), MessageKind.NEGATIVE)]
    ctx = build_context(p, records, log, D(2015, 1, 7))
    assert ctx.as_list() == pytest.approx(
        [20.0, 50.0, 50 / 140, (50 / 140) / (4 / 7), 55.0, 1.0, 2.0, 14.0, 14.0, 14.0], rel=1e-15
    )


def test_context_roundtrip_and_validation():
    v = list(range(N_CONTEXT))
    assert ContextVector.from_array(v).as_list() == v
    with pytest.raises(CoachError):
        ContextVector.from_array(v[:-1])
    with pytest.raises(CoachError):
        ContextVector.from_array([np.nan] + v[1:])


contexts = arrays(np.float64, (5, N_CONTEXT), elements=st.floats(-50, 50))


@given(contexts, st.lists(st.integers(0, 3), min_size=5, max_size=5))
def test_design_structure(ctx, actions):
    X = design_matrix(ctx, actions)
    assert X.shape == (5, 76)
    assert np.all(X[:, 0] == 1.0)
    onehot = X[:, 11:15]
    assert np.all(onehot.sum(axis=1) == 1.0)
    assert list(onehot.argmax(axis=1)) == actions
    # only the chosen action's interaction block is populated
    blocks = X[:, 15:55].reshape(5, 4, N_CONTEXT)
    for i, a in enumerate(actions):
        assert np.array_equal(blocks[i, a], ctx[i])
        assert not np.any(np.delete(blocks[i], a, axis=0))


def test_single_row_matches_batch():
    rng = np.random.default_rng(0)
    raw = rng.normal(5, 2, (30, N_CONTEXT))
    std = Standardization.from_pool(raw)
    row = kesler_augment(ContextVector.from_array(raw[3]), MessageKind.POSITIVE_SOCIAL, std, target=1.2)
    assert np.array_equal(row.values, design_matrix(raw, [2] * 30, std)[3])
    assert row.target == 1.2


def test_standardization():
    raw = np.array([[1.0] * N_CONTEXT, [3.0] * N_CONTEXT])
    raw[:, 5] = 7.0  # constant column keeps a floor scale
    std = Standardization.from_pool(raw)
    z = std.apply(raw)
    assert np.allclose(z[:, 0], [-1, 1])
    assert np.all(z[:, 5] == 0)
    back = Standardization.from_dict(std.to_dict())
    assert np.array_equal(back.mean, std.mean) and np.array_equal(back.scale, std.scale)
