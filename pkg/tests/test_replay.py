import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdrl.errors import UsageError
from sdrl.replay import (PioneerGate, RingBuffer, Transition, make_batch, promote_episode,
                         raise_threshold)


def tr(i, r=0.0, episode=-1, a=0.0):
    return Transition(np.array([float(i), 0.0]), np.array([a]), r, np.array([float(i) + 1, 0.0]),
                      False, episode)


def buf(capacity=10):
    return RingBuffer(capacity, 2, 1, [-1.0], [1.0])


def test_push_into_empty():
    b = buf()
    b.push(tr(0))
    assert len(b) == 1


def test_ring_eviction():
    b = buf(2)
    for i in (1, 2, 3):
        b.push(tr(i))
    assert b.contents().s[:, 0].tolist() == [2.0, 3.0]


@pytest.mark.parametrize("bad", [
    dict(r=math.nan), dict(r=math.inf),
    dict(s=np.array([np.nan, 0.0])), dict(a=np.array([2.0]))])
def test_push_rejects_invalid(bad):
    b = buf()
    b.push(tr(0))
    t = tr(1)
    for k, v in bad.items():
        setattr(t, k, v)
    with pytest.raises(ValueError):
        b.push(t)
    assert len(b) == 1


def test_sample_single_item_repeats():
    b = buf()
    b.push(tr(7))
    s = b.sample(4, np.random.default_rng(0))
    assert s.s[:, 0].tolist() == [7.0] * 4


def test_sample_deterministic():
    b = buf(50)
    b.extend(tr(i) for i in range(30))
    x = b.sample(16, np.random.default_rng(3)).s
    y = b.sample(16, np.random.default_rng(3)).s
    assert np.array_equal(x, y)


def test_sample_uniformity():
    # binomial(10000, 0.1): sd = 30, so [800, 1200] is a +-6.7 sd band
    b = buf(10)
    b.extend(tr(i) for i in range(10))
    draws = b.sample(10_000, np.random.default_rng(0)).s[:, 0].astype(int)
    counts = np.bincount(draws, minlength=10)
    assert np.all((counts >= 800) & (counts <= 1200))


def test_sample_empty_raises():
    with pytest.raises(UsageError):
        buf().sample(1, np.random.default_rng(0))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(0, 60), st.integers(0, 1000))
def test_capacity_and_support(capacity, n_push, seed):
    b = buf(capacity)
    b.extend(tr(i) for i in range(n_push))
    assert len(b) == min(capacity, n_push)
    kept = list(range(max(0, n_push - capacity), n_push))
    assert b.contents().s[:, 0].astype(int).tolist() == kept
    if n_push:
        drawn = b.sample(25, np.random.default_rng(seed)).s[:, 0].astype(int)
        assert set(drawn) <= set(kept)


def test_state_dict_roundtrip_after_wrap():
    b = buf(4)
    b.extend(tr(i, r=i * 0.5, episode=i) for i in range(7))
    c = buf(4)
    c.load_state_dict(b.state_dict())
    for name in ("s", "a", "r", "s2", "terminal", "episode"):
        assert np.array_equal(getattr(b.contents(), name), getattr(c.contents(), name))
    b.push(tr(9))
    c.push(tr(9))
    assert np.array_equal(b.contents().s, c.contents().s)


def test_make_batch():
    b = make_batch([tr(1, 0.5, 3), tr(2, -1.0, 3)])
    assert b.s.shape == (2, 2) and b.r.tolist() == [0.5, -1.0] and len(b) == 2


def test_promote_above_threshold():
    pb = buf(100)
    staged = [tr(i) for i in range(5)]
    gate = PioneerGate(r_p=200.0)
    assert promote_episode(staged, pb, 210.0, gate, 1)
    assert len(pb) == 5 and staged == []


def test_promote_below_threshold_empties_staging():
    pb = buf(100)
    staged = [tr(i) for i in range(5)]
    assert not promote_episode(staged, pb, 150.0, PioneerGate(r_p=200.0), 1)
    assert len(pb) == 0 and staged == []


def test_promote_exactly_at_threshold():
    pb = buf(100)
    assert promote_episode([tr(0)], pb, 200.0, PioneerGate(r_p=200.0), 1)


def test_first_episode_always_promoted():
    pb = buf(100)
    assert promote_episode([tr(0)], pb, -1e9, PioneerGate(), 1)


def test_raise_threshold_max_rule():
    gate = PioneerGate(r_p=10.0)
    raise_threshold(gate, [1.0, 2.0, 3.0])
    assert gate.r_p == 10.0


def test_raise_threshold_constant_returns():
    gate = PioneerGate()
    raise_threshold(gate, [4.5] * 20)
    assert gate.r_p == 4.5


def test_raise_threshold_uses_window_and_percentile():
    gate = PioneerGate()
    returns = [1000.0] * 5 + list(range(20))
    raise_threshold(gate, returns)
    assert gate.r_p == pytest.approx(np.percentile(np.arange(20.0), 60))


def test_raise_threshold_needs_history():
    with pytest.raises(UsageError):
        raise_threshold(PioneerGate(), [])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=80))
def test_gate_monotone_and_sound(returns):
    gate = PioneerGate()
    pb = RingBuffer(10_000, 2, 1, [-1.0], [1.0])
    history, trace = [], []
    for e, ret in enumerate(returns, 1):
        promote_episode([tr(e, episode=e)], pb, ret, gate, e)
        history.append(ret)
        raise_threshold(gate, history)
        trace.append(gate.r_p)
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    admitted = {ep: (ret, rp) for ep, ret, rp in gate.promotions}
    for ep in pb.contents().episode:
        ret, rp = admitted[int(ep)]
        assert ret >= rp and ret == returns[int(ep) - 1]
