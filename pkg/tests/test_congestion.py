import random

import pytest

from leoqsim.congestion import (
    CongestionConfig,
    CongestionLabel,
    NodeCongestionState,
    classify,
    maybe_notify,
)

CFG = CongestionConfig(alpha=250.0, beta=450.0, window_s=1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        CongestionConfig(alpha=500.0, beta=450.0)
    with pytest.raises(ValueError):
        CongestionConfig(alpha=0.0, beta=450.0)
    with pytest.raises(ValueError):
        CongestionConfig(window_s=0.0)


class TestClassify:
    def test_below_alpha_is_idle(self):
        assert classify(100.0, CFG) is CongestionLabel.IDLE

    def test_above_beta_is_busy(self):
        assert classify(500.0, CFG) is CongestionLabel.BUSY

    def test_between_is_transition(self):
        assert classify(300.0, CFG) is CongestionLabel.TRANSITION

    def test_boundaries_are_transition(self):
        assert classify(250.0, CFG) is CongestionLabel.TRANSITION
        assert classify(450.0, CFG) is CongestionLabel.TRANSITION

    def test_monotone_in_rate(self):
        order = {CongestionLabel.IDLE: 0, CongestionLabel.TRANSITION: 1, CongestionLabel.BUSY: 2}
        prev = -1
        for rate in [0, 50, 249.9, 250, 350, 450, 450.1, 800, 10_000]:
            cur = order[classify(float(rate), CFG)]
            assert cur >= prev
            prev = cur


class TestRateWindow:
    def test_no_arrivals_means_zero(self):
        st = NodeCongestionState()
        st.record_arrival(0.5, CFG)
        st.evaluate(2.0, CFG)
        assert st.rate == 0.0

    def test_k_arrivals_in_window(self):
        st = NodeCongestionState()
        for k in range(10):
            st.record_arrival(5.0 + k * 0.1, CFG)
        st.evaluate(5.95, CFG)
        assert st.rate == 10.0

    def test_window_is_half_open(self):
        # An arrival exactly window seconds ago has left the window.
        st = NodeCongestionState()
        st.record_arrival(1.0, CFG)
        st.evaluate(2.0, CFG)
        assert st.rate == 0.0

    def test_poisson_rate_estimate(self):
        # Monte-Carlo: Poisson arrivals at 400/s, estimates averaged over 100
        # disjoint windows must land within 3*sqrt(400) of the true rate.
        rng = random.Random(99)
        st = NodeCongestionState()
        t = 0.0
        estimates = []
        next_eval = 1.0
        while t < 100.0:
            t += rng.expovariate(400.0)
            while next_eval <= t and len(estimates) < 100:
                st.evaluate(next_eval, CFG)
                estimates.append(st.rate)
                next_eval += 1.0
            st.record_arrival(t, CFG)
        mean = sum(estimates) / len(estimates)
        assert abs(mean - 400.0) <= 3 * 400.0**0.5


class TestNotifications:
    def test_idle_transition_idle_is_silent(self):
        st = NodeCongestionState()
        seen = []
        t = 0.0
        # ~300/s for one second (transition band), then silence
        for k in range(300):
            t = k / 300.0
            n = st.record_arrival(t, CFG)
            if n:
                seen.append(n)
        n = st.evaluate(3.0, CFG)
        if n:
            seen.append(n)
        assert st.label is CongestionLabel.IDLE
        assert seen == []

    def test_busy_crossing_notifies_once(self):
        st = NodeCongestionState()
        seen = []
        for k in range(600):
            n = st.record_arrival(k / 600.0, CFG)
            if n:
                seen.append(n)
        assert len(seen) == 1
        assert seen[0].label is CongestionLabel.BUSY
        assert st.is_busy
        # staying busy produces no duplicates
        for k in range(600):
            n = st.record_arrival(1.0 + k / 600.0, CFG)
            assert n is None

    def test_busy_then_idle_roundtrip(self):
        st = NodeCongestionState()
        seen = []
        for k in range(600):
            n = st.record_arrival(k / 600.0, CFG)
            if n:
                seen.append(n)
        n = st.evaluate(5.0, CFG)
        seen.append(n)
        assert [x.label for x in seen] == [CongestionLabel.BUSY, CongestionLabel.IDLE]
        assert not st.is_busy

    def test_notifications_alternate(self):
        # Under an arbitrary rate trace the notification stream must alternate.
        rng = random.Random(17)
        st = NodeCongestionState()
        labels = []
        t = 0.0
        for _ in range(200):
            burst_rate = rng.choice([50, 200, 350, 600, 900])
            for _ in range(burst_rate // 4):
                t += 4.0 / burst_rate
                n = st.record_arrival(t, CFG)
                if n:
                    labels.append(n.label)
        for a, b in zip(labels, labels[1:]):
            assert a is not b

    def test_maybe_notify_matrix(self):
        B, I, T = CongestionLabel.BUSY, CongestionLabel.IDLE, CongestionLabel.TRANSITION
        assert maybe_notify(I, B) is B
        assert maybe_notify(B, I) is I
        assert maybe_notify(B, B) is None
        assert maybe_notify(I, I) is None
        assert maybe_notify(I, T) is None
        assert maybe_notify(B, T) is None
