from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from natwalk import adapt
from natwalk.adapt import AdaptConfig, AdaptState, SnapshotError, restore, snapshot, update

CFG = AdaptConfig()


def oracle(returns, theta=F(1000), beta=F(4, 5), delta0=F(9, 10000), lam=F(9, 10)):
    """Exact rational replay of the schedule, yielding (r_mean, alpha, delta, c_mean)."""
    r_mean = alpha = c_mean = F(0)
    delta = delta0
    for r in returns:
        r_mean = beta * r_mean + (1 - beta) * F(r)
        high = r_mean > theta
        if high and c_mean < F(1, 2):
            delta *= lam
        elif high:
            alpha += delta
        else:
            alpha = max(F(0), alpha - delta)
        c_mean = beta * c_mean + (1 - beta) * (1 if high else 0)
        yield r_mean, alpha, delta, c_mean


def run(returns, cfg=CFG):
    s = AdaptState.initial(cfg)
    out = []
    for r in returns:
        s = update(s, r, cfg)
        out.append(s)
    return out


class TestConfig:
    def test_defaults(self):
        assert (CFG.threshold, CFG.smoothing, CFG.delta, CFG.decay) == (1000.0, 0.8, 9e-4, 0.9)

    @pytest.mark.parametrize("kw", [dict(smoothing=1.0), dict(decay=1.1), dict(delta=0.0),
                                    dict(smoothing=-0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AdaptConfig(**kw)


class TestUpdate:
    def test_first_low_step(self):
        s = update(AdaptState.initial(CFG), 500.0, CFG)
        assert s.r_mean == pytest.approx(100.0)
        assert s.alpha == 0.0
        assert s.c_mean == 0.0
        assert s.last_branch == adapt.TOO_LOW

    def test_constant_high_return(self):
        states = run([2000.0] * 12)
        expected = list(oracle([2000] * 12))
        # crosses the threshold on the fourth episode
        assert states[2].r_mean < 1000 < states[3].r_mean
        assert states[3].r_mean == pytest.approx(1180.8, rel=1e-12)
        assert states[3].last_branch == adapt.NEWLY_HIGH
        assert states[3].delta == pytest.approx(0.9 * 9e-4)
        assert states[3].alpha == 0.0
        # four high episodes later the success indicator passes one half
        assert states[6].c_mean == pytest.approx(0.5904, rel=1e-12)
        assert states[7].last_branch == adapt.HIGH_FOR_LONG
        decayed = 9e-4 * 0.9**4
        assert states[7].alpha == pytest.approx(decayed, rel=1e-12)
        assert states[8].alpha == pytest.approx(2 * decayed, rel=1e-12)
        for s, (r, a, d, c) in zip(states, expected):
            assert (s.r_mean, s.alpha, s.delta, s.c_mean) == pytest.approx(
                (float(r), float(a), float(d), float(c)), rel=1e-12, abs=1e-15)

    def test_boundary_goes_to_raise_branch(self):
        s = AdaptState(r_mean=5000.0, alpha=0.0, delta=1e-3, c_mean=0.5)
        assert update(s, 5000.0, CFG).last_branch == adapt.HIGH_FOR_LONG

    def test_threshold_is_strict(self):
        s = AdaptState(r_mean=1000.0, alpha=0.01, delta=1e-3, c_mean=0.9)
        nxt = update(s, 1000.0, CFG)
        assert nxt.last_branch == adapt.TOO_LOW
        assert nxt.alpha == pytest.approx(0.009)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            update(AdaptState.initial(CFG), float("nan"), CFG)
        with pytest.raises(ValueError):
            update(AdaptState.initial(CFG), float("inf"), CFG)

    def test_alpha_decays_to_zero_when_low(self):
        s = AdaptState(r_mean=0.0, alpha=0.05, delta=1e-3, c_mean=0.0)
        for _ in range(60):
            s = update(s, 10.0, CFG)
        assert s.alpha == 0.0

    def test_disabled(self):
        s = AdaptState(r_mean=2000.0, alpha=0.3, delta=1e-3, c_mean=0.9)
        d = adapt.disabled(s)
        assert d.alpha == 0.0 and d.r_mean == s.r_mean


returns = st.lists(st.floats(-2000, 3000, allow_nan=False), min_size=1, max_size=80)


@given(returns)
def test_invariants(rs):
    s = AdaptState.initial(CFG)
    for r in rs:
        nxt = update(s, r, CFG)
        assert nxt.alpha >= 0.0
        assert abs(nxt.alpha - s.alpha) <= s.delta + 1e-18
        assert 0.0 < nxt.delta <= s.delta
        assert 0.0 <= nxt.c_mean <= 1.0
        assert nxt.last_branch in (adapt.NEWLY_HIGH, adapt.HIGH_FOR_LONG, adapt.TOO_LOW)
        s = nxt


@given(st.lists(st.integers(-2000, 3000), min_size=1, max_size=60))
def test_matches_exact_oracle(rs):
    for s, (r, a, d, c) in zip(run([float(x) for x in rs]), oracle(rs)):
        assert s.r_mean == pytest.approx(float(r), rel=1e-9, abs=1e-9)
        assert s.alpha == pytest.approx(float(a), rel=1e-9, abs=1e-12)
        assert s.delta == pytest.approx(float(d), rel=1e-12)
        assert s.c_mean == pytest.approx(float(c), rel=1e-9, abs=1e-12)


class TestSnapshot:
    def test_fresh_canonical(self):
        assert snapshot(AdaptState.initial(CFG)) == (
            "AQAAAAAAAAAAAAAAAAAAAACSy39Iv31NPwAAAAAAAAAA:d9096e48")

    @given(st.floats(-1e6, 1e6), st.floats(0, 10), st.floats(1e-12, 1e-3), st.floats(0, 1))
    def test_round_trip(self, r, a, d, c):
        s = AdaptState(r_mean=r, alpha=a, delta=d, c_mean=c)
        assert restore(snapshot(s)) == s

    @pytest.mark.parametrize("blob", ["", "garbage", "AQAA:00000000", "!!!:1234"])
    def test_corrupt(self, blob):
        with pytest.raises(SnapshotError):
            restore(blob)

    def test_tampered_payload(self):
        body, crc = snapshot(AdaptState(alpha=0.5)).split(":")
        flipped = body[:-2] + ("A" if body[-2] != "A" else "B") + body[-1]
        with pytest.raises(SnapshotError):
            restore(f"{flipped}:{crc}")

    def test_json(self):
        import json

        d = json.loads(adapt.to_json(AdaptState(alpha=0.25)))
        assert d["alpha"] == 0.25
