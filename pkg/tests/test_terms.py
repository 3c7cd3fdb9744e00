import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anneal_lab.schedule import build_constant, build_piecewise, build_wsd, lr_series
from anneal_lab.terms import (
    BRUTEFORCE_MAX_STEPS,
    MomentumConfig,
    TermSeries,
    asmt_from_lr,
    asmt_increments,
    asmt_series,
    cmmt_bruteforce,
    cmmt_series,
    compensated_cumsum,
    forward_series,
    term_series,
)

# Frozen oracles, computed with mpmath at 40 digits by literal evaluation
# of the moment recurrences (m, v, bias correction, accumulation).
ASMT_LINEAR_50 = 4.8756822320289467648  # lr_t = 1e-3 - 1e-5 t, 50 steps
ASMT_PIECEWISE = [0.0, 0.0, 0.0, 0.57414164894445084244, 1.0378080583729656432,
                  1.4242557851177026039, 1.9983974340621534464, 2.4990336604944937044]
CMMT_SINGLE_DROP = 0.0040104399353383871606  # d=1e-4 at k=50, lambda=0.99, s=100


class TestForward:
    def test_constant(self):
        assert forward_series(build_constant(1e-4, 100))[-1] == pytest.approx(1e-2, rel=1e-14)

    def test_warmup_ramp_triangle(self):
        T, eta = 400, 3e-4
        spec = build_wsd(eta, T + 1, T, 1 / (T + 1))  # ramp over T steps then a single decay step
        S = forward_series(spec)[T - 1]
        assert abs(S - eta * T / 2) <= eta

    def test_wsd_phase_areas(self):
        S = forward_series(build_wsd(2e-4, 1000, 100, 0.1, 1))
        assert S[-1] == pytest.approx(0.18, rel=1e-13)
        exact = sum(Fraction(v) for v in lr_series(build_wsd(2e-4, 1000, 100, 0.1, 1)).tolist())
        assert S[-1] == pytest.approx(float(exact), rel=1e-15)

    def test_compensated_beats_naive(self):
        x = np.full(100_000, 0.1)
        exact = float(Fraction(0.1) * 100_000)
        assert abs(compensated_cumsum(x)[-1] - exact) <= abs(np.cumsum(x)[-1] - exact)
        assert compensated_cumsum(x)[-1] == pytest.approx(exact, rel=1e-15)


class TestASMT:
    def test_constant_schedule_is_exactly_zero(self):
        M = asmt_series(build_constant(1e-3, 500))
        assert np.all(M == 0.0)

    def test_constant_slope_closed_form(self):
        d, T = 1e-5, 50
        lr = 1e-3 - d * np.arange(T)
        M = asmt_from_lr(lr, MomentumConfig())
        closed = (T - 1) * d / math.sqrt(d * d + 1e-8)
        assert M[-1] == pytest.approx(closed, rel=1e-6)
        assert M[-1] == pytest.approx(ASMT_LINEAR_50, rel=1e-12)

    def test_matches_literal_recurrence_oracle(self):
        lr = np.array([1e-3, 1e-3, 1e-3, 6e-4, 6e-4, 6e-4, 2e-4, 2e-4])
        np.testing.assert_allclose(asmt_from_lr(lr, MomentumConfig()), ASMT_PIECEWISE, rtol=1e-12, atol=0)

    def test_increasing_lr_is_negative(self):
        lr = np.linspace(1e-5, 1e-3, 300)
        assert asmt_from_lr(lr, MomentumConfig())[-1] < 0

    def test_variant_mismatch(self):
        with pytest.raises(ValueError):
            asmt_series(build_constant(1.0, 3), MomentumConfig(variant="cmmt"))


class TestCMMT:
    def test_constant_is_zero(self):
        spec = build_constant(1e-3, 200)
        assert np.all(cmmt_series(spec, MomentumConfig("cmmt", lambda_decay=0.99)) == 0)
        assert cmmt_bruteforce(spec, 0.99) == 0

    def test_single_drop(self):
        # steps 0..100 so s = 100 in the double sum's 1-based counting
        spec = build_piecewise([(0, 2e-4), (50, 1e-4)], 101)
        expected = 1e-4 * (1 - 0.99**51) / 0.01
        assert expected == pytest.approx(4.01e-3, rel=1e-3)
        assert cmmt_series(spec, MomentumConfig("cmmt", lambda_decay=0.99))[-1] == pytest.approx(CMMT_SINGLE_DROP, rel=1e-12)
        assert cmmt_bruteforce(spec, 0.99) == pytest.approx(CMMT_SINGLE_DROP, rel=1e-12)

    def test_random_schedule_matches_bruteforce(self):
        rng = np.random.default_rng(7)
        steps = [0] + sorted(rng.choice(np.arange(1, 500), 30, replace=False).tolist())
        spec = build_piecewise(list(zip(steps, rng.uniform(0, 1e-3, len(steps)))), 500)
        fast = cmmt_series(spec, MomentumConfig("cmmt", lambda_decay=0.999))[-1]
        assert fast == pytest.approx(cmmt_bruteforce(spec, 0.999), rel=1e-10)

    def test_small_lambda_telescopes(self):
        spec = build_wsd(1e-3, 300, 20, 0.4)
        lr = lr_series(spec)
        lam = 1e-9
        # cross terms are bounded by lam / (1 - lam) * sum |d|
        bound = lam / (1 - lam) * np.abs(np.diff(lr)).sum() + 1e-18
        assert abs(cmmt_bruteforce(spec, lam) - (lr[0] - lr[-1])) <= bound

    def test_bruteforce_guard(self):
        with pytest.raises(ValueError, match="refusing"):
            cmmt_bruteforce(build_constant(1.0, BRUTEFORCE_MAX_STEPS + 1), 0.99)


class TestConfigAndSeries:
    @pytest.mark.parametrize(
        "kwargs", [{"beta1": 1.0}, {"beta2": -0.1}, {"epsilon": 0.0}, {"lambda_decay": 1.0}, {"variant": "adam"}]
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            MomentumConfig(**kwargs)

    def test_term_series_csv(self, tmp_path):
        ts = term_series(build_wsd(1.0, 4, 0, 0.5))
        text = ts.to_csv(tmp_path / "t.csv")
        lines = text.splitlines()
        assert lines[0] == "step,S,M" and len(lines) == 5
        assert (tmp_path / "t.csv").read_text() == text
        assert ts.length == 4

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            TermSeries(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# properties


@st.composite
def piecewise_lr(draw, max_T=2000, monotone=False):
    T = draw(st.integers(2, max_T))
    n = draw(st.integers(1, 12))
    steps = sorted(draw(st.sets(st.integers(1, T - 1), max_size=n)))
    vals = draw(st.lists(st.floats(1e-6, 1e-2), min_size=len(steps) + 1, max_size=len(steps) + 1))
    if monotone:
        vals = sorted(vals, reverse=True)
    return build_piecewise(list(zip([0] + steps, vals)), T)


@settings(max_examples=100, deadline=None)
@given(piecewise_lr())
def test_forward_nondecreasing_and_exact(spec):
    S = forward_series(spec)
    assert np.all(np.diff(S) >= 0)
    exact = float(sum(Fraction(v) for v in lr_series(spec).tolist()))
    assert abs(S[-1] - exact) <= 1e-12 * exact


@settings(max_examples=50, deadline=None)
@given(piecewise_lr(), st.sampled_from([0.99, 0.999]))
def test_cmmt_recurrence_equals_double_sum(spec, lam):
    fast = cmmt_series(spec, MomentumConfig("cmmt", lambda_decay=lam))[-1]
    slow = cmmt_bruteforce(spec, lam)
    assert fast == pytest.approx(slow, rel=1e-10, abs=1e-18)


@settings(max_examples=100, deadline=None)
@given(piecewise_lr(monotone=True))
def test_asmt_nonincreasing_schedule_gives_nondecreasing_nonnegative(spec):
    M = asmt_series(spec)
    assert np.all(M >= 0)
    assert np.all(np.diff(M) >= 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-6, 1e-3), min_size=2, max_size=300))
def test_asmt_scale_invariance(decrements):
    # eps far below every d^2 so the O(eps/(c d)^2) term is negligible
    cfg = MomentumConfig(epsilon=1e-16)
    lr = 1.0 - np.concatenate(([0.0], np.cumsum(decrements)))
    base = asmt_increments(lr, cfg)[1:]
    scaled = asmt_increments(10.0 * lr, cfg)[1:]
    np.testing.assert_allclose(scaled, base, rtol=1e-3)


@settings(max_examples=40, deadline=None)
@given(piecewise_lr(max_T=500))
def test_series_lengths_match_schedule(spec):
    ts = term_series(spec)
    assert ts.S.shape == ts.M.shape == (spec.t_total,)
