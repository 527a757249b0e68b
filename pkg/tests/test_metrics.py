import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rhmpc.errors import DegenerateReferenceError, DimensionError
from rhmpc.metrics import ROW_NAMES, EventWindow, IndexReport, combine, compare, iae, iavu, itae

EVENTS = [EventWindow(0, 1.0, 3.0), EventWindow(1, 2.0, 3.0), EventWindow(0, 4.0, 4.0), EventWindow(1, 4.0, 4.0)]


class Log:
    def __init__(self, t, r_d, y, u):
        self.t, self.r_d, self.y, self.u_applied = t, r_d, y, u


def synthetic(seed=0, n=101):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 10.0, n)
    r = np.zeros((n, 2))
    y = rng.normal(size=(n, 2))
    u = np.cumsum(rng.normal(size=(n, 2)), axis=0)
    return Log(t, r, y, u)


class TestAbsoluteIndices:
    def test_iae_constant(self):
        t = np.linspace(0.0, 5.0, 11)
        assert iae(np.full(11, 2.0), t) == 10.0
        assert iae(np.zeros(11), t) == 0.0

    def test_iae_ramp(self):
        t = np.linspace(0.0, 1.0, 1001)
        assert iae(t, t) == pytest.approx(0.5, abs=1e-6)

    def test_iae_uses_absolute_value(self):
        t = np.linspace(0.0, 2.0, 3)
        assert iae([-1.0, -1.0, -1.0], t) == 2.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            iae([1.0, 2.0], [0.0, 1.0, 2.0])
        with pytest.raises(DimensionError):
            iavu([1.0, 2.0], [0.0, 1.0, 2.0])

    def test_itae(self):
        t = np.linspace(0.0, 4.0, 401)
        assert itae(np.zeros(401), t, 0.0, 2.0) == 0.0
        assert itae(np.ones(401), t, 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)

    def test_itae_ignores_error_at_event(self):
        t = np.linspace(0.0, 4.0, 401)
        e = np.zeros(401)
        e[100] = 1e6
        assert itae(e, t, 1.0, 2.0) == 0.0

    def test_itae_window_outside(self):
        t = np.linspace(0.0, 4.0, 5)
        with pytest.raises(ValueError):
            itae(np.ones(5), t, 3.0, 2.0)

    def test_iavu(self):
        assert iavu(np.full(7, 3.3)) == 0.0
        assert iavu([0.0, 1.0, 0.0]) == 2.0
        assert iavu(np.linspace(0.0, 1.0, 2)) == 1.0
        assert iavu([0.0, 0.25, 0.5, 0.75, 1.0]) == 1.0


class TestCompare:
    def test_identical_logs_are_all_ones(self):
        log = synthetic()
        rep = compare(log, copy.deepcopy(log), EVENTS)
        assert np.all(rep.ratios == 1.0) and rep.J == 1.0
        assert rep.names == ROW_NAMES

    def test_identical_zero_logs_are_all_ones(self):
        n = 11
        t = np.linspace(0, 10, n)
        log = Log(t, np.zeros((n, 2)), np.zeros((n, 2)), np.zeros((n, 2)))
        assert compare(log, log, EVENTS).J == 1.0

    def test_half_error(self):
        ref = synthetic()
        test = Log(ref.t, ref.r_d, 0.5 * ref.y, ref.u_applied)
        rep = compare(test, ref, EVENTS)
        np.testing.assert_allclose(rep.ratios[:6], 0.5, rtol=1e-14)
        np.testing.assert_array_equal(rep.ratios[6:], 1.0)
        assert rep.J == pytest.approx((2 * 0.5 + 4 * 0.5 + 2 * 1.0) / 8, rel=1e-14)

    def test_degenerate_reference(self):
        ref = synthetic()
        ref.u_applied = np.zeros_like(ref.u_applied)
        with pytest.raises(DegenerateReferenceError) as info:
            compare(synthetic(1), ref, EVENTS)
        assert info.value.row == "RIAVU1"

    def test_grid_mismatch(self):
        a, b = synthetic(n=101), synthetic(n=51)
        with pytest.raises(DimensionError):
            compare(a, b, EVENTS)

    def test_weights(self):
        ref = synthetic()
        test = Log(ref.t, ref.r_d, 0.5 * ref.y, ref.u_applied)
        rep = compare(test, ref, EVENTS, weights=[1, 1, 0, 0, 0, 0, 0, 0])
        assert rep.J == pytest.approx(0.5, rel=1e-14)

    def test_serialization(self, tmp_path):
        rep = compare(synthetic(1), synthetic(), EVENTS)
        path = tmp_path / "r.csv"
        rep.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "index,ratio,test,reference,weight"
        assert [l.split(",")[0] for l in lines[1:]] == list(ROW_NAMES) + ["J"]
        assert float(lines[-1].split(",")[1]) == rep.J
        table = rep.table().splitlines()
        assert [l.split()[0] for l in table[1:]] == list(ROW_NAMES) + ["J"]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.01, 100.0))
def test_error_scaling(seed, alpha):
    ref = synthetic(seed)
    base = synthetic(seed + 1)
    scaled = Log(base.t, base.r_d, alpha * base.y, base.u_applied)
    r1 = compare(base, ref, EVENTS).ratios
    r2 = compare(scaled, ref, EVENTS).ratios
    np.testing.assert_allclose(r2[:6], alpha * r1[:6], rtol=1e-12)
    np.testing.assert_array_equal(r2[6:], r1[6:])


@settings(max_examples=40, deadline=None)
@given(r=st.lists(st.floats(0, 10), min_size=8, max_size=8), i=st.integers(0, 7), d=st.floats(0.001, 5))
def test_j_monotone(r, i, d):
    bumped = list(r)
    bumped[i] += d
    assert combine(bumped) > combine(r)
