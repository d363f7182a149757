import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from breatherlab.core import (ComplexField, GridError, PhysicalParams, Potentials, SamplingError, build_grid,
                              natural_units, resolve_threads, sample, uniform_axis)


def test_natural_units_scales():
    p = natural_units()
    assert (p.m, p.c, p.hbar, p.e_charge) == (1.0, 1.0, 1.0, 0.0)
    assert p.compton_length == 1.0
    assert p.compton_time == 1.0
    assert p.clock_frequency == 1.0


def test_params_derived_scales():
    p = PhysicalParams(m=2.0, c=3.0, hbar=0.5, e_charge=-1.0)
    assert p.compton_length == pytest.approx(0.5 / 6.0)
    assert p.compton_time == pytest.approx(0.5 / 18.0)
    assert p.clock_frequency == pytest.approx(36.0)


@pytest.mark.parametrize("kwargs", [dict(m=0.0), dict(c=-1.0), dict(hbar=0.0)])
def test_params_reject_nonpositive(kwargs):
    with pytest.raises(ValueError):
        PhysicalParams(**kwargs)


def test_grid_spacing_and_size():
    g = build_grid([("x", -10, 10, 201)])
    assert g.spacing("x") == pytest.approx(0.1)
    assert build_grid([("t", 0, 1, 4), ("x", 0, 1, 4)]).size == 16


@pytest.mark.parametrize("axes", [
    [("x", 0, 1, 3)],
    [("x", 0, 1, 5), ("x", 0, 2, 5)],
    [("x", 1, 1, 5)],
    [("r", -1, 1, 5)],
    [("q", 0, 1, 5)],
    [("r", 0, 1, 5), ("x", 0, 1, 5)],
])
def test_grid_rejects_bad_axes(axes):
    with pytest.raises(GridError):
        build_grid(axes)


def test_axis_order_preserved():
    g = build_grid([("x", 0, 1, 5), ("t", 0, 2, 6)])
    assert g.names == ("x", "t")
    assert g.shape == (5, 6)


@given(lo=st.floats(-100, 100), width=st.floats(1e-3, 100), count=st.integers(4, 500))
def test_spacing_times_count_spans_axis(lo, width, count):
    g = build_grid([("x", lo, lo + width, count)])
    a = g.axis("x")
    assert a.spacing * (a.count - 1) == pytest.approx(a.max - a.min, rel=1e-12)
    assert a.values[0] == a.min and a.values[-1] == pytest.approx(a.max, rel=1e-12, abs=1e-12)


def test_uniform_axis():
    name, lo, hi, n = uniform_axis("x", 0.0, 1.0, 0.25)
    assert (name, lo, hi, n) == ("x", 0.0, 1.0, 5)


def test_sample_constant_and_phase():
    g = build_grid([("t", 0, 3, 4), ("x", 0, 1, 4)])
    ones = sample(lambda t, x: np.ones_like(t * x), g)
    assert np.all(ones.values == 1)
    gt = build_grid([("t", 0, 3 * math.pi / 2, 4)])
    f = sample(lambda t: np.exp(-1j * t), gt)
    assert f.values[0] == 1
    assert f.values[1] == pytest.approx(-1j, abs=1e-15)


def test_sample_names_singular_point():
    g = build_grid([("r", 0, 1, 5)])
    with pytest.raises(SamplingError, match=r"'r': 0.0"):
        sample(lambda r: 1 / r, g)
    masked = sample(lambda r: 1 / r, g, mask_predicate=lambda r: r == 0)
    assert masked.masked_count == 1
    assert np.isfinite(masked.values[1:]).all()


def test_sample_roundtrip_at_indices():
    g = build_grid([("t", 0, 1, 5), ("x", -1, 1, 7)])
    f = sample(lambda t, x: t + 1j * x, g)
    for idx in [(0, 0), (2, 3), (4, 6)]:
        pt = g.point(idx)
        assert f.at(idx) == complex(pt["t"], pt["x"])


def test_sample_thread_independent(monkeypatch):
    g = build_grid([("t", 0, 1, 9), ("x", -1, 1, 33)])
    expr = lambda t, x: np.exp(1j * (3 * x - 2 * t)) / (1 + x * x)
    a = sample(expr, g, threads=1)
    b = sample(expr, g, threads=4)
    assert a.values.tobytes() == b.values.tobytes()
    monkeypatch.setenv("BRTH_THREADS", "3")
    assert resolve_threads() == 3
    monkeypatch.setenv("BRTH_THREADS", "0")
    assert resolve_threads() >= 1


def test_field_rejects_bad_input():
    g = build_grid([("x", 0, 1, 4)])
    with pytest.raises(ValueError):
        ComplexField(g, np.zeros(5))
    with pytest.raises(ValueError):
        ComplexField(g, np.zeros(4), quantity="Banana")
    with pytest.raises(SamplingError):
        ComplexField(g, np.array([0, np.nan, 0, 0]))


def test_field_is_immutable():
    g = build_grid([("x", 0, 1, 4)])
    f = ComplexField(g, np.zeros(4))
    with pytest.raises(ValueError):
        f.values[0] = 1


def test_potentials_constant():
    pot = Potentials.constant(2.0, (0.0, 1.0, 0.0))
    assert pot.is_constant
    assert pot.U(0.0, 1.0, 2.0, 3.0) == 2.0
    assert tuple(np.asarray(pot.A(0.0, 1.0, 2.0, 3.0), float)) == (0.0, 1.0, 0.0)
    assert Potentials.zero().U(1.0, 1.0, 1.0, 1.0) == 0.0
