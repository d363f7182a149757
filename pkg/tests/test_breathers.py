import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from breatherlab import breathers as br
from breatherlab.breathers import (BranchPointError, BreatherSpec, SemiclassicalContext, SpacetimeEvent,
                                   TruncationError)
from breatherlab.core import PhysicalParams, Potentials, natural_units
from breatherlab.special import ModeIndex, spherical_bessel_j, spherical_bessel_j_zero

K = math.sqrt(3.0)
ev = SpacetimeEvent


# -- rest breather ---------------------------------------------------------------

def test_psi_rest_examples():
    assert br.psi_rest(BreatherSpec(alpha=0.0), ev(0.0, 3.0, 1.0, 2.0)) == 1
    assert br.psi_rest(BreatherSpec(alpha=0.5), ev(0.0)) == pytest.approx(1.5)
    assert br.psi_rest(BreatherSpec(alpha=0.5), ev(math.pi)) == pytest.approx(-0.5, abs=1e-15)


def test_psi_rest_rejects_moving_spec():
    with pytest.raises(ValueError):
        br.psi_rest(BreatherSpec(alpha=0.5, velocity=(0.1, 0, 0)), ev(0.0))


def test_psi_rest_matches_general_psi():
    spec = BreatherSpec(alpha=0.3 + 0.2j)
    e = ev(np.linspace(0, 4, 9)[:, None], np.linspace(0, 6, 13)[None, :], 0.4, -0.2)
    assert np.allclose(br.psi_rest(spec, e), br.psi(spec, e), rtol=0, atol=1e-15)


def test_units_enter_through_params():
    p = PhysicalParams(m=2.0, c=3.0, hbar=0.5)
    spec = BreatherSpec(alpha=0.4)
    t, r = 0.013, 0.05
    w0 = p.m * p.c**2 / p.hbar
    k = K * p.m * p.c / p.hbar
    expected = np.exp(-1j * w0 * t) + 0.4 * np.exp(-2j * w0 * t) * spherical_bessel_j(0, k * r)
    assert br.psi_rest(spec, ev(t, r), p) == pytest.approx(expected, rel=1e-13)


# -- spinning modes --------------------------------------------------------------

def test_spinning_l0_reduces_to_rest_term():
    e = ev(0.7, 0.3, -0.8, 1.1)
    term = br.spinning_term(ModeIndex(0, 0), 0.5, e, natural_units())
    expected = 0.5 * np.exp(-2j * 0.7) * spherical_bessel_j(0, K * float(e.r))
    assert term == pytest.approx(expected, rel=1e-14)


def test_spinning_zero_on_axis_and_on_bessel_node():
    p = natural_units()
    assert abs(br.spinning_term(ModeIndex(1, 1), 0.5, ev(0.2, 0.0, 0.0, 1.3), p)) < 1e-15
    r1 = spherical_bessel_j_zero(1, 1) / K
    e = ev(0.2, r1 / math.sqrt(2), 0.0, r1 / math.sqrt(2))
    assert abs(br.spinning_term(ModeIndex(1, 0), 0.5, e, p)) < 1e-14


def test_spinning_azimuthal_phase():
    p = natural_units()
    a = br.spinning_term(ModeIndex(2, 1), 0.5, ev(0.0, 1.0, 0.0, 0.5), p)
    b = br.spinning_term(ModeIndex(2, 1), 0.5, ev(0.0, 0.0, 1.0, 0.5), p)
    assert b / a == pytest.approx(1j, rel=1e-13)


# -- action from psi -------------------------------------------------------------

def test_action_from_psi_examples():
    assert br.action_from_psi(1.0) == 0
    assert br.action_from_psi(np.exp(-0.3j)) == pytest.approx(-0.3, abs=1e-15)
    assert br.action_from_psi(-1.0) == pytest.approx(math.pi)


def test_action_from_psi_anchor_and_zero():
    s = br.action_from_psi(np.exp(-1j * 3.0), branch_anchor=-3.0 - 0.1j)
    assert s.real == pytest.approx(-3.0)
    s = br.action_from_psi(np.exp(1j * 3.5), branch_anchor=3.4)
    assert s.real == pytest.approx(3.5)
    with pytest.raises(BranchPointError):
        br.action_from_psi(0.0)


# -- rest action -----------------------------------------------------------------

def test_action_rest_examples():
    t = np.linspace(0, 5, 11)
    assert np.array_equal(br.action_rest(BreatherSpec(), ev(t, 1.0)), -t + 0j)
    far = br.action_rest(BreatherSpec(alpha=0.5), ev(2.0, 1e6))
    assert far == pytest.approx(-2.0, abs=1e-6)


def test_far_field_matches_linearised_form():
    spec = BreatherSpec(alpha=0.1)
    t = np.linspace(0, 2 * math.pi, 17)
    full = br.action_rest(spec, ev(t, 30.0))
    lin = br.far_field_action(spec, ev(t, 30.0))
    osc = np.abs(full + t)
    assert np.max(np.abs(full - lin) / np.max(osc)) < 1e-2


@given(alpha=st.floats(0.01, 0.95), t=st.floats(0, 20), r=st.floats(0, 40))
def test_exp_action_reproduces_psi(alpha, t, r):
    spec = BreatherSpec(alpha=alpha)
    S = br.action_rest(spec, ev(t, r))
    psi = br.psi_rest(spec, ev(t, r))
    assert np.exp(1j * S) == pytest.approx(psi, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_frequency_lock_far_from_core(alpha):
    spec = BreatherSpec(alpha=alpha)
    t = np.linspace(0, 6, 25)
    for r in (10.0, 17.3, 30.0):
        osc = br.action_rest(spec, ev(t, r)) + t
        shifted = br.action_rest(spec, ev(t + 2 * math.pi, r)) + t + 2 * math.pi
        assert np.max(np.abs(osc - shifted)) < 1e-10


@given(t=st.floats(0, 10), r=st.floats(0, 50))
def test_far_field_linearisation_remainder(t, r):
    spec = BreatherSpec(alpha=0.3)
    a_j0 = abs(0.3 * spherical_bessel_j(0, K * r))
    diff = abs(br.action_rest(spec, ev(t, r)) - br.far_field_action(spec, ev(t, r)))
    assert diff <= a_j0**2 + 1e-15


def test_alpha_policy_and_unwrap():
    with pytest.raises(ValueError):
        BreatherSpec(alpha=1.2)
    spec = BreatherSpec(alpha=1.2, unwrap=True)
    t = np.linspace(0, 2 * math.pi, 400)
    S = br.action_rest(spec, ev(t, 0.3))
    assert np.exp(1j * S) == pytest.approx(br.psi_rest(spec, ev(t, 0.3)), rel=1e-10)
    assert np.max(np.abs(np.diff(S.real))) < 0.5


def test_unwrap_hits_branch_point():
    # 1 + 2 e^{-it} j0(k r) vanishes where 2 j0 = 1 at t = pi
    r0 = 0.0
    lo, hi = 0.1, 1.8
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if 2 * spherical_bessel_j(0, K * mid) > 1 else (lo, mid)
    r0 = 0.5 * (lo + hi)
    spec = BreatherSpec(alpha=2.0, unwrap=True)
    with pytest.raises(BranchPointError):
        br.action_rest(spec, ev(np.array([math.pi - 0.1, math.pi, math.pi + 0.1]), r0))


# -- Lorentz boost ---------------------------------------------------------------

def test_boost_examples():
    e = br.lorentz_boost(ev(0.0, 1.0, 0.0, 0.0), (0.6, 0, 0))
    assert (float(e.t), float(e.x), float(e.y), float(e.z)) == pytest.approx((-0.75, 1.25, 0, 0))
    same = br.lorentz_boost(ev(1.0, 2.0, 3.0, 4.0), (0, 0, 0))
    assert (float(same.t), float(same.x)) == (1.0, 2.0)
    with pytest.raises(ValueError):
        br.lorentz_boost(ev(0.0), (1.0, 0, 0))


vel = st.tuples(st.floats(-0.55, 0.55), st.floats(-0.55, 0.55), st.floats(-0.55, 0.55))
coord = st.floats(-50, 50)


@given(v=vel, t=coord, x=coord, y=coord, z=coord)
def test_boost_preserves_interval(v, t, x, y, z):
    e = br.lorentz_boost(ev(t, x, y, z), v)
    before = t * t - x * x - y * y - z * z
    after = float(e.t) ** 2 - float(e.x) ** 2 - float(e.y) ** 2 - float(e.z) ** 2
    scale = t * t + x * x + y * y + z * z + 1.0
    assert abs(after - before) <= 1e-12 * scale


@given(v=vel, t=coord, x=coord, y=coord, z=coord)
def test_boost_composition_identity(v, t, x, y, z):
    back = br.lorentz_boost(br.lorentz_boost(ev(t, x, y, z), v), tuple(-c for c in v))
    for a, b in zip((back.t, back.x, back.y, back.z), (t, x, y, z)):
        assert abs(float(a) - b) <= 1e-12 * (1 + abs(t) + abs(x) + abs(y) + abs(z))


def test_boost_general_direction_matches_rotated_x_boost():
    v = 0.6
    n = np.array([1.0, 2.0, 2.0]) / 3.0
    e = br.lorentz_boost(ev(0.4, *(1.5 * n)), tuple(v * n))
    g = 1.25
    assert float(e.t) == pytest.approx(g * (0.4 - v * 1.5))
    assert np.array([float(e.x), float(e.y), float(e.z)]) == pytest.approx(g * (1.5 - v * 0.4) * n)


# -- boosted action --------------------------------------------------------------

def test_action_boosted_examples():
    e = ev(np.linspace(0, 3, 4)[:, None], np.linspace(-2, 2, 5)[None, :], 0.3, 0.1)
    assert np.array_equal(br.action_boosted(BreatherSpec(alpha=0.5), e), br.action_rest(BreatherSpec(alpha=0.5), e))
    S = br.action_boosted(BreatherSpec(alpha=0.0, velocity=(0.6, 0, 0)), e)
    assert np.allclose(S, -1.25 * e.t + 0.75 * e.x, rtol=0, atol=1e-14)


def test_boosted_core_moves_with_velocity():
    spec = BreatherSpec(alpha=0.5, velocity=(0.6, 0, 0))
    v = br.transport_velocity(spec, np.linspace(0, 10, 11), np.linspace(-5, 15, 2001))
    assert v == pytest.approx(0.6, rel=5e-3)


def test_boosted_psi_is_boosted_rest_psi():
    spec_b = BreatherSpec(alpha=0.5, velocity=(0.3, -0.2, 0.1))
    e = ev(np.linspace(0, 2, 5)[:, None], np.linspace(-2, 2, 7)[None, :], 0.4, -0.3)
    rest = br.psi_rest(BreatherSpec(alpha=0.5), br.lorentz_boost(e, spec_b.velocity))
    assert np.allclose(br.psi(spec_b, e), rest, rtol=0, atol=1e-13)


# -- trains ----------------------------------------------------------------------

def test_train_alpha_zero_is_classical():
    spec = BreatherSpec(alpha=0.0, velocity=(0.6, 0, 0), train_period_d=20.0)
    e = ev(1.3, 4.0, 0.2, 0.0)
    value, _ = br.train_action(spec, e)
    assert value == pytest.approx(-1.25 * 1.3 + 0.75 * 4.0, abs=1e-14)


def test_train_requires_k_and_positive_d():
    assert BreatherSpec(alpha=0.1, train_period_d=12.0).train_truncation_K == 64
    with pytest.raises(ValueError):
        BreatherSpec(alpha=0.1, train_period_d=-1.0)
    with pytest.raises(ValueError):
        BreatherSpec(alpha=0.1, train_truncation_K=5)


def test_train_truncation_flags_small_k():
    spec = BreatherSpec(alpha=0.5, train_period_d=4.0, train_truncation_K=1)
    with pytest.raises(TruncationError):
        br.train_action(spec, ev(0.3, 2.0))
    br.train_action(BreatherSpec(alpha=0.5, train_period_d=4.0, train_truncation_K=16), ev(0.3, 2.0))


def test_train_partial_sums_within_tail_bound():
    d = 20.0
    e = ev(0.3, d / 2, 0.0, 0.0)
    ref, _ = br.train_action(BreatherSpec(alpha=0.5, train_period_d=d, train_truncation_K=4096), e)
    for k in (2, 8, 32, 64, 128):
        value, tail = br.train_action(BreatherSpec(alpha=0.5, train_period_d=d, train_truncation_K=k), e)
        assert abs(value - ref) <= float(tail)


@pytest.mark.parametrize("k", [8, 64, 512])
def test_standing_train_periodicity(k):
    d = 20.0
    spec = BreatherSpec(alpha=0.5, train_period_d=d, train_truncation_K=k)
    a, ta = br.train_action(spec, ev(0.3, 1.3, 0.4, 0.0))
    b, tb = br.train_action(spec, ev(0.3, 1.3 + d, 0.4, 0.0))
    assert abs(a - b) <= float(ta + tb)


@pytest.mark.parametrize("k", [8, 64, 512])
def test_moving_quantized_train_phase_compatibility(k):
    v, g = 0.6, 1.25
    p = g * v
    d = 2 * math.pi * 3 / p
    spec = BreatherSpec(alpha=0.5, velocity=(v, 0, 0), train_period_d=d, train_truncation_K=k)
    a, ta = br.train_action(spec, ev(0.3, 1.3, 0.4, 0.0))
    b, tb = br.train_action(spec, ev(0.3, 1.3 + d, 0.4, 0.0))
    assert abs(b - a - p * d) <= float(ta + tb)


def test_cesaro_average_stays_close():
    d = 20.0
    e = ev(0.3, 3.0, 0.0, 0.0)
    plain, tail = br.train_action(BreatherSpec(alpha=0.5, train_period_d=d, train_truncation_K=64), e)
    ces, _ = br.train_action(BreatherSpec(alpha=0.5, train_period_d=d, train_truncation_K=64, cesaro=True), e)
    assert abs(plain - ces) <= float(tail)


# -- slow fields and semiclassical composite -------------------------------------

def test_slow_field_action_constant_potentials():
    p = PhysicalParams(e_charge=1.0)
    pot = Potentials.constant(0.2, (0.0, 0.1, 0.0))
    e = ev(1.5, 0.3, 2.0, 0.0)
    base = br.action(BreatherSpec(alpha=0.4), e, p)
    assert br.slow_field_action(BreatherSpec(alpha=0.4), e, pot, p) == pytest.approx(base - 0.2 * 1.5 + 0.1 * 2.0)


def _free_context(v):
    return SemiclassicalContext(
        S_c=lambda t, x, y, z: -0.5 * v * v * t + v * x,
        x_p=lambda t: np.array([v * np.asarray(t), 0 * np.asarray(t), 0 * np.asarray(t)]),
        v_of_t=lambda t: np.array([v + 0 * np.asarray(t), 0 * np.asarray(t), 0 * np.asarray(t)]),
    )


def test_semiclassical_examples():
    ctx = _free_context(0.05)
    e = ev(np.linspace(0, 2, 5), 0.3, 0.1, 0.0)
    S = br.semiclassical_action(ctx, BreatherSpec(alpha=0.0), e)
    assert np.allclose(S, -e.t + ctx.S_c(e.t, e.x, e.y, e.z), atol=1e-15)
    at_core = br.semiclassical_action(ctx, BreatherSpec(alpha=0.3), ev(0.0, 0.0, 0.0, 0.0))
    assert at_core == pytest.approx(-1j * math.log(1.3))


def test_semiclassical_validate_and_warn():
    ctx = _free_context(0.05)
    ctx.validate(0.0, 5.0)
    bad = SemiclassicalContext(ctx.S_c, ctx.x_p, lambda t: np.array([0.2, 0.0, 0.0]))
    with pytest.raises(ValueError):
        bad.validate(0.0, 5.0)
    with pytest.warns(UserWarning):
        br.semiclassical_action(_free_context(0.3), BreatherSpec(alpha=0.1), ev(0.5, 0.2))


def _outer_and_log(v, t, x):
    spec_b = BreatherSpec(alpha=0.3, velocity=(v, 0, 0))
    e = ev(t, x, 0.2, 0.0)
    boosted = br.action_boosted(spec_b, e)
    ctx = _free_context(v)
    semi = br.semiclassical_action(ctx, BreatherSpec(alpha=0.3), e)
    outer_b = br.classical_phase(spec_b, e, natural_units())
    outer_s = -t + ctx.S_c(t, x, 0.2, 0.0)
    return abs(outer_b - outer_s), abs((boosted - outer_b) - (semi - outer_s))


def test_semiclassical_matches_nonrelativistic_boost():
    # on the line x = 0 the classical parts differ at O(v^4); the breather terms at O(v^2)
    t, x = 1.7, 0.0
    outer1, log1 = _outer_and_log(0.05, t, x)
    outer2, log2 = _outer_and_log(0.025, t, x)
    assert outer1 / outer2 == pytest.approx(16, rel=0.05)
    assert log1 / log2 == pytest.approx(4, rel=0.1)
    assert log1 < 1e-2
