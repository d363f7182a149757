"""Quantization by phase/period compatibility and by the loop action integral.

Orbits here are one-dimensional and nonrelativistic: energies exclude the
rest energy m c^2, and the orbit potential is a potential *energy* V(x)
(the product e U for a charged particle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .characteristics import Trajectory
from .core import PhysicalParams, build_grid, natural_units
from .residuals import ResidualReport, _first_diff, _norms, _report

TURNING_POINT_TOL = 1e-12
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(200)
_GL32_NODES, _GL32_WEIGHTS = np.polynomial.legendre.leggauss(32)


class NonConfiningError(ValueError):
    pass


class NonMonotoneActionError(ValueError):
    pass


# -- periodic interval: phase compatibility ---------------------------------------

def _winding(d: float, p: float, params: PhysicalParams) -> float:
    return d * p / (2 * math.pi * params.hbar)


def compatibility_residual(d: float, p: float, params: PhysicalParams | None = None) -> float:
    """Distance of d p / (2 pi hbar) from the nearest integer, in [0, 0.5]."""
    params = params or natural_units()
    if not d > 0:
        raise ValueError("d must be positive")
    w = _winding(d, p, params)
    return float(abs(w - round(w)))


def quantum_number(d: float, p: float, params: PhysicalParams | None = None) -> int:
    params = params or natural_units()
    return int(round(_winding(d, p, params)))


def reflecting_wall_period(separation: float) -> float:
    """Period of the equivalent periodic problem for walls ``separation`` apart (one round trip)."""
    return 2.0 * separation


@dataclass(frozen=True)
class QuantizationScan:
    d: float
    momenta: np.ndarray
    residuals: np.ndarray
    quantized_p: tuple[float, ...]
    quantum_numbers: tuple[int, ...]


def scan_quantized_momenta(d: float, p_max: float, samples: int = 1000,
                           params: PhysicalParams | None = None) -> QuantizationScan:
    """Scan [0, p_max] for momenta compatible with period d and refine each zero by bisection.

    The signed offset d p / (2 pi hbar) - round(...) crosses zero from below at
    every compatible momentum; brackets around those crossings are bisected
    to machine precision.
    """
    params = params or natural_units()
    if not d > 0:
        raise ValueError("d must be positive")
    if samples < 100:
        raise ValueError("need at least 100 scan samples")
    momenta = np.linspace(0.0, p_max, samples)
    w = d * momenta / (2 * math.pi * params.hbar)
    signed = w - np.round(w)
    residuals = np.abs(signed)

    def offset(p):
        x = _winding(d, p, params)
        return x - round(x)

    found: dict[int, float] = {}
    for i in range(samples):
        if signed[i] == 0.0:
            found.setdefault(int(round(w[i])), float(momenta[i]))
    for i in range(samples - 1):
        a, b = momenta[i], momenta[i + 1]
        fa, fb = signed[i], signed[i + 1]
        # a zero crossing (not the +-1/2 wrap): both ends near zero with opposite signs
        if fa < 0 < fb and max(-fa, fb) < 0.25:
            n = int(round(w[i + 1]))
            if n in found:
                continue
            lo, hi = a, b
            while True:
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if offset(mid) < 0:
                    lo = mid
                else:
                    hi = mid
            found[n] = hi if abs(offset(hi)) <= abs(offset(lo)) else lo
    ns = sorted(found)
    return QuantizationScan(float(d), momenta, residuals, tuple(float(found[n]) for n in ns), tuple(ns))


# -- potential wells --------------------------------------------------------------

@dataclass(frozen=True)
class Well:
    """A 1D potential energy V(x) with optional analytic force -V'(x)."""

    V: Callable[[float], float]
    force: Callable[[float], float] | None = None
    center: float = 0.0

    def F(self, x: float) -> float:
        if self.force is not None:
            return self.force(x)
        h = 1e-5 * max(1.0, abs(x))
        return -(self.V(x + h) - self.V(x - h)) / (2 * h)


def harmonic_well(omega0: float, params: PhysicalParams | None = None) -> Well:
    params = params or natural_units()
    k = params.m * omega0**2
    return Well(lambda x: 0.5 * k * x * x, lambda x: -k * x, 0.0)


def quartic_well(coefficient: float = 0.25) -> Well:
    return Well(lambda x: coefficient * x**4, lambda x: -4 * coefficient * x**3, 0.0)


def _as_well(U) -> Well:
    return U if isinstance(U, Well) else Well(U)


@dataclass(frozen=True)
class ClassicalOrbit:
    potential: Well
    energy: float
    turning_points: tuple[float, float] | None
    period: float
    trajectory: Trajectory
    action_samples: np.ndarray = field(repr=False)
    mass: float = 1.0

    @property
    def degenerate(self) -> bool:
        return len(self.trajectory.times) == 1 or self.period == 0.0


def _bisect(f, lo, hi, tol=TURNING_POINT_TOL):
    flo = f(lo)
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def well_minimum(well: Well) -> tuple[float, float]:
    res = minimize_scalar(well.V, bracket=(well.center - 1.0, well.center + 1.0), tol=1e-12)
    return float(res.x), float(res.fun)


def turning_points(well: Well, E: float, x_min: float | None = None,
                   max_extent: float = 1e8) -> tuple[float, float]:
    """Points a < b around the well minimum where V = E, located by bisection."""
    if x_min is None:
        x_min, _ = well_minimum(well)
    g = lambda x: well.V(x) - E
    if g(x_min) >= 0:
        return (x_min, x_min)
    ends = []
    for sign in (-1.0, 1.0):
        step = 1e-3
        inner = x_min
        outer = x_min + sign * step
        while g(outer) < 0:
            inner = outer
            step *= 2.0
            outer = x_min + sign * step
            if step > max_extent:
                raise NonConfiningError(f"V stays below E = {E} out to |x| = {max_extent:g}")
        ends.append(_bisect(g, inner, outer) if sign > 0 else _bisect(g, outer, inner))
    return ends[0], ends[1]


def _period(well: Well, E: float, a: float, b: float, m: float) -> float:
    # x = mid + half sin(theta) removes the inverse-square-root endpoint singularities
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    theta = 0.5 * np.pi * _GL_NODES
    x = mid + half * np.sin(theta)
    kinetic = np.maximum(E - np.array([well.V(xi) for xi in x]), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(kinetic > 0, half * np.cos(theta) / np.sqrt(2.0 * kinetic / m), 0.0)
    return float(2.0 * 0.5 * np.pi * np.sum(_GL_WEIGHTS * integrand))


def _rk4_orbit(well: Well, m: float, x0: float, v0: float, dt: float, steps: int):
    """RK4 for (x, v, S) with dS/dt = m v^2 / 2 - V(x)."""
    def rhs(state):
        x, v, _ = state
        return np.array([v, well.F(x) / m, 0.5 * m * v * v - well.V(x)])

    states = np.empty((steps + 1, 3))
    y = np.array([x0, v0, 0.0])
    states[0] = y
    for i in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        states[i + 1] = y
    return states


def classical_orbit(U, E: float, params: PhysicalParams | None = None, steps: int = 1024,
                    periods: int = 1) -> ClassicalOrbit:
    """Bound orbit of energy ``E`` (rest energy excluded), started at the left turning point."""
    params = params or natural_units()
    well = _as_well(U)
    m = params.m
    x_min, V_min = well_minimum(well)
    if E < V_min - 1e-12 * max(1.0, abs(V_min)):
        raise ValueError(f"E = {E} lies below the well minimum {V_min}")
    a, b = turning_points(well, E, x_min)
    if b - a <= 1e-12 * max(1.0, abs(x_min)):
        z = np.zeros((1, 3))
        z[0, 0] = x_min
        traj = Trajectory(np.array([0.0]), z.copy(), np.zeros((1, 3)))
        return ClassicalOrbit(well, float(E), (x_min, x_min), 0.0, traj, np.zeros(1), m)
    T = _period(well, E, a, b, m)
    n = steps * periods
    states = _rk4_orbit(well, m, a, 0.0, T / steps, n)
    times = np.arange(n + 1) * (T / steps)
    pos = np.zeros((n + 1, 3))
    vel = np.zeros((n + 1, 3))
    pos[:, 0], vel[:, 0] = states[:, 0], states[:, 1]
    orbit = ClassicalOrbit(well, float(E), (a, b), T, Trajectory(times, pos, vel), states[:, 2], m)
    if abs(pos[steps, 0] - pos[0, 0]) >= 1e-6 * max(1.0, b - a):
        raise ValueError("integrated orbit does not close after one period")
    return orbit


def ring_orbit(d: float, p: float, params: PhysicalParams | None = None, steps: int = 256) -> ClassicalOrbit:
    """Free particle circulating on a ring of circumference d with momentum p."""
    params = params or natural_units()
    m = params.m
    well = Well(lambda x: 0.0, lambda x: 0.0)
    E = p * p / (2 * m)
    if p == 0:
        traj = Trajectory(np.array([0.0]), np.zeros((1, 3)), np.zeros((1, 3)))
        return ClassicalOrbit(well, 0.0, None, 0.0, traj, np.zeros(1), m)
    v = p / m
    T = d / abs(v)
    times = np.linspace(0.0, T, steps + 1)
    pos = np.zeros((steps + 1, 3))
    vel = np.zeros((steps + 1, 3))
    pos[:, 0] = v * times
    vel[:, 0] = v
    return ClassicalOrbit(well, E, None, T, Trajectory(times, pos, vel), E * times, m)


def loop_integral(orbit: ClassicalOrbit, params: PhysicalParams | None = None) -> float:
    """Closed-loop action over one period, as the trapezoid sum of m v^2 dt."""
    params = params or natural_units()
    if orbit.degenerate:
        return 0.0
    times = orbit.trajectory.times
    n = int(np.searchsorted(times, orbit.period * (1 - 1e-12)))
    if n >= len(times) or not math.isclose(times[n], orbit.period, rel_tol=1e-9):
        raise ValueError("orbit trajectory does not cover a whole period")
    if orbit.turning_points is not None:
        x = orbit.trajectory.positions[:, 0]
        if abs(x[n] - x[0]) >= 1e-6 * max(1.0, orbit.turning_points[1] - orbit.turning_points[0]):
            raise ValueError("orbit is not periodic")
    v = orbit.trajectory.velocities[: n + 1, 0]
    return float(np.trapezoid(orbit.mass * v * v, times[: n + 1]))


def classical_action(orbit: ClassicalOrbit, params: PhysicalParams | None, t, x=None):
    """Classical action S_c(t, x) for the orbit's energy shell.

    Along the orbit this is the accumulated Lagrangian integral (zero at the
    start).  Off the orbit it is continued with the local branch of
    integral p dx, so that dS_c/dx = m v and dS_c/dt = -E.
    """
    params = params or natural_units()
    t_arr = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
    times = orbit.trajectory.times
    if np.any(t_arr < times[0]) or np.any(t_arr > times[-1]):
        raise ValueError(f"t outside the integrated range [{times[0]}, {times[-1]}]")
    well, m = orbit.potential, orbit.mass
    out_S, out_x, out_v = [], [], []
    for tv in t_arr:
        i = min(int(np.searchsorted(times, tv, side="right")) - 1, len(times) - 1)
        x0 = orbit.trajectory.positions[i, 0]
        v0 = orbit.trajectory.velocities[i, 0]
        S0 = orbit.action_samples[i]
        h = tv - times[i]
        if h > 0:
            x0, v0, dS = _rk4_orbit(well, m, x0, v0, h, 1)[1]
            S0 = S0 + dS
        out_S.append(S0)
        out_x.append(x0)
        out_v.append(v0)
    S_orbit = np.array(out_S).reshape(np.shape(t))
    if x is None:
        return S_orbit if np.ndim(t) else float(S_orbit)
    xp = np.array(out_x).reshape(np.shape(t))
    vp = np.array(out_v).reshape(np.shape(t))
    x = np.asarray(x, dtype=float)
    xp_b, vp_b = np.broadcast_arrays(xp, vp)
    shape = np.broadcast(S_orbit, x).shape
    xs = np.broadcast_to(x, shape)
    lo = np.broadcast_to(xp_b, shape)
    sign = np.where(np.broadcast_to(vp_b, shape) < 0, -1.0, 1.0)
    # Gauss-Legendre for the integral of sqrt(2 m (E - V)) from x_p to x
    mid = 0.5 * (xs + lo)
    half = 0.5 * (xs - lo)
    nodes = mid[..., None] + half[..., None] * _GL32_NODES
    V = np.vectorize(well.V)(nodes) if orbit.turning_points is not None else np.zeros_like(nodes)
    p = np.sqrt(np.maximum(2 * m * (orbit.energy - V), 0.0))
    extra = half * np.sum(_GL32_WEIGHTS * p, axis=-1)
    return np.broadcast_to(S_orbit, shape) + sign * extra


def classical_hj_residual(orbit: ClassicalOrbit, center: tuple[float, float], half_widths: tuple[float, float],
                          spacings: Sequence[float], params: PhysicalParams | None = None) -> ResidualReport:
    """Residual of dS/dt + (dS/dx)^2 / 2m + V on (t, x) patches around a point near the orbit."""
    params = params or natural_units()
    levels = []
    for h in spacings:
        axes = []
        for name, c, hw in zip(("t", "x"), center, half_widths):
            n = int(round(2 * hw / h))
            axes.append((name, c - hw - h, c - hw + (n + 1) * h, n + 3))
        grid = build_grid(axes)
        co = grid.coords()
        S = classical_action(orbit, params, co["t"], co["x"])
        S_t = _first_diff(S, 0, grid.spacing("t"))
        S_x = _first_diff(S, 1, grid.spacing("x"))
        V = np.vectorize(orbit.potential.V)(co["x"])
        res = S_t + S_x**2 / (2 * orbit.mass) + V
        levels.append(_norms(res, grid, np.ones(grid.shape, dtype=bool)))
    return _report(levels)


def _loop_of_energy(well: Well, params: PhysicalParams, steps: int):
    def J(E):
        return loop_integral(classical_orbit(well, E, params, steps), params)
    return J


def bohr_sommerfeld_levels(U, params: PhysicalParams | None = None, n_range: Sequence[int] = range(1, 11),
                           steps: int = 1024, rtol: float = 1e-8) -> list[tuple[int, float]]:
    """Energies E_n with loop action 2 pi n hbar, by bracketed root finding on E."""
    params = params or natural_units()
    well = _as_well(U)
    _, V_min = well_minimum(well)
    J = _loop_of_energy(well, params, steps)
    levels = []
    scale = 1.0
    for n in n_range:
        if n < 0:
            raise ValueError("quantum numbers must be non-negative")
        target = 2 * math.pi * n * params.hbar
        if n == 0:
            levels.append((0, V_min))
            continue
        hi = scale
        J_hi = J(V_min + hi)
        while J_hi < target:
            hi *= 2.0
            if hi > 1e12:
                raise NonConfiningError("loop action never reaches the target")
            J_hi = J(V_min + hi)
        lo = hi / 2.0 if hi > scale else 0.0
        probes = np.linspace(lo, hi, 5)[1:]
        Js = [J(V_min + e) for e in probes]
        if np.any(np.diff([0.0 if lo == 0 else J(V_min + lo)] + Js) <= 0):
            raise NonMonotoneActionError(f"loop action is not increasing in E near n = {n}")
        E_n = brentq(lambda e: J(V_min + e) - target, lo, hi, xtol=1e-14, rtol=rtol * 1e-3)
        levels.append((int(n), float(V_min + E_n)))
        scale = max(E_n, 1e-12)
    return levels


def ring_levels(d: float, n_range: Sequence[int], params: PhysicalParams | None = None) -> list[tuple[int, float]]:
    """Momenta on a ring of circumference d whose loop action equals 2 pi n hbar."""
    params = params or natural_units()
    out = []
    for n in n_range:
        target = 2 * math.pi * n * params.hbar
        if n == 0:
            out.append((0, 0.0))
            continue
        f = lambda p: loop_integral(ring_orbit(d, p, params), params) - target
        hi = 1.0
        while f(hi) < 0:
            hi *= 2.0
        out.append((int(n), float(brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-15))))
    return out
