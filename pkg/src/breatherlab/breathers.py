"""Closed-form breather solutions: wave functions and complex action functions.

All evaluators are vectorised: ``SpacetimeEvent`` fields may be scalars or
broadcastable arrays, and the return value has the broadcast shape.

The rest-frame breather is

    Psi = exp(-i w0 t) + alpha exp(-2 i w0 t) j0(sqrt(3) k0 r),
    S   = -m c^2 t - i hbar ln(1 + alpha exp(-i w0 t) j0(sqrt(3) k0 r)),

with w0 = m c^2 / hbar and k0 = m c / hbar.  The second-term frequency 2 w0
and wavenumber sqrt(3) k0 sit on the Klein-Gordon dispersion relation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import PhysicalParams, Potentials, SpacetimeGrid, natural_units, spacetime_coords
from .special import ModeIndex, associated_legendre, spherical_bessel_j

SQRT3 = math.sqrt(3.0)
BRANCH_TOL = 1e-12
TAIL_FRACTION_LIMIT = 0.1
NONRELATIVISTIC_WARN = 0.1


class BranchPointError(ValueError):
    """The logarithm in the action reached (or came too close to) a zero of its argument."""


class TruncationError(ValueError):
    pass


@dataclass(frozen=True)
class BreatherSpec:
    """Everything that pins down one closed-form solution.

    ``omega_override`` replaces the frequency of the breather term while the
    wavenumber stays at sqrt(3) m c / hbar; it exists to build deliberate
    non-solutions for negative controls.
    """

    alpha: complex = 0.0
    mode: ModeIndex = field(default_factory=ModeIndex)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    train_period_d: float | None = None
    train_truncation_K: int | None = None
    unwrap: bool = False
    cesaro: bool = False
    omega_override: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        v = tuple(float(c) for c in np.broadcast_to(np.asarray(self.velocity, dtype=float), (3,)))
        object.__setattr__(self, "velocity", v)
        if not all(math.isfinite(c) for c in v):
            raise ValueError("velocity must be finite")
        if not isinstance(self.mode, ModeIndex):
            object.__setattr__(self, "mode", ModeIndex(*self.mode))
        if not self.unwrap and abs(self.alpha) >= 1:
            raise ValueError(f"|alpha| = {abs(self.alpha)} >= 1 needs unwrap=True "
                             "(the action logarithm can hit a branch point)")
        if self.train_period_d is not None:
            if not self.train_period_d > 0:
                raise ValueError("train period d must be positive")
            if self.train_truncation_K is None:
                object.__setattr__(self, "train_truncation_K", 64)
            if int(self.train_truncation_K) != self.train_truncation_K or self.train_truncation_K < 1:
                raise ValueError("train truncation K must be an integer >= 1")
            if self.mode != ModeIndex(0, 0):
                raise ValueError("breather trains are built from spherical (l=0) breathers only")
        elif self.train_truncation_K is not None:
            raise ValueError("train truncation K given without a train period d")

    @property
    def speed(self) -> float:
        return math.sqrt(sum(c * c for c in self.velocity))

    @property
    def is_train(self) -> bool:
        return self.train_period_d is not None

    def check(self, params: PhysicalParams) -> None:
        if self.speed >= params.c:
            raise ValueError(f"|v| = {self.speed} must be below c = {params.c}")


@dataclass(frozen=True)
class SpacetimeEvent:
    t: object = 0.0
    x: object = 0.0
    y: object = 0.0
    z: object = 0.0

    def __post_init__(self):
        for name in ("t", "x", "y", "z"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise ValueError(f"event coordinate {name} must be finite")
            object.__setattr__(self, name, value)

    @classmethod
    def from_grid(cls, grid: SpacetimeGrid) -> "SpacetimeEvent":
        if grid.has("r"):
            raise ValueError("radial grids carry no cartesian event; use the radial helpers")
        c = spacetime_coords(grid)
        return cls(c["t"], c["x"], c["y"], c["z"])

    @property
    def r(self) -> np.ndarray:
        return np.sqrt(self.x**2 + self.y**2 + self.z**2)


class TrainValue(NamedTuple):
    value: np.ndarray
    tail_estimate: np.ndarray


def _out(a):
    a = np.asarray(a)
    return a[()] if a.ndim == 0 else a


def lorentz_factor(speed: float, params: PhysicalParams) -> float:
    if speed >= params.c:
        raise ValueError(f"|v| = {speed} must be below c = {params.c}")
    return 1.0 / math.sqrt(1.0 - (speed / params.c) ** 2)


def lorentz_boost(event: SpacetimeEvent, v: Sequence[float], params: PhysicalParams | None = None) -> SpacetimeEvent:
    """Coordinates of ``event`` in the frame moving with velocity ``v``."""
    params = params or natural_units()
    v = np.asarray(v, dtype=float)
    speed = float(np.linalg.norm(v))
    gamma = lorentz_factor(speed, params)
    if speed == 0.0:
        return SpacetimeEvent(event.t, event.x, event.y, event.z)
    n = v / speed
    c2 = params.c**2
    x_par = event.x * n[0] + event.y * n[1] + event.z * n[2]
    t_new = gamma * (event.t - speed * x_par / c2)
    # parallel part: gamma (x_par - v t); perpendicular part unchanged
    shift = (gamma - 1.0) * x_par - gamma * speed * event.t
    return SpacetimeEvent(t_new, event.x + shift * n[0], event.y + shift * n[1], event.z + shift * n[2])


def _frequencies(spec: BreatherSpec, params: PhysicalParams) -> tuple[float, float, float]:
    """(clock frequency, breather-term frequency, breather wavenumber)."""
    w0 = params.clock_frequency
    k = SQRT3 * params.compton_wavenumber
    w = 2.0 * w0 if spec.omega_override is None else float(spec.omega_override)
    return w0, w, k


def spinning_profile(mode: ModeIndex, event: SpacetimeEvent, params: PhysicalParams) -> np.ndarray:
    """exp(i n phi) j_l(sqrt(3) k0 r) P_l^n(cos theta), theta measured from the z axis."""
    k = SQRT3 * params.compton_wavenumber
    r = event.r
    radial = spherical_bessel_j(mode.l, k * r)
    if mode.l == 0:
        return np.asarray(radial, dtype=complex)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_theta = np.where(r > 0, event.z / np.where(r > 0, r, 1.0), 1.0)
    cos_theta = np.clip(cos_theta, -1.0, 1.0)
    angular = associated_legendre(mode.l, mode.n, cos_theta)
    phi = np.mod(np.arctan2(event.y, event.x), 2 * np.pi)
    return radial * angular * np.exp(1j * mode.n * phi)


def spinning_term(mode: ModeIndex, alpha: complex, event: SpacetimeEvent,
                  params: PhysicalParams | None = None, omega: float | None = None):
    """alpha exp(-2 i w0 t + i n phi) j_l(sqrt(3) k0 r) P_l^n(cos theta)."""
    params = params or natural_units()
    if not isinstance(mode, ModeIndex):
        mode = ModeIndex(*mode)
    w = 2.0 * params.clock_frequency if omega is None else omega
    return _out(complex(alpha) * np.exp(-1j * w * event.t) * spinning_profile(mode, event, params))


def _train_sum(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams):
    """Symmetric partial sum of boosted j0 copies and its tail estimate."""
    vx, vy, vz = spec.velocity
    if vy != 0.0 or vz != 0.0:
        raise ValueError("trains move along the x axis; velocity must be (v, 0, 0)")
    gamma = lorentz_factor(abs(vx), params)
    k = SQRT3 * params.compton_wavenumber
    d = spec.train_period_d
    K = spec.train_truncation_K
    xi = event.x - vx * event.t
    perp2 = event.y**2 + event.z**2
    total = np.zeros(np.broadcast(xi, perp2).shape)
    for j in range(-K, K + 1):
        term = spherical_bessel_j(0, k * np.sqrt((gamma * (xi - j * d)) ** 2 + perp2))
        if spec.cesaro and abs(j) == K:
            term = 0.5 * term
        total = total + term
    with np.errstate(divide="ignore"):
        gap = K * d - np.abs(xi)
        tail = np.where(gap > 0, abs(spec.alpha) / (k * np.where(gap > 0, gap, 1.0)), np.inf)
    return total, tail


def _profile(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams):
    """Spatial factor X multiplying alpha in the breather term, in the lab frame."""
    if spec.is_train:
        return _train_sum(spec, event, params)[0]
    local = lorentz_boost(event, spec.velocity, params) if spec.speed > 0 else event
    return spinning_profile(spec.mode, local, params)


def classical_phase(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams) -> np.ndarray:
    """Classical free action -E t + p.x of the (possibly moving) particle."""
    gamma = lorentz_factor(spec.speed, params)
    v = np.asarray(spec.velocity)
    E = gamma * params.m * params.c**2
    p = gamma * params.m * v
    return -E * event.t + p[0] * event.x + p[1] * event.y + p[2] * event.z


def log_argument(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None) -> np.ndarray:
    """Argument L = 1 + alpha exp(-i (w - w0) t') X of the action logarithm.

    t' is the rest-frame time.  For the locked frequency w = 2 w0 the phase
    factor equals exp(i (-E t + p.x) / hbar).
    """
    params = params or natural_units()
    spec.check(params)
    w0, w, _ = _frequencies(spec, params)
    rest_t = lorentz_boost(event, spec.velocity, params).t if spec.speed > 0 else event.t
    X = _profile(spec, event, params)
    return 1.0 + spec.alpha * np.exp(-1j * (w - w0) * rest_t) * X


def psi(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None):
    """General wave function: clock mode plus breather term (boosted, spinning or train)."""
    params = params or natural_units()
    spec.check(params)
    phase = np.exp(1j * classical_phase(spec, event, params) / params.hbar)
    return _out(phase * log_argument(spec, event, params))


def psi_rest(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None):
    params = params or natural_units()
    if spec.speed != 0 or spec.mode != ModeIndex(0, 0) or spec.is_train:
        raise ValueError("psi_rest needs a spherical breather at rest without a train")
    w0, w, k = _frequencies(spec, params)
    return _out(np.exp(-1j * w0 * event.t)
                + spec.alpha * np.exp(-1j * w * event.t) * spherical_bessel_j(0, k * event.r))


def action_from_psi(psi_value, params: PhysicalParams | None = None, branch_anchor=None):
    """S = -i hbar ln(psi); with an anchor, the 2 pi hbar branch closest to it."""
    params = params or natural_units()
    psi_value = np.asarray(psi_value, dtype=complex)
    if np.any(psi_value == 0):
        raise BranchPointError("psi = 0: the action has a branch point here")
    S = -1j * params.hbar * np.log(psi_value)
    if branch_anchor is not None:
        period = 2 * np.pi * params.hbar
        S = S + period * np.round((np.real(branch_anchor) - S.real) / period)
    return _out(S)


def _time_axis(event: SpacetimeEvent) -> int | None:
    t = np.asarray(event.t)
    for axis, n in enumerate(t.shape):
        if n > 1:
            return axis
    return None


def _log(L: np.ndarray, spec: BreatherSpec, event: SpacetimeEvent, threshold: float = BRANCH_TOL):
    L = np.asarray(L)
    if not spec.unwrap:
        if np.any(np.abs(L - 1.0) >= 1.0):
            raise BranchPointError("|log argument - 1| >= 1 at some point; pass unwrap=True "
                                   "to follow the branch continuously")
        return np.log(L)
    if np.any(np.abs(L) < threshold):
        raise BranchPointError("log argument vanishes at some point; the action is singular there")
    axis = _time_axis(event)
    angle = np.angle(L)
    if axis is not None:
        angle = np.unwrap(angle, axis=axis)
    return np.log(np.abs(L)) + 1j * angle


def action(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None):
    """S = -E t + p.x - i hbar ln L for any supported breather (rest, boosted, spinning, train)."""
    params = params or natural_units()
    L = log_argument(spec, event, params)
    return _out(classical_phase(spec, event, params) - 1j * params.hbar * _log(L, spec, event))


def action_rest(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None):
    params = params or natural_units()
    if spec.speed != 0 or spec.mode != ModeIndex(0, 0) or spec.is_train:
        raise ValueError("action_rest needs a spherical breather at rest without a train")
    return action(spec, event, params)


def far_field_action(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None):
    """Linearised (monochromatic) action away from the core."""
    params = params or natural_units()
    w0, w, k = _frequencies(spec, params)
    return _out(-params.m * params.c**2 * event.t
                - 1j * params.hbar * spec.alpha * np.exp(-1j * (w - w0) * event.t)
                * spherical_bessel_j(0, k * event.r))


def action_boosted(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None):
    params = params or natural_units()
    if spec.is_train:
        raise ValueError("use train_action for trains")
    return action(spec, event, params)


def train_action(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None) -> TrainValue:
    """Action of a d-periodic train, with the estimated truncation error of the k-sum.

    Raises ``TruncationError`` when the estimated tail exceeds 10% of |alpha|.
    """
    params = params or natural_units()
    if not spec.is_train:
        raise ValueError("spec has no train period")
    spec.check(params)
    _, tail = _train_sum(spec, event, params)
    if spec.alpha != 0 and np.any(tail > TAIL_FRACTION_LIMIT * abs(spec.alpha)):
        raise TruncationError(f"K = {spec.train_truncation_K} too small: estimated tail exceeds "
                              f"{TAIL_FRACTION_LIMIT:.0%} of the breather term")
    return TrainValue(action(spec, event, params), _out(tail))


def slow_field_action(spec: BreatherSpec, event: SpacetimeEvent, potentials: Potentials,
                      params: PhysicalParams | None = None):
    """Breather in constant (slowly varying) potentials: -e U t + (e/c) A.x added to the free action."""
    params = params or natural_units()
    e = params.e_charge
    U = potentials.U(event.t, event.x, event.y, event.z)
    Ax, Ay, Az = potentials.A(event.t, event.x, event.y, event.z)
    shift = -e * U * event.t + (e / params.c) * (Ax * event.x + Ay * event.y + Az * event.z)
    return _out(action(spec, event, params) + shift)


@dataclass(frozen=True)
class SemiclassicalContext:
    """Classical action ``S_c(t, x, y, z)``, trajectory ``x_p(t) -> (3, ...)`` and velocity ``v_of_t``."""

    S_c: Callable
    x_p: Callable
    v_of_t: Callable
    potentials: Potentials = field(default_factory=Potentials)

    def validate(self, t0: float, t1: float, samples: int = 16, rtol: float = 1e-6) -> None:
        """Check that v_of_t matches a central difference of x_p on [t0, t1]."""
        ts = np.linspace(t0, t1, samples)
        h = 1e-4 * max(1.0, abs(t1 - t0))
        for t in ts:
            fd = (np.asarray(self.x_p(t + h), float) - np.asarray(self.x_p(t - h), float)) / (2 * h)
            v = np.asarray(self.v_of_t(t), float)
            scale = max(np.linalg.norm(v), np.linalg.norm(fd), 1e-300)
            if np.linalg.norm(fd - v) > rtol * scale + 1e-12:
                raise ValueError(f"v_of_t inconsistent with x_p at t={t}")


def semiclassical_action(ctx: SemiclassicalContext, spec: BreatherSpec, event: SpacetimeEvent,
                         params: PhysicalParams | None = None):
    """Composite action -m c^2 t + S_c - i hbar ln(1 + alpha e^{-i w0 t} e^{i m v.x/hbar} j0(k |x - x_p|))."""
    params = params or natural_units()
    try:
        xp = np.asarray(ctx.x_p(event.t), dtype=float)
        vp = np.asarray(ctx.v_of_t(event.t), dtype=float)
    except Exception as exc:
        raise ValueError(f"trajectory sampler undefined at the requested times: {exc}") from exc
    if not (np.all(np.isfinite(xp)) and np.all(np.isfinite(vp))):
        raise ValueError("trajectory sampler returned non-finite values")
    speed = np.sqrt(vp[0] ** 2 + vp[1] ** 2 + vp[2] ** 2)
    if np.any(speed > NONRELATIVISTIC_WARN * params.c):
        warnings.warn("semiclassical composite used above 0.1 c; it is a nonrelativistic form",
                      stacklevel=2)
    w0, w, k = _frequencies(spec, params)
    dist = np.sqrt((event.x - xp[0]) ** 2 + (event.y - xp[1]) ** 2 + (event.z - xp[2]) ** 2)
    v_dot_x = vp[0] * event.x + vp[1] * event.y + vp[2] * event.z
    L = 1.0 + spec.alpha * np.exp(-1j * (w - w0) * event.t) \
        * np.exp(1j * params.m * v_dot_x / params.hbar) * spherical_bessel_j(0, k * dist)
    S_c = np.asarray(ctx.S_c(event.t, event.x, event.y, event.z), dtype=float)
    return _out(-params.m * params.c**2 * event.t + S_c - 1j * params.hbar * _log(L, spec, event))


def breather_envelope(spec: BreatherSpec, event: SpacetimeEvent, params: PhysicalParams | None = None):
    """|exp(i (S - S_classical)/hbar) - 1| = |L - 1|, the breather's modulus with the clock removed.

    For a boosted spherical breather this is |alpha j0(k r')| with r' the
    rest-frame distance: a symmetric bump riding on the moving core.
    """
    params = params or natural_units()
    return _out(np.abs(log_argument(spec, event, params) - 1.0))


def track_breather(spec: BreatherSpec, times: Sequence[float], x_line: np.ndarray,
                   params: PhysicalParams | None = None) -> np.ndarray:
    """Core position along the x axis (y = z = 0) at each time, from the envelope peak.

    The sampled maximum is refined with a parabola through its neighbours.
    """
    params = params or natural_units()
    x_line = np.asarray(x_line, dtype=float)
    h = x_line[1] - x_line[0]
    out = []
    for t in times:
        env = np.asarray(breather_envelope(spec, SpacetimeEvent(t, x_line, 0.0, 0.0), params))
        i = int(np.argmax(env))
        if i == 0 or i == len(x_line) - 1:
            raise ValueError(f"breather core left the sampled line at t={t}")
        a, b, c = env[i - 1], env[i], env[i + 1]
        out.append(x_line[i] + 0.5 * h * (a - c) / (a - 2 * b + c))
    return np.array(out)


def transport_velocity(spec: BreatherSpec, times: Sequence[float], x_line: np.ndarray,
                       params: PhysicalParams | None = None) -> float:
    """Least-squares slope of the tracked core position."""
    positions = track_breather(spec, times, x_line, params)
    return float(np.polyfit(np.asarray(times, dtype=float), positions, 1)[0])
