"""Characteristics of the relativistic Hamilton-Jacobi equation and perturbation transport.

A trajectory obeys dx/dt = -c^2 (grad S0 - e A / c) / (dS0/dt + e U).  Small
perturbations s of the action satisfy the linear equation

    (1/c^2)(dS0/dt + e U) ds/dt - (grad S0 - e A / c) . grad s = 0,

whose characteristics are the same trajectories, so s is carried along them
unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ComplexField, PhysicalParams, Potentials, natural_units, spacetime_coords
from .residuals import ResidualReport, _first_diff, _norms, _report

SINGULAR_DENOMINATOR = 1e-6


class SingularCharacteristicError(ArithmeticError):
    pass


class SuperluminalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ActionGradients:
    """Samplers ``dS_dt(t, x, y, z)`` and ``grad_S(t, x, y, z) -> (gx, gy, gz)`` of a background action."""

    dS_dt: Callable
    grad_S: Callable

    @classmethod
    def free(cls, E: float, p: Sequence[float]) -> "ActionGradients":
        """Gradients of the free action S0 = -E t + p.x."""
        px, py, pz = (float(c) for c in p)

        def dS_dt(t, x, y, z):
            return np.full(np.broadcast(t, x, y, z).shape, -float(E))

        def grad_S(t, x, y, z):
            shape = np.broadcast(t, x, y, z).shape
            return (np.full(shape, px), np.full(shape, py), np.full(shape, pz))

        return cls(dS_dt, grad_S)


def free_particle_energy(p: Sequence[float], params: PhysicalParams | None = None) -> float:
    params = params or natural_units()
    p2 = float(np.dot(p, p))
    return params.c * math.sqrt(p2 + (params.m * params.c) ** 2)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.positions.shape != (len(self.times), 3) or self.velocities.shape != self.positions.shape:
            raise ValueError("positions and velocities must have shape (len(times), 3)")


def _velocity(gradients, potentials, params, t, x):
    e, c = params.e_charge, params.c
    denom = float(gradients.dS_dt(t, *x)) + e * float(potentials.U(t, *x))
    if abs(denom) < SINGULAR_DENOMINATOR * params.m * c**2:
        raise SingularCharacteristicError(f"dS0/dt + eU = {denom:g} vanishes at t={t}, x={list(x)}")
    grad = np.array([float(g) for g in gradients.grad_S(t, *x)])
    A = np.array([float(a) for a in potentials.A(t, *x)])
    v = -c**2 * (grad - e * A / c) / denom
    if np.linalg.norm(v) >= c:
        raise SuperluminalError(f"|v| = {np.linalg.norm(v):.6g} >= c at t={t}; S0 is not a consistent action")
    return v


def integrate_trajectory(gradients: ActionGradients, potentials: Potentials | None, x0: Sequence[float],
                         t_span: tuple[float, float], dt: float = 0.01,
                         params: PhysicalParams | None = None) -> Trajectory:
    """Fixed-step RK4 integration of the characteristic equation."""
    params = params or natural_units()
    potentials = potentials or Potentials.zero()
    if not dt > 0:
        raise ValueError("dt must be positive")
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    times = np.linspace(t0, t1, n + 1)
    h = (t1 - t0) / n
    x = np.asarray(x0, dtype=float).copy()
    positions = np.empty((n + 1, 3))
    velocities = np.empty((n + 1, 3))
    f = lambda t, y: _velocity(gradients, potentials, params, t, y)
    for i, t in enumerate(times):
        positions[i] = x
        k1 = f(t, x)
        velocities[i] = k1
        if i == n:
            break
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Trajectory(times, positions, velocities)


@dataclass(frozen=True)
class PerturbationProfile:
    """Initial perturbation ``s0(x, y, z)`` that is negligible beyond ``support_radius``."""

    s0: Callable
    support_radius: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        peak = abs(complex(self.s0(*c)))
        directions = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
        outside = c + 1.01 * self.support_radius * directions
        tail = np.abs(np.asarray(self.s0(outside[:, 0], outside[:, 1], outside[:, 2])))
        if not np.all(np.isfinite(tail)) or np.any(tail > 1e-8 * max(peak, 1e-300)):
            raise ValueError("profile does not decay below 1e-8 of its peak beyond support_radius")


def gaussian_profile(center: Sequence[float] = (0.0, 0.0, 0.0), width: float = 1.0,
                     amplitude: complex = 1.0) -> PerturbationProfile:
    cx, cy, cz = (float(v) for v in center)

    def s0(x, y, z):
        return amplitude * np.exp(-((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) / (2 * width**2))

    return PerturbationProfile(s0, width * math.sqrt(2 * math.log(1e8)) * 1.001, (cx, cy, cz))


def advect_profile(profile: PerturbationProfile, transport, t: float) -> Callable:
    """Sampler ``(x, y, z) -> s(x, y, z, t)`` for a perturbation carried by the flow.

    ``transport`` is either a constant velocity (the free case, s0(x - v t))
    or a callable ``f(t, x, y, z) -> (X, Y, Z)`` returning the integrals of
    motion, taken as the initial position on the characteristic through
    (x, t).
    """
    if callable(transport):
        def sampler(x, y, z):
            X, Y, Z = transport(t, x, y, z)
            return profile.s0(X, Y, Z)
        return sampler
    v = np.asarray(transport, dtype=float)
    vx, vy, vz = np.broadcast_to(v, (3,))

    def sampler(x, y, z):
        return profile.s0(x - vx * t, y - vy * t, z - vz * t)
    return sampler


def centroid(values: np.ndarray, x: np.ndarray) -> float:
    w = np.abs(values) ** 2
    return float(np.sum(w * x) / np.sum(w))


def centroid_velocity(samplers_by_time: Sequence[tuple[float, Callable]], x: np.ndarray) -> float:
    """Least-squares slope of the |s|^2-weighted centroid along the x line (y = z = 0)."""
    ts = np.array([t for t, _ in samplers_by_time])
    cs = np.array([centroid(s(x, 0.0, 0.0), x) for _, s in samplers_by_time])
    return float(np.polyfit(ts, cs, 1)[0])


def linearized_operator(fld: ComplexField, gradients: ActionGradients, potentials: Potentials | None,
                        params: PhysicalParams | None = None) -> np.ndarray:
    params = params or natural_units()
    potentials = potentials or Potentials.zero()
    grid = fld.grid
    s = np.array(fld.values)
    co = spacetime_coords(grid)
    args = (co["t"], co["x"], co["y"], co["z"])
    e, c = params.e_charge, params.c
    temporal = np.broadcast_to(gradients.dS_dt(*args) + e * potentials.U(*args), grid.shape)
    grad = dict(zip("xyz", gradients.grad_S(*args)))
    A = dict(zip("xyz", potentials.A(*args)))
    out = temporal * _first_diff(s, grid.index("t"), grid.spacing("t")) / c**2
    for name in grid.spatial_names:
        coef = np.broadcast_to(grad[name] - e * A[name] / c, grid.shape)
        out = out - coef * _first_diff(s, grid.index(name), grid.spacing(name))
    return out


def linearized_residual(s_fields, gradients: ActionGradients, potentials: Potentials | None = None,
                        params: PhysicalParams | None = None) -> ResidualReport:
    """Residual of the linearised perturbation equation on one or more sampled fields."""
    if isinstance(s_fields, ComplexField):
        s_fields = [s_fields]
    levels = []
    for fld in s_fields:
        if not fld.grid.has("t"):
            raise ValueError("perturbation field needs a t axis")
        levels.append(_norms(linearized_operator(fld, gradients, potentials, params), fld.grid, fld.valid))
    return _report(levels)
