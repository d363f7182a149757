"""Finite-difference residuals of the Klein-Gordon and quantum Hamilton-Jacobi equations.

Second-order central differences on every axis; points whose stencil leaves
the grid (or touches a masked sample) are excluded from the norms.  The L2
norm integrates |R|^2 over the interior box with trapezoid cell-volume
weights, so it is comparable across resolutions covering the same region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import breathers as br
from .core import (ComplexField, GridError, PhysicalParams, Potentials, SpacetimeGrid,
                   build_grid, natural_units, spacetime_coords)

BRANCH_MASK_THRESHOLD = 0.05


@dataclass(frozen=True)
class LevelNorms:
    spacing: float
    l2: float
    linf: float
    interior: int
    masked: int
    boundary: int

    @property
    def total(self) -> int:
        return self.interior + self.masked + self.boundary


@dataclass(frozen=True)
class ResidualReport:
    l2_norm: float
    linf_norm: float
    interior_point_count: int
    masked_count: int
    boundary_count: int
    resolutions: tuple[float, ...]
    levels: tuple[LevelNorms, ...] = field(default_factory=tuple)
    convergence_order: float | None = None

    @property
    def total_points(self) -> int:
        return self.interior_point_count + self.masked_count + self.boundary_count


def convergence_order(pairs: Iterable[tuple[float, float]]) -> float:
    """Least-squares slope of log(norm) against log(spacing)."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two (spacing, norm) pairs")
    h = np.array([p[0] for p in pairs], dtype=float)
    e = np.array([p[1] for p in pairs], dtype=float)
    if np.any(h <= 0) or len(set(h.tolist())) != len(h):
        raise ValueError("spacings must be positive and distinct")
    if np.any(~(e > 0)):
        raise ValueError("norms must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)


def grid_resolution(grid: SpacetimeGrid) -> float:
    return max(a.spacing for a in grid.axes)


def patch_grid(center: dict[str, float], half_widths: dict[str, float], spacing: float) -> SpacetimeGrid:
    """Grid whose stencil-complete interior is exactly the box ``center +- half_width``.

    One ghost layer is added on every side, so norms taken over the interior
    cover the same region at every spacing.  Half-widths must be multiples of
    half the spacing.
    """
    axes = []
    for name, c in center.items():
        hw = half_widths[name]
        n = int(round(2 * hw / spacing))
        if not math.isclose(n * spacing, 2 * hw, rel_tol=1e-9):
            raise GridError(f"half-width {hw} on axis {name!r} is not a multiple of spacing/2 = {spacing / 2}")
        lo = c - hw - spacing
        if name == "r" and lo < 0:
            raise GridError("radial patch would extend below r = 0")
        axes.append((name, lo, lo + (n + 2) * spacing, n + 3))
    return build_grid(axes)


# -- stencils -----------------------------------------------------------------

def _second_diff(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.zeros_like(f)
    core = [slice(None)] * f.ndim
    lo, mid, hi = list(core), list(core), list(core)
    core[axis], lo[axis], mid[axis], hi[axis] = slice(1, -1), slice(None, -2), slice(1, -1), slice(2, None)
    out[tuple(core)] = (f[tuple(hi)] - 2.0 * f[tuple(mid)] + f[tuple(lo)]) / (h * h)
    return out


def _first_diff(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.zeros_like(f)
    core = [slice(None)] * f.ndim
    lo, hi = list(core), list(core)
    core[axis], lo[axis], hi[axis] = slice(1, -1), slice(None, -2), slice(2, None)
    out[tuple(core)] = (f[tuple(hi)] - f[tuple(lo)]) / (2.0 * h)
    return out


def boundary_mask(shape: Sequence[int]) -> np.ndarray:
    """True on points lying on any face of the grid."""
    mask = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = -1
        mask[tuple(idx)] = True
    return mask


def stencil_valid(valid: np.ndarray) -> np.ndarray:
    """Points that are valid and whose axis neighbours are valid too (boundary excluded)."""
    ok = valid & ~boundary_mask(valid.shape)
    for axis in range(valid.ndim):
        for shift in (1, -1):
            ok &= np.roll(valid, shift, axis=axis)
    return ok


def trapezoid_weights(grid: SpacetimeGrid) -> np.ndarray:
    """Cell-volume quadrature weights over the interior box (trapezoid rule, zero on the boundary)."""
    w = np.ones([1] * grid.ndim)
    for i, a in enumerate(grid.axes):
        wa = np.ones(a.count) * a.spacing
        wa[[0, -1]] = 0.0
        wa[[1, -2]] *= 0.5
        shape = [1] * grid.ndim
        shape[i] = a.count
        w = w * wa.reshape(shape)
    return np.broadcast_to(w, grid.shape)


def _norms(residual: np.ndarray, grid: SpacetimeGrid, valid: np.ndarray) -> LevelNorms:
    boundary = boundary_mask(grid.shape)
    use = stencil_valid(valid)
    interior = int(use.sum())
    n_boundary = int(boundary.sum())
    weights = np.where(use, trapezoid_weights(grid), 0.0)
    l2 = math.sqrt(float(np.sum(weights * np.abs(residual) ** 2))) if interior else 0.0
    linf = float(np.max(np.abs(residual[use]))) if interior else 0.0
    return LevelNorms(grid_resolution(grid), l2, linf, interior, grid.size - interior - n_boundary, n_boundary)


def _report(levels: list[LevelNorms]) -> ResidualReport:
    finest = min(levels, key=lambda lv: lv.spacing)
    order = None
    if len(levels) >= 2:
        pairs = [(lv.spacing, lv.l2) for lv in levels]
        order = convergence_order(pairs) if all(lv.l2 > 0 for lv in levels) else float("nan")
    return ResidualReport(finest.l2, finest.linf, finest.interior, finest.masked, finest.boundary,
                          tuple(lv.spacing for lv in levels), tuple(levels), order)


def _as_grids(grids) -> list[SpacetimeGrid]:
    if isinstance(grids, SpacetimeGrid):
        return [grids]
    grids = list(grids)
    if not grids:
        raise ValueError("no grids given")
    return grids


def _require_time(grid: SpacetimeGrid) -> None:
    if not grid.has("t"):
        raise GridError("operator needs a t axis")
    if not grid.spatial_names:
        raise GridError("operator needs at least one spatial axis")
    if any(n < 4 for n in grid.shape):
        raise GridError("every axis needs at least 4 points")


# -- operators ----------------------------------------------------------------

def box_operator(fld: ComplexField, params: PhysicalParams | None = None) -> ComplexField:
    """d'Alembertian (1/c^2) d_tt - laplacian on interior points; boundary masked.

    On a (t, r) grid the field is taken to hold u = r Psi and the reduced
    operator (1/c^2) u_tt - u_rr is applied.
    """
    params = params or natural_units()
    grid = fld.grid
    _require_time(grid)
    f = np.array(fld.values)
    out = _second_diff(f, grid.index("t"), grid.spacing("t")) / params.c**2
    for name in grid.spatial_names:
        out = out - _second_diff(f, grid.index(name), grid.spacing(name))
    valid = stencil_valid(fld.valid)
    return ComplexField(grid, np.where(valid, out, 0.0), "Residual", valid, dict(fld.flags))


def _gauge_fields(grid: SpacetimeGrid, potentials: Potentials, params: PhysicalParams):
    c = spacetime_coords(grid)
    shape = grid.shape
    U = np.broadcast_to(potentials.U(c["t"], c["x"], c["y"], c["z"]), shape).astype(float)
    A = [np.broadcast_to(a, shape).astype(float) for a in potentials.A(c["t"], c["x"], c["y"], c["z"])]
    return U, dict(zip("xyz", A))


def _check_cartesian_support(spec: br.BreatherSpec, grid: SpacetimeGrid) -> None:
    missing = [n for n in "xyz" if not grid.has(n)]
    if not missing:
        return
    v = dict(zip("xyz", spec.velocity))
    if spec.alpha != 0 or any(v[n] != 0 for n in missing):
        raise GridError(f"grid lacks axes {missing} along which the solution varies; use a full "
                        "(t, x, y, z) grid or a radial (t, r) grid")


def _radial_u(spec: br.BreatherSpec, grid: SpacetimeGrid, params: PhysicalParams) -> np.ndarray:
    if spec.speed != 0 or spec.mode.l != 0 or spec.is_train:
        raise GridError("radial grids only represent spherical breathers at rest")
    c = grid.coords()
    event = br.SpacetimeEvent(c["t"], c["r"], 0.0, 0.0)
    return c["r"] * br.psi(spec, event, params)


def sample_psi(spec: br.BreatherSpec, grid: SpacetimeGrid, params: PhysicalParams | None = None,
               potentials: Potentials | None = None) -> ComplexField:
    """Psi on a cartesian grid, or u = r Psi on a radial grid."""
    params = params or natural_units()
    if grid.has("r"):
        if potentials is not None:
            raise GridError("potentials are not supported on radial grids")
        return ComplexField(grid, _radial_u(spec, grid, params), "Psi", flags={"radial_reduced": True})
    _check_cartesian_support(spec, grid)
    event = br.SpacetimeEvent.from_grid(grid)
    values = np.broadcast_to(br.psi(spec, event, params), grid.shape)
    if potentials is not None:
        values = values * np.exp(1j * _gauge_phase(event, grid, potentials, params) / params.hbar)
    return ComplexField(grid, values, "Psi")


def _gauge_phase(event, grid, potentials, params):
    U, A = _gauge_fields(grid, potentials, params)
    e = params.e_charge
    return -e * U * event.t + (e / params.c) * (A["x"] * event.x + A["y"] * event.y + A["z"] * event.z)


def kg_operator(fld: ComplexField, params: PhysicalParams | None = None,
                potentials: Potentials | None = None) -> np.ndarray:
    """Box Psi + (mc/hbar)^2 Psi, or the minimally coupled form when potentials are given."""
    params = params or natural_units()
    grid = fld.grid
    f = np.array(fld.values)
    k0sq = params.compton_wavenumber**2
    if potentials is None:
        return np.array(box_operator(fld, params).values) + k0sq * f
    it, ht = grid.index("t"), grid.spacing("t")
    U, A = _gauge_fields(grid, potentials, params)
    hb, c, e = params.hbar, params.c, params.e_charge
    q = e * U / hb
    # (d_t + i q)^2 f = f_tt + 2 i q f_t + i q_t f - q^2 f
    time_part = (_second_diff(f, it, ht) + 2j * q * _first_diff(f, it, ht)
                 + 1j * _first_diff(q, it, ht) * f - q * q * f)
    space_part = np.zeros_like(f)
    for name in grid.spatial_names:
        ax, h = grid.index(name), grid.spacing(name)
        a = e * A[name] / (c * hb)
        # (d - i a)^2 f = f'' - 2 i a f' - i a' f - a^2 f
        space_part += (_second_diff(f, ax, h) - 2j * a * _first_diff(f, ax, h)
                       - 1j * _first_diff(a, ax, h) * f - a * a * f)
    return time_part / c**2 - space_part + k0sq * f


def kg_residual(spec: br.BreatherSpec, grids, params: PhysicalParams | None = None,
                potentials: Potentials | None = None) -> ResidualReport:
    """Klein-Gordon residual of the sampled wave function at one or more resolutions."""
    params = params or natural_units()
    levels = []
    for grid in _as_grids(grids):
        _require_time(grid)
        fld = sample_psi(spec, grid, params, potentials)
        levels.append(_norms(kg_operator(fld, params, potentials), grid, fld.valid))
    return _report(levels)


def sample_action(spec: br.BreatherSpec, grid: SpacetimeGrid, params: PhysicalParams | None = None,
                  potentials: Potentials | None = None,
                  mask_threshold: float = BRANCH_MASK_THRESHOLD) -> ComplexField:
    """S on the grid; points where |log argument| < ``mask_threshold`` are masked."""
    params = params or natural_units()
    if grid.has("r"):
        c = grid.coords()
        event = br.SpacetimeEvent(c["t"], c["r"], 0.0, 0.0)
    else:
        _check_cartesian_support(spec, grid)
        event = br.SpacetimeEvent.from_grid(grid)
    L = np.broadcast_to(br.log_argument(spec, event, params), grid.shape)
    valid = np.abs(L) >= mask_threshold
    safe_L = np.where(valid, L, 1.0)
    S = br.classical_phase(spec, event, params) - 1j * params.hbar * br._log(safe_L, spec, event)
    if potentials is not None:
        if grid.has("r"):
            raise GridError("potentials are not supported on radial grids")
        S = S + _gauge_phase(event, grid, potentials, params)
    S = np.where(valid, np.broadcast_to(S, grid.shape), 0.0)
    flags = {"unwrapped": bool(spec.unwrap)}
    return ComplexField(grid, S, "Action", None if valid.all() else valid, flags)


def qhj_operator(fld: ComplexField, params: PhysicalParams | None = None,
                 potentials: Potentials | None = None) -> np.ndarray:
    """(1/c^2)(S_t + eU)^2 - (grad S - eA/c)^2 - m^2 c^2 - i hbar Box S."""
    params = params or natural_units()
    grid = fld.grid
    S = np.array(fld.values)
    c, e = params.c, params.e_charge
    it, ht = grid.index("t"), grid.spacing("t")
    S_t = _first_diff(S, it, ht)
    box = _second_diff(S, it, ht) / c**2
    if potentials is not None:
        U, A = _gauge_fields(grid, potentials, params)
    else:
        U, A = 0.0, {"x": 0.0, "y": 0.0, "z": 0.0}
    grad_sq = np.zeros_like(S)
    for name in grid.spatial_names:
        ax, h = grid.index(name), grid.spacing(name)
        g = _first_diff(S, ax, h)
        if name != "r":
            g = g - e * A[name] / c
        grad_sq = grad_sq + g * g
        box = box - _second_diff(S, ax, h)
        if name == "r":
            r = grid.coords()["r"]
            with np.errstate(divide="ignore", invalid="ignore"):
                box = box - np.where(r > 0, 2.0 * g / np.where(r > 0, r, 1.0), 0.0)
    return (S_t + e * U) ** 2 / c**2 - grad_sq - (params.m * c) ** 2 - 1j * params.hbar * box


def qhj_residual(spec: br.BreatherSpec, grids, params: PhysicalParams | None = None,
                 potentials: Potentials | None = None) -> ResidualReport:
    """Quantum Hamilton-Jacobi residual of the sampled action at one or more resolutions.

    With constant potentials the sampled action is the slow-field form
    S_free - e U t + (e/c) A.x, which is exact in that case.
    """
    params = params or natural_units()
    levels = []
    for grid in _as_grids(grids):
        _require_time(grid)
        fld = sample_action(spec, grid, params, potentials)
        valid = fld.valid.copy()
        if grid.has("r"):
            valid &= grid.coords()["r"] > 0
        levels.append(_norms(qhj_operator(fld, params, potentials), grid, valid))
    return _report(levels)


def lorentz_gauge_check(potentials: Potentials, grid: SpacetimeGrid,
                        params: PhysicalParams | None = None) -> ResidualReport:
    """Norms of (1/c) dU/dt + div A on the grid interior."""
    params = params or natural_units()
    _require_time(grid)
    U, A = _gauge_fields(grid, potentials, params)
    res = _first_diff(U, grid.index("t"), grid.spacing("t")) / params.c
    for name in grid.spatial_names:
        if name in A:
            res = res + _first_diff(A[name], grid.index(name), grid.spacing(name))
    return _report([_norms(res, grid, np.ones(grid.shape, dtype=bool))])


def dispersion_omega(k: float, params: PhysicalParams | None = None) -> float:
    """Klein-Gordon frequency c sqrt(k^2 + (mc/hbar)^2)."""
    params = params or natural_units()
    if k < 0:
        raise ValueError("wavenumber must be non-negative")
    return params.c * math.hypot(k, params.compton_wavenumber)


# -- Einstein relation ----------------------------------------------------------

def _energy_momentum(spec, t, x, y, z, params, step):
    """E = -dS/dt and p = grad S by central differences (arrays broadcast over points)."""
    def S(dt=0.0, dx=0.0, dy=0.0, dz=0.0):
        return br.action(spec, br.SpacetimeEvent(t + dt, x + dx, y + dy, z + dz), params)

    ht = step * params.compton_time
    hx = step * params.compton_length
    E = -(S(dt=ht) - S(dt=-ht)) / (2 * ht)
    p = np.stack([(S(dx=hx) - S(dx=-hx)) / (2 * hx),
                  (S(dy=hx) - S(dy=-hx)) / (2 * hx),
                  (S(dz=hx) - S(dz=-hx)) / (2 * hx)])
    return E, p


def einstein_relation_check(spec: br.BreatherSpec, params: PhysicalParams | None = None,
                            mode: str = "far_field", *, radius: float = 30.0, time_samples: int | None = None,
                            ball_radius: float = 10.0, ball_spacing: float = 0.5,
                            fd_step: float = 1e-3) -> float:
    """Relative deviation |E^2/c^2 - p^2 - m^2 c^2| / (mc)^2 with E, p from the action.

    E and p are averaged before the relation is formed: over one clock
    period (as seen at the breather centre) in ``far_field`` mode, at a
    point ``radius`` Compton lengths from the centre, perpendicular to the
    motion; over a ball of ``ball_radius`` and one period in
    ``breather_average`` mode.  Both averaging measures are conventions.
    """
    params = params or natural_units()
    spec.check(params)
    if abs(spec.alpha) >= 1:
        raise ValueError("einstein_relation_check needs |alpha| < 1")
    gamma = br.lorentz_factor(spec.speed, params)
    v = np.asarray(spec.velocity)
    period = 2 * np.pi * gamma / params.clock_frequency
    if time_samples is None:
        time_samples = 64 if mode == "far_field" else 16
    ts = np.arange(time_samples) * (period / time_samples)
    if mode == "far_field":
        direction = np.array([0.0, 1.0, 0.0])
        if spec.speed > 0:
            # any unit vector perpendicular to the motion
            trial = np.array([0.0, 0.0, 1.0]) if abs(v[2]) < 0.9 * spec.speed else np.array([1.0, 0.0, 0.0])
            direction = np.cross(v, trial)
            direction /= np.linalg.norm(direction)
        pos = radius * params.compton_length * direction
        x = pos[0] + v[0] * ts
        y = pos[1] + v[1] * ts
        z = pos[2] + v[2] * ts
        E, p = _energy_momentum(spec, ts, x, y, z, params, fd_step)
        E_avg = np.mean(E)
        p_avg = np.mean(p, axis=1)
    elif mode == "breather_average":
        R = ball_radius * params.compton_length
        h = ball_spacing * params.compton_length
        n = int(round(R / h))
        axis = np.arange(-n, n + 1) * h
        X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
        inside = X**2 + Y**2 + Z**2 <= R * R
        X, Y, Z = X[inside], Y[inside], Z[inside]
        E_sum, p_sum = 0.0, np.zeros(3, dtype=complex)
        for t in ts:
            E, p = _energy_momentum(spec, t, X + v[0] * t, Y + v[1] * t, Z + v[2] * t, params, fd_step)
            E_sum += np.mean(E)
            p_sum += np.mean(p, axis=1)
        E_avg = E_sum / len(ts)
        p_avg = p_sum / len(ts)
    else:
        raise ValueError(f"unknown mode {mode!r}; use 'far_field' or 'breather_average'")
    mc = params.m * params.c
    return float(abs(E_avg**2 / params.c**2 - np.dot(p_avg, p_avg) - mc**2) / mc**2)
