"""Physical parameters, spacetime grids and complex field containers.

Everything downstream works with plain numpy arrays laid out in row-major
order with the axis order fixed at grid construction.  Formulas are written
with ``m``, ``c``, ``hbar`` kept explicit, so they hold in any unit system;
the tests and demos run in natural units where all three are one.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

AXIS_NAMES = ("t", "x", "y", "z", "r")
QUANTITIES = ("Psi", "Action", "Potential", "Perturbation", "Residual")
MIN_AXIS_COUNT = 4


class GridError(ValueError):
    pass


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    m: float = 1.0
    c: float = 1.0
    hbar: float = 1.0
    e_charge: float = 0.0

    def __post_init__(self):
        for name in ("m", "c", "hbar"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value!r}")
        if not math.isfinite(self.e_charge):
            raise ValueError("e_charge must be finite")

    @property
    def compton_length(self) -> float:
        return self.hbar / (self.m * self.c)

    @property
    def compton_time(self) -> float:
        return self.hbar / (self.m * self.c**2)

    @property
    def clock_frequency(self) -> float:
        """Angular frequency m c^2 / hbar of the internal clock of a particle at rest."""
        return self.m * self.c**2 / self.hbar

    @property
    def compton_wavenumber(self) -> float:
        return self.m * self.c / self.hbar

    def as_dict(self) -> dict:
        return {"m": self.m, "c": self.c, "hbar": self.hbar, "e_charge": self.e_charge}


def natural_units() -> PhysicalParams:
    return PhysicalParams(m=1.0, c=1.0, hbar=1.0, e_charge=0.0)


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    count: int

    @property
    def spacing(self) -> float:
        return (self.max - self.min) / (self.count - 1)

    @property
    def values(self) -> np.ndarray:
        return self.min + self.spacing * np.arange(self.count)


@dataclass(frozen=True)
class SpacetimeGrid:
    axes: tuple[Axis, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def has(self, name: str) -> bool:
        return name in self.names

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(f"grid has no axis {name!r}")

    def index(self, name: str) -> int:
        return self.names.index(name)

    def spacing(self, name: str) -> float:
        return self.axis(name).spacing

    @property
    def spatial_names(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n != "t")

    @property
    def cell_volume(self) -> float:
        return math.prod(a.spacing for a in self.axes)

    def coords(self) -> dict[str, np.ndarray]:
        """Broadcastable coordinate arrays keyed by axis name (sparse mesh)."""
        out = {}
        for i, a in enumerate(self.axes):
            shape = [1] * self.ndim
            shape[i] = a.count
            out[a.name] = a.values.reshape(shape)
        return out

    def point(self, index: Sequence[int]) -> dict[str, float]:
        return {a.name: float(a.values[i]) for a, i in zip(self.axes, index)}

    def with_axis(self, name: str, **changes) -> "SpacetimeGrid":
        axes = []
        for a in self.axes:
            if a.name == name:
                a = Axis(changes.get("name", a.name), changes.get("min", a.min),
                         changes.get("max", a.max), changes.get("count", a.count))
            axes.append(a)
        return build_grid([(a.name, a.min, a.max, a.count) for a in axes])


def build_grid(axes: Sequence[tuple[str, float, float, int]]) -> SpacetimeGrid:
    """Build a uniform rectilinear grid from ``(name, min, max, count)`` tuples.

    Axis order is kept as given; storage is row-major in that order.
    """
    seen = set()
    built = []
    for entry in axes:
        name, lo, hi, count = entry
        if name not in AXIS_NAMES:
            raise GridError(f"unknown axis name {name!r}; expected one of {AXIS_NAMES}")
        if name in seen:
            raise GridError(f"duplicate axis name {name!r}")
        seen.add(name)
        if int(count) != count or count < MIN_AXIS_COUNT:
            raise GridError(f"axis {name!r}: count must be an integer >= {MIN_AXIS_COUNT}, got {count!r}")
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
            raise GridError(f"axis {name!r}: need finite max > min, got [{lo}, {hi}]")
        if name == "r" and lo < 0:
            raise GridError("radial axis must have min >= 0")
        built.append(Axis(name, lo, hi, int(count)))
    if not built:
        raise GridError("grid needs at least one axis")
    if "r" in seen and seen & {"x", "y", "z"}:
        raise GridError("radial axis cannot be combined with cartesian axes")
    return SpacetimeGrid(tuple(built))


def uniform_axis(name: str, lo: float, hi: float, spacing: float) -> tuple[str, float, float, int]:
    """Axis tuple covering ``[lo, hi]`` with the given spacing (hi is rounded to fit)."""
    count = int(round((hi - lo) / spacing)) + 1
    return (name, lo, lo + spacing * (count - 1), count)


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples on a grid.

    ``mask`` marks valid samples (True = valid); ``None`` means all valid.
    ``flags`` records provenance such as ``{"unwrapped": True}``.
    """

    grid: SpacetimeGrid
    values: np.ndarray
    quantity: str = "Psi"
    mask: np.ndarray | None = None
    flags: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values but grid has {self.grid.size} points")
        values = np.ascontiguousarray(values.reshape(self.grid.shape))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity tag {self.quantity!r}")
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool).reshape(self.grid.shape)
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)
            check = values[mask]
        else:
            check = values
        if not np.all(np.isfinite(check)):
            raise SamplingError("field contains non-finite values at unmasked points")
        object.__setattr__(self, "flags", dict(self.flags))

    @property
    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.mask

    @property
    def masked_count(self) -> int:
        return 0 if self.mask is None else int(self.mask.size - np.count_nonzero(self.mask))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def at(self, index: Sequence[int]) -> complex:
        return complex(self.values[tuple(index)])


Sampler = Callable[..., np.ndarray]


def _zero_scalar(t, x, y, z):
    return np.zeros(np.broadcast(t, x, y, z).shape)


def _zero_vector(t, x, y, z):
    zero = _zero_scalar(t, x, y, z)
    return (zero, zero, zero)


@dataclass(frozen=True)
class Potentials:
    """Scalar potential ``U(t, x, y, z)`` and vector potential ``A(t, x, y, z) -> (Ax, Ay, Az)``."""

    U: Sampler = _zero_scalar
    A: Sampler = _zero_vector

    @classmethod
    def zero(cls) -> "Potentials":
        return cls()

    @classmethod
    def constant(cls, U0: float = 0.0, A0: Sequence[float] = (0.0, 0.0, 0.0)) -> "Potentials":
        ax, ay, az = (float(a) for a in A0)

        def U(t, x, y, z):
            return np.full(np.broadcast(t, x, y, z).shape, float(U0))

        def A(t, x, y, z):
            shape = np.broadcast(t, x, y, z).shape
            return (np.full(shape, ax), np.full(shape, ay), np.full(shape, az))

        pot = cls(U, A)
        object.__setattr__(pot, "constant_values", (float(U0), (ax, ay, az)))
        return pot

    @property
    def is_constant(self) -> bool:
        return hasattr(self, "constant_values")


def resolve_threads(threads: int | None = None) -> int:
    """Thread count from the argument or ``BRTH_THREADS`` (0 or unset = auto)."""
    if threads is None:
        raw = os.environ.get("BRTH_THREADS", "0").strip() or "0"
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"BRTH_THREADS must be an integer, got {raw!r}") from None
    if threads < 0:
        raise ValueError("thread count must be >= 0")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


def spacetime_coords(grid: SpacetimeGrid) -> dict[str, np.ndarray]:
    """Coordinates for every grid axis, plus zeros for absent t/x/y/z."""
    coords = grid.coords()
    zero = np.zeros([1] * grid.ndim)
    for name in ("t", "x", "y", "z"):
        coords.setdefault(name, zero)
    return coords


def _evaluate(expr, coords, mask_predicate, shape):
    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(expr(**coords), dtype=complex), shape)
        masked = None
        if mask_predicate is not None:
            masked = np.broadcast_to(np.asarray(mask_predicate(**coords), dtype=bool), shape)
    return np.array(values), None if masked is None else np.array(masked)


def sample(expr: Sampler, grid: SpacetimeGrid, quantity: str = "Psi",
           mask_predicate: Sampler | None = None, threads: int | None = None) -> ComplexField:
    """Evaluate a vectorised pointwise function on every grid point.

    ``expr`` is called with one keyword per grid axis (broadcastable arrays).
    ``mask_predicate`` uses the same signature and returns True where the
    point should be excluded.  Work is split into slabs along the first axis
    when more than one thread is available; every point is computed by the
    same elementwise code either way, so the result does not depend on the
    thread count.
    """
    coords = grid.coords()
    n_threads = min(resolve_threads(threads), grid.shape[0])
    if n_threads <= 1:
        values, masked = _evaluate(expr, coords, mask_predicate, grid.shape)
    else:
        first = grid.names[0]
        bounds = np.linspace(0, grid.shape[0], n_threads + 1).astype(int)

        def chunk(i):
            lo, hi = bounds[i], bounds[i + 1]
            sub = dict(coords)
            sub[first] = coords[first][lo:hi]
            shape = (hi - lo,) + grid.shape[1:]
            return _evaluate(expr, sub, mask_predicate, shape)

        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(chunk, range(n_threads)))
        values = np.concatenate([p[0] for p in parts], axis=0)
        masked = None if mask_predicate is None else np.concatenate([p[1] for p in parts], axis=0)

    valid = np.ones(grid.shape, dtype=bool) if masked is None else ~masked
    bad = valid & ~np.isfinite(values)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SamplingError(f"non-finite sample at {grid.point(idx)} (index {idx})")
    if masked is not None:
        values = np.where(valid, values, 0.0)
    return ComplexField(grid, values, quantity, None if masked is None else valid)
