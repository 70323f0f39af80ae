"""Core domain types: points, paths, drivers and capacity bookkeeping.

All types are immutable after construction and every operation is a pure
function, so everything here is safe to share across workers.  Numbers are
64-bit floats throughout; paths are evaluated between samples by linear
interpolation of the sample points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

CAPACITY = "capacity"
ARBITRARY = "arbitrary"

LINEAR = "linear"
SQRT = "sqrt"

# Relative slack used when validating "im >= 0" style constraints; values
# within the slack are clamped to the constraint instead of rejected.
_IM_SLACK = 1e-9


class SwallowedPointError(ValueError):
    """A point fell inside a slit while being pushed through a chain."""

    def __init__(self, atom_index: int, point: complex, message: str | None = None):
        self.atom_index = atom_index
        self.point = point
        super().__init__(
            message
            or f"point {point} swallowed by atom {atom_index} of the hull chain"
        )


class HullNotIncreasingError(ValueError):
    """Driving-function recovery detected non-strictly-increasing hulls."""

    def __init__(self, sample_index: int, message: str | None = None):
        self.sample_index = sample_index
        super().__init__(
            message
            or f"hulls not strictly increasing near sample {sample_index}"
        )


class ExtrapolationError(RuntimeError):
    """A numerical extrapolation ladder failed to converge."""


@dataclass(frozen=True)
class HPoint:
    """A point of the closed upper half-plane."""

    re: float
    im: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError(f"HPoint components must be finite, got {self.re}, {self.im}")
        if self.im < 0.0:
            scale = max(1.0, abs(self.re))
            if self.im < -_IM_SLACK * scale:
                raise ValueError(f"HPoint must satisfy im >= 0, got im={self.im}")
            object.__setattr__(self, "im", 0.0)

    @classmethod
    def from_complex(cls, z: complex) -> "HPoint":
        return cls(float(np.real(z)), float(np.imag(z)))

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)

    def __complex__(self) -> complex:
        return self.z


def _as_times(times: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(times, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("times must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("times must be finite")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise ValueError("times must be strictly increasing")
    arr.setflags(write=False)
    return arr


def _as_points(points: Sequence[complex] | np.ndarray) -> np.ndarray:
    if len(points) and isinstance(points[0], HPoint):
        points = [p.z for p in points]
    arr = np.asarray(points, dtype=np.complex128).copy()
    if arr.ndim != 1:
        raise ValueError("points must be a 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    scale = max(1.0, float(np.max(np.abs(arr), initial=0.0)))
    im = arr.imag
    if np.any(im < -_IM_SLACK * scale):
        worst = float(im.min())
        raise ValueError(f"points must lie in the closed upper half-plane, min im={worst}")
    np.clip(im, 0.0, None, out=im)
    arr = arr.real + 1j * im
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SampledPath:
    """A time-indexed polyline in the closed upper half-plane.

    ``parametrisation`` records whether the times are the half-plane
    capacity clock (hcap of the filled initial segments equals twice the
    time) or an arbitrary clock.
    """

    times: np.ndarray
    points: np.ndarray
    parametrisation: str = ARBITRARY

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", _as_times(self.times))
        object.__setattr__(self, "points", _as_points(self.points))
        if self.times.size != self.points.size:
            raise ValueError("times and points must have the same length")
        if self.parametrisation not in (CAPACITY, ARBITRARY):
            raise ValueError(f"unknown parametrisation {self.parametrisation!r}")

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def re(self) -> np.ndarray:
        return self.points.real

    @property
    def im(self) -> np.ndarray:
        return self.points.imag

    def diameter(self) -> float:
        span_re = float(self.re.max() - self.re.min())
        span_im = float(self.im.max() - self.im.min())
        return math.hypot(span_re, span_im)

    def hpoint(self, i: int) -> HPoint:
        return HPoint.from_complex(self.points[i])

    def evaluate(self, t: float | np.ndarray) -> complex | np.ndarray:
        """Evaluate by linear interpolation; ``t`` must lie in the time range."""
        t_arr = np.asarray(t, dtype=np.float64)
        slack = 1e-9 * max(1.0, abs(self.t0), abs(self.t1))
        if np.any(t_arr < self.t0 - slack) or np.any(t_arr > self.t1 + slack):
            raise ValueError(
                f"evaluation time outside path range [{self.t0}, {self.t1}]"
            )
        t_arr = np.clip(t_arr, self.t0, self.t1)
        re = np.interp(t_arr, self.times, self.points.real)
        im = np.interp(t_arr, self.times, self.points.imag)
        out = re + 1j * im
        return complex(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def restrict(self, t_lo: float, t_hi: float) -> "SampledPath":
        """Sub-path on [t_lo, t_hi], interpolating the endpoints if needed."""
        if not (self.t0 <= t_lo < t_hi <= self.t1):
            raise ValueError("restriction window outside path range")
        inner = (self.times > t_lo) & (self.times < t_hi)
        times = np.concatenate(([t_lo], self.times[inner], [t_hi]))
        pts = np.concatenate(
            ([self.evaluate(t_lo)], self.points[inner], [self.evaluate(t_hi)])
        )
        return SampledPath(times, pts, self.parametrisation)

    def translated(self, dx: float) -> "SampledPath":
        return SampledPath(self.times, self.points + dx, self.parametrisation)

    def shifted_time(self, dt: float) -> "SampledPath":
        return SampledPath(self.times + dt, self.points, self.parametrisation)


@dataclass(frozen=True)
class DrivingFunction:
    """A sampled continuous real function of capacity time (units: hcap/2)."""

    times: np.ndarray
    values: np.ndarray
    interpolation: str = LINEAR

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", _as_times(self.times))
        vals = np.asarray(self.values, dtype=np.float64).copy()
        if vals.ndim != 1 or vals.size != self.times.size:
            raise ValueError("values must match times in length")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.times[0] < -1e-12 or self.times[0] > 1e-12 * max(1.0, self.times[-1]):
            raise ValueError("driver times must start at 0")
        if self.interpolation not in (LINEAR, SQRT):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def evaluate(self, t: float | np.ndarray) -> float | np.ndarray:
        t_arr = np.asarray(t, dtype=np.float64)
        slack = 1e-9 * max(1.0, self.t1)
        if np.any(t_arr < -slack) or np.any(t_arr > self.t1 + slack):
            raise ValueError(f"evaluation time outside driver range [0, {self.t1}]")
        t_arr = np.clip(t_arr, self.times[0], self.t1)
        if self.interpolation == LINEAR:
            out = np.interp(t_arr, self.times, self.values)
        else:
            # Piecewise sqrt: between knots the driver moves like a constant
            # multiple of sqrt(t - t_i), matching slit-like growth.
            idx = np.clip(np.searchsorted(self.times, t_arr, side="right") - 1, 0, len(self) - 2)
            t_i, t_j = self.times[idx], self.times[idx + 1]
            v_i, v_j = self.values[idx], self.values[idx + 1]
            frac = np.sqrt(np.clip((t_arr - t_i) / (t_j - t_i), 0.0, 1.0))
            out = v_i + (v_j - v_i) * frac
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def restriction(self, t: float, recentre: bool = True) -> "DrivingFunction":
        """Driver restricted to [t, end], re-clocked to start at 0."""
        if not (0.0 <= t < self.t1):
            raise ValueError("restriction time outside driver range")
        v_t = self.evaluate(t)
        inner = self.times > t
        times = np.concatenate(([t], self.times[inner])) - t
        vals = np.concatenate(([v_t], self.values[inner]))
        if recentre:
            vals = vals - v_t
        return DrivingFunction(times, vals, self.interpolation)


@dataclass(frozen=True)
class SlitAtom:
    """One discretisation step: a vertical slit of capacity increment ``dt``.

    The atom removes the segment from ``base`` to ``base + 2i*sqrt(dt)``;
    its mapping-out function carries half-plane capacity 2*dt.
    """

    base: float
    dt: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.base) and math.isfinite(self.dt)):
            raise ValueError("atom parameters must be finite")
        if self.dt <= 0.0:
            raise ValueError(f"atom capacity increment must be positive, got {self.dt}")

    @property
    def height(self) -> float:
        return 2.0 * math.sqrt(self.dt)

    @property
    def tip(self) -> complex:
        return complex(self.base, self.height)


@dataclass(frozen=True)
class HullChain:
    """An ordered composition of slit atoms with a capacity clock."""

    atoms: tuple[SlitAtom, ...]
    t0: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @classmethod
    def from_arrays(cls, bases: np.ndarray, dts: np.ndarray, t0: float = 0.0) -> "HullChain":
        return cls(tuple(SlitAtom(float(b), float(d)) for b, d in zip(bases, dts)), t0)

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def bases(self) -> np.ndarray:
        arr = np.array([a.base for a in self.atoms], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def dts(self) -> np.ndarray:
        arr = np.array([a.dt for a in self.atoms], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def capacity_times(self) -> np.ndarray:
        """Clock value after each atom: t0, then t0 + cumulative dt."""
        arr = self.t0 + np.concatenate(([0.0], np.cumsum(self.dts)))
        arr.setflags(write=False)
        return arr

    @property
    def total_capacity(self) -> float:
        """hcap of the full chain; additive across composition."""
        return 2.0 * float(np.sum(self.dts))

    @property
    def end_time(self) -> float:
        return float(self.capacity_times[-1])

    def prefix(self, n_atoms: int) -> "HullChain":
        return HullChain(self.atoms[:n_atoms], self.t0)

    def extended(self, atoms: Iterable[SlitAtom]) -> "HullChain":
        return HullChain(self.atoms + tuple(atoms), self.t0)


@dataclass(frozen=True)
class ConvergenceReport:
    """Paired sup-norm distances across an approximating sequence."""

    trace_distances: np.ndarray
    driver_distances: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        td = np.asarray(self.trace_distances, dtype=np.float64)
        dd = np.asarray(self.driver_distances, dtype=np.float64)
        if td.shape != dd.shape:
            raise ValueError("trace and driver distance sequences must have equal length")
        if np.any(td < 0) or np.any(dd < 0):
            raise ValueError("distances must be non-negative")
        td.setflags(write=False)
        dd.setflags(write=False)
        object.__setattr__(self, "trace_distances", td)
        object.__setattr__(self, "driver_distances", dd)


def _common_grid(
    t0a: float, t1a: float, t0b: float, t1b: float,
    knots_a: np.ndarray, knots_b: np.ndarray,
    grid: int | Sequence[float] | np.ndarray | None,
    window: tuple[float, float] | None,
) -> np.ndarray:
    lo, hi = max(t0a, t0b), min(t1a, t1b)
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
    if not lo < hi:
        raise ValueError("time ranges do not overlap")
    if grid is None:
        merged = np.unique(np.concatenate((knots_a, knots_b)))
        g = merged[(merged >= lo) & (merged <= hi)]
        g = np.unique(np.concatenate(([lo], g, [hi])))
    elif isinstance(grid, (int, np.integer)):
        g = np.linspace(lo, hi, int(grid))
    else:
        g = np.asarray(grid, dtype=np.float64)
        if np.any(g < lo) or np.any(g > hi):
            raise ValueError("grid points outside the common time window")
    return g


def sup_distance(
    a: SampledPath,
    b: SampledPath,
    grid: int | Sequence[float] | np.ndarray | None = None,
    window: tuple[float, float] | None = None,
) -> float:
    """Max of |a(t) - b(t)| over a common time grid.

    ``grid`` may be an explicit array of times, a point count for a uniform
    grid, or None to use the union of both paths' knots.  The comparison
    window defaults to the overlap of the two time ranges.
    """
    g = _common_grid(a.t0, a.t1, b.t0, b.t1, a.times, b.times, grid, window)
    return float(np.max(np.abs(a.evaluate(g) - b.evaluate(g))))


def driver_distance(
    a: DrivingFunction,
    b: DrivingFunction,
    grid: int | Sequence[float] | np.ndarray | None = None,
    window: tuple[float, float] | None = None,
) -> float:
    """Max of |a(t) - b(t)| over a common capacity-time grid."""
    g = _common_grid(
        float(a.times[0]), a.t1, float(b.times[0]), b.t1, a.times, b.times, grid, window
    )
    return float(np.max(np.abs(a.evaluate(g) - b.evaluate(g))))


def reparametrize_linear(
    p: SampledPath, new_times: Sequence[float] | np.ndarray
) -> SampledPath:
    """Monotone re-timing that keeps the image of the path.

    With ``len(new_times) == len(p)`` the sample points are kept and only
    re-labelled.  With a different length the path is resampled at
    ``new_times`` (which must lie inside the original range).
    """
    nt = np.asarray(new_times, dtype=np.float64)
    if nt.ndim != 1 or nt.size < 2:
        raise ValueError("new_times must be a 1-d sequence of at least 2 times")
    if not np.all(np.diff(nt) > 0):
        raise ValueError("new_times must be strictly increasing")
    if nt.size == len(p):
        return SampledPath(nt, p.points, ARBITRARY)
    return SampledPath(nt, p.evaluate(nt), ARBITRARY)


def modulus_of_continuity(
    p: SampledPath, lags: Sequence[float] | np.ndarray, grid: int = 2048
) -> np.ndarray:
    """Empirical modulus w(h) = max |p(t+h) - p(t)| for each lag h."""
    out = np.empty(len(lags), dtype=np.float64)
    t = np.linspace(p.t0, p.t1, grid)
    vals = p.evaluate(t)
    step = (p.t1 - p.t0) / (grid - 1)
    for k, h in enumerate(lags):
        if h <= 0:
            out[k] = 0.0
            continue
        m = max(1, int(round(h / step)))
        shifts = np.abs(vals[m:] - vals[:-m]) if m < grid else np.array([0.0])
        out[k] = float(np.max(shifts, initial=0.0))
    return out
