"""Driving-function recovery: unzip a trace into a chain and its driver.

The unzipper walks the samples of a path, maps each increment out through
the chain built so far, and fits one vertical slit atom per near-vertical
mapped increment (base from the real part, capacity from the imaginary
part).  Increments that are not near-vertical are subdivided by linear
interpolation in the mapped plane; increments whose image collapses onto
the real axis while the base still has to jump signal that the hulls do not
grow strictly, which is reported as :class:`HullNotIncreasingError`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import forward_atom_inplace, push_chain
from .conformal import chain_forward_masked
from .core import (
    CAPACITY,
    DrivingFunction,
    HullChain,
    HullNotIncreasingError,
    SampledPath,
    SlitAtom,
    SwallowedPointError,
)

_START_TOL = 1e-9

# Mapped increments wider than this ratio bound are handled by subdividing
# the original curve rather than the mapped chord; see _Unzipper._drill.
_CHORD_RATIO_LIMIT = 2.0


@dataclass(frozen=True)
class UnzipResult:
    """Chain, driver and per-sample capacity bookkeeping of one unzip run."""

    driver: DrivingFunction
    chain: HullChain
    sample_times: np.ndarray
    sample_atoms: np.ndarray
    scale: float
    tail_snapshots: list | None = None

    def driver_value_at_atom(self, n_atoms: int) -> float:
        return float(self.driver.values[n_atoms])


def _resolved_push(
    bases,
    dts,
    z: complex,
    prefer: complex,
    scale: float,
    sides: tuple[int, ...] = (1, -1),
    n_atoms: int | None = None,
) -> complex:
    """Push a point that may sit on the hull, resolving the boundary side.

    A point of the hull belongs to up to two prime ends.  The point is
    nudged off the hull in the real direction by a shrinking ladder of
    offsets; the side whose image is closest to ``prefer`` is returned.
    """
    n = len(bases) if n_atoms is None else n_atoms
    b_arr = np.asarray(bases[:n], dtype=np.float64)
    d_arr = np.asarray(dts[:n], dtype=np.float64)
    w = push_chain(b_arr, d_arr, z.real, z.imag)
    if w == w:
        return w
    candidates = []
    for sign in sides:
        for j in range(16):
            delta = scale * 1e-12 * 4.0**j
            if delta > 1e-3 * scale:
                break
            w = push_chain(b_arr, d_arr, z.real + sign * delta, z.imag)
            if w == w:
                candidates.append(w)
                break
    if not candidates:
        raise SwallowedPointError(-1, z, f"point {z} has no resolvable boundary side")
    diffs = [abs(c - prefer) for c in candidates]
    return candidates[diffs.index(min(diffs))]


class _Unzipper:
    """Mutable state of one unzip run."""

    def __init__(self, gamma: SampledPath, kappa: float, max_depth: int,
                 size_floor: float | None, im_floor: float | None, tail_window: int,
                 flat_budget: float | None):
        self.pts = gamma.points
        self.scale = max(gamma.diameter(), 1e-12)
        self.kappa = kappa
        self.max_depth = max_depth
        self.size_floor = 1e-6 * self.scale if size_floor is None else size_floor
        self.im_floor = 1e-9 * self.scale if im_floor is None else im_floor
        self.flat_budget = 1e-4 * self.scale if flat_budget is None else flat_budget
        self.flat_used = 0.0
        self.tail_window = tail_window
        if abs(self.pts[0].imag) > _START_TOL * self.scale:
            raise ValueError("path must start on the real axis")
        self.bases: list[float] = []
        self.dts: list[float] = []
        self.taus: list[float] = [0.0]
        self.base = float(self.pts[0].real)
        self.vals: list[float] = [self.base]
        self.tau = 0.0
        self.images = self.pts.astype(np.complex128).copy()
        self.snapshots: list | None = [] if tail_window else None

    def _append_atom(self, base: float, dy: float) -> None:
        dt = 0.25 * dy * dy
        self.bases.append(base)
        self.dts.append(dt)
        self.base = base
        tau_next = self.tau + dt
        if tau_next <= self.tau:
            tau_next = np.nextafter(self.tau, np.inf)
        self.tau = tau_next
        self.taus.append(tau_next)
        self.vals.append(base)

    @staticmethod
    def _apply_atom(w: complex, b: float, d: float) -> complex:
        """One forward atom applied to a scalar image, nudging off the slit."""
        h = 2.0 * math.sqrt(d)
        ur = w.real - b
        if abs(ur) <= 1e-12 * h + 1e-15 * abs(w - b) and w.imag < h * (1.0 - 1e-9):
            ur = 1e-9 * h if ur >= 0 else -1e-9 * h
        s = cmath.sqrt(complex(ur * ur - w.imag * w.imag + 4.0 * d, 2.0 * ur * w.imag))
        return b - s if ur < 0 else b + s

    def _charge_flat(self, dx: float, idx: int) -> None:
        # The base may creep with (almost) no capacity only within a small
        # per-increment budget; a persistent flat walk means the hull stopped
        # growing while the driver kept moving.
        self.flat_used += abs(dx)
        if self.flat_used > self.flat_budget:
            raise HullNotIncreasingError(
                idx,
                f"hulls not strictly increasing near sample {idx}: driver moved "
                f"{self.flat_used:.3e} with vanishing capacity",
            )

    def _consume(self, z_lo: complex, z_hi: complex, w_hi: complex, idx: int) -> None:
        dx = w_hi.real - self.base
        dy = w_hi.imag
        suspicious = (dy <= self.im_floor and abs(dx) > self.size_floor) or (
            dy > self.im_floor
            and abs(dx) > _CHORD_RATIO_LIMIT * dy
            and math.hypot(dx, dy) > self.size_floor
        )
        if suspicious:
            self._drill(z_lo, z_hi, w_hi, 0, idx)
        else:
            self._weld(w_hi, idx)

    def _weld(self, w_hi: complex, idx: int) -> None:
        """Fit atoms for a benign mapped increment, bisecting its chord.

        Fitting the midpoint of the chord from the base to the target bends
        the remainder towards the vertical, so a few levels of bisection
        bring the increments within the ratio bound; leftover short pieces
        are fitted as they are (their representation error is a fraction of
        the piece size).
        """
        piece_floor = max(
            self.size_floor, math.hypot(w_hi.real - self.base, w_hi.imag) / 16.0
        )
        stack = [complex(w_hi)]
        while stack:
            if len(stack) > self.max_depth:
                raise HullNotIncreasingError(
                    idx,
                    f"hulls not strictly increasing near sample {idx}: mapped "
                    f"increment keeps height {stack[-1].imag:.3e} against base "
                    f"jump {stack[-1].real - self.base:.3e}",
                )
            w = stack[-1]
            dx = w.real - self.base
            dy = w.imag
            size = math.hypot(dx, dy)
            if size <= piece_floor or (dy > self.im_floor and abs(dx) <= self.kappa * dy):
                stack.pop()
                if dy <= self.im_floor:
                    if abs(dx) <= self.im_floor:
                        continue  # duplicate sample, nothing to map out
                    self._charge_flat(dx, idx)
                self._append_atom(w.real, max(dy, self.im_floor))
                b, d = self.bases[-1], self.dts[-1]
                for j in range(len(stack)):
                    stack[j] = self._apply_atom(stack[j], b, d)
            else:
                stack.append(0.5 * (complex(self.base, 0.0) + w))

    def _drill(self, z_lo: complex, z_hi: complex, w_hi: complex, depth: int, idx: int) -> None:
        """Resolve a suspicious increment by subdividing the input curve.

        Flat or extremely wide mapped increments are either genuine features
        at sample scale (a touch straddle, a sharp corner) or evidence that
        the curve re-enters its hull.  Interpolating the original curve
        keeps drilling towards the true geometry: features shrink to the
        size floor and get fitted, re-entries keep a flat base jump alive
        until the budget or the depth cap trips.
        """
        dx = w_hi.real - self.base
        dy = w_hi.imag
        size = math.hypot(dx, dy)
        if dy <= self.im_floor and abs(dx) <= self.size_floor:
            if abs(dx) > self.im_floor:
                self._charge_flat(dx, idx)
                self._append_atom(w_hi.real, self.im_floor)
            return
        if dy > self.im_floor and abs(dx) <= _CHORD_RATIO_LIMIT * dy:
            self._weld(w_hi, idx)
            return
        if size <= self.size_floor:
            self._charge_flat(dx, idx)
            self._append_atom(w_hi.real, max(dy, self.im_floor))
            return
        if depth >= self.max_depth:
            raise HullNotIncreasingError(
                idx,
                f"hulls not strictly increasing near sample {idx}: mapped "
                f"increment keeps height {dy:.3e} against base jump {dx:.3e}",
            )
        z_mid = 0.5 * (z_lo + z_hi)
        w_mid = _resolved_push(self.bases, self.dts, z_mid, complex(self.base, 0.0), self.scale)
        self._drill(z_lo, z_mid, w_mid, depth + 1, idx)
        w_hi = _resolved_push(self.bases, self.dts, z_hi, complex(self.base, 0.0), self.scale)
        self._drill(z_mid, z_hi, w_hi, depth + 1, idx)

    def run(self) -> UnzipResult:
        n = len(self.pts)
        sample_times = np.zeros(n, dtype=np.float64)
        sample_atoms = np.zeros(n, dtype=np.int64)
        if self.snapshots is not None:
            self.snapshots.append((self.base, self.images[1 : 1 + self.tail_window].copy()))
        for i in range(1, n):
            w_hi = self.images[i]
            if np.isnan(w_hi):
                w_hi = _resolved_push(
                    self.bases, self.dts, complex(self.pts[i]), complex(self.base, 0.0), self.scale
                )
            n_before = len(self.bases)
            self.flat_used = 0.0
            self._consume(complex(self.pts[i - 1]), complex(self.pts[i]), complex(w_hi), i)
            if len(self.bases) > n_before and i + 1 < n:
                for k in range(n_before, len(self.bases)):
                    forward_atom_inplace(self.images, i + 1, self.bases[k], self.dts[k])
            sample_times[i] = self.tau
            sample_atoms[i] = len(self.bases)
            if self.snapshots is not None:
                self.snapshots.append(
                    (self.base, self.images[i + 1 : i + 1 + self.tail_window].copy())
                )
        driver = DrivingFunction(np.asarray(self.taus), np.asarray(self.vals))
        chain = HullChain.from_arrays(np.asarray(self.bases), np.asarray(self.dts))
        return UnzipResult(
            driver=driver,
            chain=chain,
            sample_times=sample_times,
            sample_atoms=sample_atoms,
            scale=self.scale,
            tail_snapshots=self.snapshots,
        )


def unzip_trace(
    gamma: SampledPath,
    kappa: float = 0.5,
    max_depth: int = 48,
    size_floor: float | None = None,
    im_floor: float | None = None,
    tail_window: int = 0,
    flat_budget: float | None = None,
) -> UnzipResult:
    """Recover the chain, driver and capacity clock of a trace candidate.

    ``kappa`` bounds |Re w - base| / Im w for accepted mapped increments;
    wider increments are subdivided by interpolation in the mapped plane,
    down to ``size_floor``.  ``tail_window`` > 0 additionally records, at
    every sample, the images of the next ``tail_window`` samples under the
    chain built so far (used by the local-growth checker).
    """
    return _Unzipper(
        gamma, kappa, max_depth, size_floor, im_floor, tail_window, flat_budget
    ).run()


def trace_to_driver(gamma: SampledPath, **kwargs) -> tuple[DrivingFunction, HullChain]:
    """Driving function and discretised chain of a trace candidate."""
    res = unzip_trace(gamma, **kwargs)
    return res.driver, res.chain


def reparametrize_by_hcap(gamma: SampledPath, unzip: UnzipResult | None = None) -> SampledPath:
    """Re-time a trace candidate so that its clock is the capacity clock."""
    res = unzip_trace(gamma) if unzip is None else unzip
    times = res.sample_times.copy()
    for i in range(1, times.size):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    return SampledPath(times, gamma.points, CAPACITY)


def _knot_index(gamma: SampledPath, t: float) -> int:
    i = int(np.searchsorted(gamma.times, t))
    tol = 1e-9 * max(1.0, abs(gamma.t1))
    for j in (i - 1, i, i + 1):
        if 0 <= j < len(gamma) and abs(gamma.times[j] - t) <= tol:
            return j
    raise ValueError(f"t={t} is not a sample knot of the path")


def map_out_initial(
    gamma: SampledPath,
    t: float,
    side_hint: str = "auto",
    recentre: bool = False,
    unzip: UnzipResult | None = None,
) -> SampledPath:
    """Map the tail of a trace out of its initial hull.

    Returns the path ``g_t(gamma(s))`` for sample knots ``s >= t``; sample
    points absorbed by the initial hull are resolved to a boundary point by
    side tracking (``side_hint`` in left/right/auto; auto keeps continuity
    with the previous output sample).  With ``recentre`` the image of the
    tip is moved to 0 by subtracting the driver value at ``t``.
    """
    if side_hint not in ("auto", "left", "right"):
        raise ValueError(f"unknown side hint {side_hint!r}")
    if gamma.parametrisation != CAPACITY:
        raise ValueError("map_out_initial requires a capacity-parametrised path")
    res = unzip_trace(gamma) if unzip is None else unzip
    i = _knot_index(gamma, t)
    n_atoms = int(res.sample_atoms[i])
    xi_t = res.driver_value_at_atom(n_atoms)
    tail = gamma.points[i:]
    w, swallowed_at = chain_forward_masked(res.chain, tail, n_atoms=n_atoms)
    if np.any(swallowed_at >= 0):
        bases = [a.base for a in res.chain.atoms[:n_atoms]]
        dts = [a.dt for a in res.chain.atoms[:n_atoms]]
        sides = {"auto": (1, -1), "right": (1,), "left": (-1,)}[side_hint]
        prev = complex(xi_t, 0.0)
        for j in range(w.size):
            if swallowed_at[j] >= 0:
                try:
                    w[j] = _resolved_push(bases, dts, complex(tail[j]), prev, res.scale, sides)
                except SwallowedPointError as exc:
                    raise SwallowedPointError(
                        i + j,
                        complex(tail[j]),
                        f"sample {i + j} has no resolvable image under the initial hull",
                    ) from exc
            prev = complex(w[j])
    if recentre:
        w = w - xi_t
    return SampledPath(gamma.times[i:], w, CAPACITY)
