"""Forward Loewner evolution: drive a trace from a driving function.

The chain is built with one vertical slit atom per capacity step, with the
driver value at the step's right endpoint as the atom base, so the
recovered driver of the discrete hull interpolates the input driver at its
knots.  The trace point at each step is the pulled-back tip limit,
approximated at a small positive height above the driver with one
Richardson step in height squared (the inverse map is locally quadratic
around the tip).
"""

from __future__ import annotations

import math

import numpy as np

from ._kernels import inverse_atom_inplace
from .conformal import chain_inverse
from .core import (
    CAPACITY,
    DrivingFunction,
    HullChain,
    SampledPath,
    SlitAtom,
)
from .inverse import unzip_trace


def _adaptive_edges(xi: DrivingFunction, n_steps: int) -> np.ndarray:
    """Step edges equidistributing dt + (local driver increment)^2 / 4."""
    fine = np.linspace(0.0, xi.t1, 4 * n_steps + 1)
    vals = xi.evaluate(fine)
    weight = np.diff(fine) + 0.25 * np.diff(vals) ** 2
    cum = np.concatenate(([0.0], np.cumsum(weight)))
    targets = np.linspace(0.0, cum[-1], n_steps + 1)
    edges = np.interp(targets, cum, fine)
    edges[0], edges[-1] = 0.0, xi.t1
    return np.unique(edges)


def drive_to_trace(
    xi: DrivingFunction,
    n_steps: int,
    tip_floor: float | None = None,
    adaptive: bool = False,
) -> SampledPath:
    """Evolve a driving function into its capacity-parametrised trace.

    Uses ``n_steps`` uniform capacity steps on the driver's range (or
    increment-adaptive steps with ``adaptive``).  ``tip_floor`` is the
    height above the driver at which the tip limit is evaluated before
    extrapolation; it defaults to half the square root of the step size.
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    T = xi.t1
    if T <= 0:
        raise ValueError("driver must span positive capacity time")
    edges = _adaptive_edges(xi, n_steps) if adaptive else np.linspace(0.0, T, n_steps + 1)
    dts = np.diff(edges)
    if tip_floor is None:
        tip_floor = 0.5 * math.sqrt(float(dts.min()))
    if tip_floor <= 0:
        raise ValueError("tip_floor must be positive")
    bases = xi.evaluate(edges[1:])
    n = dts.size
    # Interleave the two evaluation heights so each atom update is one slice.
    p = np.empty(2 * n, dtype=np.complex128)
    p[0::2] = bases + 1j * tip_floor
    p[1::2] = bases + 0.5j * tip_floor
    for j in range(n - 1, -1, -1):
        inverse_atom_inplace(p, 2 * j, float(bases[j]), float(dts[j]))
    tips = (4.0 * p[1::2] - p[0::2]) / 3.0
    points = np.concatenate(([complex(xi.evaluate(0.0), 0.0)], tips))
    return SampledPath(edges, points, CAPACITY)


def build_chain(xi: DrivingFunction, n_steps: int, adaptive: bool = False) -> HullChain:
    """The discretised chain of a driver without evaluating the trace."""
    edges = _adaptive_edges(xi, n_steps) if adaptive else np.linspace(0.0, xi.t1, n_steps + 1)
    dts = np.diff(edges)
    bases = xi.evaluate(edges[1:])
    return HullChain(tuple(SlitAtom(float(b), float(d)) for b, d in zip(bases, dts)))


def glue_traces(
    gamma1: SampledPath,
    gamma2: SampledPath,
    xi1_end: float,
) -> SampledPath:
    """Concatenate a trace with a follow-on trace grown in the mapped domain.

    ``gamma2`` is a capacity-parametrised trace starting on the real axis
    whose clock continues gamma1's; it is recentred to the final driver
    value ``xi1_end`` and pulled back through gamma1's chain, so the result
    continues from the tip of ``gamma1`` and its driver is the
    concatenation of the two drivers.
    """
    if gamma1.parametrisation != CAPACITY or gamma2.parametrisation != CAPACITY:
        raise ValueError("gluing requires capacity-parametrised traces")
    scale = max(gamma1.diameter(), gamma2.diameter(), 1.0)
    if abs(gamma2.t0 - gamma1.t1) > 1e-9 * max(1.0, abs(gamma1.t1)):
        raise ValueError("gamma2 must start at the end time of gamma1")
    if abs(gamma2.points[0].imag) > 1e-9 * scale:
        raise ValueError("gamma2 does not start on the real axis after recentring")
    res = unzip_trace(gamma1)
    shifted = gamma2.points - gamma2.points[0] + xi1_end
    pulled = chain_inverse(res.chain, shifted)
    times = np.concatenate((gamma1.times, gamma2.times[1:]))
    points = np.concatenate((gamma1.points, pulled[1:]))
    return SampledPath(times, points, CAPACITY)
