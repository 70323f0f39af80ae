"""Elementary slit maps, chain composition and half-plane capacity.

The discretisation atom is the vertical slit map

    g(z) = base + sqrt((z - base)^2 + 4 dt),

the unique hydrodynamically normalised map removing the segment from
``base`` to ``base + 2i sqrt(dt)``; its half-plane capacity is exactly
``2 dt``.  Chains compose these atoms in order.  Capacity is computed two
independent ways: from the Laurent behaviour of the composed map at infinity
(`hcap_series`) and from absorbed Brownian motion (`hcap_mc`).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    ExtrapolationError,
    HullChain,
    SlitAtom,
    SwallowedPointError,
)

# Band (relative to slit height) below the tip inside which a point counts
# as lying on the slit; boundary membership is not decidable in floats.
_ON_SLIT_BAND = 1e-9
_ON_SLIT_WIDTH = 1e-12


def _coerce_z(z) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=np.complex128)
    scalar = arr.ndim == 0
    return np.atleast_1d(arr), scalar


def _swallow_mask(u: np.ndarray, height: float) -> np.ndarray:
    width = _ON_SLIT_WIDTH * height + 1e-15 * np.abs(u)
    return (np.abs(u.real) <= width) & (u.imag < height * (1.0 - _ON_SLIT_BAND))


def _slit_map(u: np.ndarray, dt: float) -> np.ndarray:
    """Forward slit map in coordinates relative to the base."""
    w = np.sqrt(u * u + 4.0 * dt)
    np.negative(w, out=w, where=u.real < 0)
    return w


def _slit_inv(v: np.ndarray, dt: float) -> np.ndarray:
    """Inverse slit map in coordinates relative to the base."""
    z = np.sqrt(v * v - 4.0 * dt)
    np.negative(z, out=z, where=v.real < 0)
    # Points of the removed real interval map onto the slit itself; keep the
    # branch with im >= 0 there (both signs are prime ends of the same slit).
    bad = z.imag < 0
    if np.any(bad):
        fix = bad & (np.abs(z.real) <= 1e-9 * np.abs(z.imag))
        np.negative(z, out=z, where=fix)
        rest = bad & ~fix
        if np.any(rest):
            z[rest] = z[rest].real + 0j
    return z


def slit_forward(atom: SlitAtom, z) -> complex | np.ndarray:
    """Map a point out of the slit; branch keeps the image in the half-plane.

    The slit tip ``base + 2i sqrt(dt)`` maps to ``base``.  Points strictly
    inside the slit have no image and raise :class:`SwallowedPointError`.
    """
    u, scalar = _coerce_z(z)
    u = u - atom.base
    inside = _swallow_mask(u, atom.height)
    if np.any(inside):
        idx = int(np.argmax(inside))
        raise SwallowedPointError(0, complex(np.atleast_1d(z)[idx]) if not scalar else complex(z))
    w = _slit_map(u, atom.dt) + atom.base
    return complex(w[0]) if scalar else w


def slit_inverse(atom: SlitAtom, w) -> complex | np.ndarray:
    """Inverse of :func:`slit_forward`; maps ``base`` to the slit tip."""
    v, scalar = _coerce_z(w)
    if np.any(v.imag < -1e-9 * (1.0 + np.abs(v))):
        raise ValueError("slit_inverse requires points with im >= 0")
    v = (v.real + 1j * np.clip(v.imag, 0.0, None)) - atom.base
    z = _slit_inv(v, atom.dt) + atom.base
    return complex(z[0]) if scalar else z


def chain_forward(chain: HullChain, z, n_atoms: int | None = None) -> complex | np.ndarray:
    """Compose the forward atom maps in order over the first ``n_atoms``."""
    u, scalar = _coerce_z(z)
    w = u.copy()
    n = len(chain) if n_atoms is None else n_atoms
    for k in range(n):
        atom = chain.atoms[k]
        rel = w - atom.base
        inside = _swallow_mask(rel, atom.height)
        if np.any(inside):
            idx = int(np.argmax(inside))
            raise SwallowedPointError(k, complex(u[idx]))
        w = _slit_map(rel, atom.dt) + atom.base
    return complex(w[0]) if scalar else w


def chain_forward_masked(
    chain: HullChain, z: np.ndarray, n_atoms: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Forward composition that records swallowed points instead of raising.

    Returns ``(w, swallowed_at)`` where ``swallowed_at[i]`` is the index of
    the first atom whose slit contains point ``i`` (-1 if none); swallowed
    entries of ``w`` are NaN.
    """
    w = np.asarray(z, dtype=np.complex128).copy()
    swallowed_at = np.full(w.shape, -1, dtype=np.int64)
    n = len(chain) if n_atoms is None else n_atoms
    ok = np.ones(w.shape, dtype=bool)
    for k in range(n):
        atom = chain.atoms[k]
        rel = w[ok] - atom.base
        inside = _swallow_mask(rel, atom.height)
        if np.any(inside):
            hit = np.flatnonzero(ok)[inside]
            swallowed_at[hit] = k
            w[hit] = np.nan
            ok[hit] = False
            rel = rel[~inside]
        idx = np.flatnonzero(ok)
        w[idx] = _slit_map(rel, atom.dt) + atom.base
    return w, swallowed_at


def chain_inverse(chain: HullChain, w, n_atoms: int | None = None) -> complex | np.ndarray:
    """Compose the inverse atom maps in reverse order; defined on all of H."""
    v, scalar = _coerce_z(w)
    z = v.real + 1j * np.clip(v.imag, 0.0, None)
    n = len(chain) if n_atoms is None else n_atoms
    for k in range(n - 1, -1, -1):
        atom = chain.atoms[k]
        z = _slit_inv(z - atom.base, atom.dt) + atom.base
    return complex(z[0]) if scalar else z


def chain_displacement(chain: HullChain, z, n_atoms: int | None = None) -> complex | np.ndarray:
    """g(z) - z for the composed chain, accumulated without cancellation.

    Each atom contributes sqrt(u^2 + 4 dt) - u, evaluated through its
    conjugate form 4 dt / (sqrt(u^2 + 4 dt) + u), so the displacement stays
    accurate far above the hull where g(z) - z is tiny against z.
    """
    u, scalar = _coerce_z(z)
    w = u.copy()
    disp = np.zeros_like(w)
    n = len(chain) if n_atoms is None else n_atoms
    for k in range(n):
        atom = chain.atoms[k]
        rel = w - atom.base
        inside = _swallow_mask(rel, atom.height)
        if np.any(inside):
            idx = int(np.argmax(inside))
            raise SwallowedPointError(k, complex(u[idx]))
        s = np.sqrt(rel * rel + 4.0 * atom.dt)
        neg = rel.real < 0
        delta = np.where(
            neg,
            -4.0 * atom.dt / np.where(neg, s - rel, 1.0),
            4.0 * atom.dt / np.where(neg, 1.0, s + rel),
        )
        disp += delta
        w += delta
    return complex(disp[0]) if scalar else disp


def hull_diameter(chain: HullChain) -> float:
    """Cheap upper estimate of the diameter of the chain's hull."""
    if not len(chain):
        return 0.0
    heights = 2.0 * np.sqrt(chain.dts)
    span = float((chain.bases + heights).max() - (chain.bases - heights).min())
    top = 2.0 * math.sqrt(float(np.sum(chain.dts)))
    return max(span, top)


def hull_arcs(chain: HullChain, per_atom: int = 96) -> list[np.ndarray]:
    """The hull skeleton: each atom's slit pulled back through its prefix."""
    arcs = []
    s = np.linspace(0.0, 1.0, per_atom)
    for k, atom in enumerate(chain.atoms):
        seg = atom.base + 1j * atom.height * s
        arcs.append(chain_inverse(chain, seg, n_atoms=k))
    return arcs


def hcap_series(chain: HullChain) -> float:
    """Half-plane capacity from the map's behaviour at infinity.

    Evaluates y (y - Im g(iy)) on a geometric ladder of heights and
    extrapolates in 1/y^2 (quadratic fit: the expansion of z(g(z) - z)
    along the imaginary axis contains only even powers of 1/y).
    """
    if not len(chain):
        return 0.0
    scale = max(hull_diameter(chain), 1e-9)
    ys = scale * 2.0 ** np.arange(6, 13)
    disp = chain_displacement(chain, 1j * ys)
    vals = -ys * disp.imag
    x = (scale / ys) ** 2
    design = np.vander(x, 3, increasing=True)
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    resid = float(np.max(np.abs(design @ coef - vals)))
    hcap = float(coef[0])
    if not math.isfinite(hcap) or resid > 1e-7 * max(1.0, abs(hcap)):
        raise ExtrapolationError(
            f"capacity ladder did not converge: residual {resid:.3e} for hcap {hcap:.6e}"
        )
    return hcap


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo half-plane capacity estimate."""

    mean: float
    stderr: float
    samples: int
    launch_height: float
    low_launch_warning: bool = False


@dataclass(frozen=True)
class SlitRegion:
    """Vertical segment from ``base`` to ``base + i height``."""

    base: float
    height: float

    def distance(self, z: np.ndarray) -> np.ndarray:
        dx = np.abs(z.real - self.base)
        dy = np.clip(z.imag - self.height, 0.0, None)
        return np.hypot(dx, dy)

    @property
    def bbox(self) -> tuple[float, float, float]:
        return (self.base, self.base, self.height)


@dataclass(frozen=True)
class HalfDiskRegion:
    """Closed half-disk of given radius centred on the real axis."""

    centre: float
    radius: float

    def distance(self, z: np.ndarray) -> np.ndarray:
        return np.clip(np.abs(z - self.centre) - self.radius, 0.0, None)

    @property
    def bbox(self) -> tuple[float, float, float]:
        return (self.centre - self.radius, self.centre + self.radius, self.radius)


class PolylineRegion:
    """Compact set given by dense sample points along curves.

    The distance is the nearest-sample distance reduced by half the largest
    sample gap, so it never overestimates the distance to the underlying
    curve (walk-on-spheres stays unbiased).
    """

    def __init__(self, arcs: Sequence[np.ndarray]):
        pts = np.concatenate([np.asarray(a, dtype=np.complex128) for a in arcs])
        if pts.size == 0:
            raise ValueError("polyline region needs at least one point")
        gap = 0.0
        for a in arcs:
            if len(a) > 1:
                gap = max(gap, float(np.max(np.abs(np.diff(a)))))
        self._slack = 0.5 * gap
        self._tree = cKDTree(np.column_stack((pts.real, pts.imag)))
        self._bbox = (
            float(pts.real.min()),
            float(pts.real.max()),
            float(pts.imag.max()),
        )

    def distance(self, z: np.ndarray) -> np.ndarray:
        d, _ = self._tree.query(np.column_stack((z.real, z.imag)))
        return np.clip(d - self._slack, 0.0, None)

    @property
    def bbox(self) -> tuple[float, float, float]:
        return self._bbox


class EmptyRegion:
    """The empty set; Brownian paths are only absorbed on the real axis."""

    def distance(self, z: np.ndarray) -> np.ndarray:
        return np.full(z.shape, np.inf)

    @property
    def bbox(self) -> tuple[float, float, float]:
        return (0.0, 0.0, 0.0)


class UnionRegion:
    """Union of component regions; distance is the pointwise minimum."""

    def __init__(self, regions: Sequence):
        if not regions:
            raise ValueError("union of no regions")
        self.regions = tuple(regions)

    def distance(self, z: np.ndarray) -> np.ndarray:
        d = self.regions[0].distance(z)
        for r in self.regions[1:]:
            np.minimum(d, r.distance(z), out=d)
        return d

    @property
    def bbox(self) -> tuple[float, float, float]:
        boxes = [r.bbox for r in self.regions]
        return (
            min(b[0] for b in boxes),
            max(b[1] for b in boxes),
            max(b[2] for b in boxes),
        )


def region_diameter(region) -> float:
    xmin, xmax, ymax = region.bbox
    return math.hypot(xmax - xmin, ymax)


def chain_region(chain: HullChain, per_atom: int = 96) -> PolylineRegion:
    """Region occupied by the hull of a chain (its pulled-back slit arcs)."""
    return PolylineRegion(hull_arcs(chain, per_atom))


def _walk_chunk(
    region, n: int, launch: float, eps: float, rng: np.random.Generator,
    max_iter: int = 100_000,
) -> tuple[int, float, float, bool]:
    """Walk-on-spheres from i*launch; returns Welford (count, mean, M2, clean).

    Each step jumps uniformly on the largest circle inside H minus the
    region, which samples the exact harmonic measure of the disc; walkers
    are absorbed within ``eps`` of the boundary.
    """
    z = np.full(n, 1j * launch, dtype=np.complex128)
    values = np.empty(n, dtype=np.float64)
    alive = np.arange(n)
    clean = True
    for _ in range(max_iter):
        if not alive.size:
            break
        zi = z[alive]
        d = np.minimum(zi.imag, region.distance(zi))
        hit = d < eps
        if np.any(hit):
            values[alive[hit]] = launch * zi.imag[hit]
            alive = alive[~hit]
            zi = zi[~hit]
            d = d[~hit]
        if alive.size:
            theta = rng.uniform(0.0, 2.0 * np.pi, alive.size)
            step = zi + d * np.exp(1j * theta)
            z[alive] = step.real + 1j * np.clip(step.imag, 0.0, None)
    if alive.size:
        values[alive] = launch * z[alive].imag
        clean = False
    mean = float(values.mean())
    m2 = float(np.sum((values - mean) ** 2))
    return n, mean, m2, clean


def _combine_welford(
    a: tuple[int, float, float], b: tuple[int, float, float]
) -> tuple[int, float, float]:
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    delta = mb - ma
    mean = ma + delta * nb / n
    m2 = sa + sb + delta * delta * na * nb / n
    return n, mean, m2


def hcap_mc(
    region,
    samples: int,
    launch_height: float | None = None,
    rng: np.random.Generator | None = None,
    chunk_size: int = 65536,
    workers: int | None = None,
) -> McEstimate:
    """Half-plane capacity of a compact set by absorbed Brownian motion.

    Runs walk-on-spheres paths from ``i * launch_height`` until absorption
    on the set or on the real axis and returns ``launch_height`` times the
    mean absorbed height, with its standard error.  Chunks use independent
    spawned RNG streams and are merged with a numerically stable
    mean/variance combination, so results are reproducible for a given seed
    regardless of worker count.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    diam = max(region_diameter(region), 1e-12)
    if launch_height is None:
        launch_height = 100.0 * max(diam, 1e-6)
    low_launch = launch_height < 10.0 * diam
    eps = 1e-6 * max(diam, launch_height / 100.0)
    rng = np.random.default_rng() if rng is None else rng
    sizes = [chunk_size] * (samples // chunk_size)
    if samples % chunk_size:
        sizes.append(samples % chunk_size)
    streams = rng.spawn(len(sizes))

    def job(args):
        size, stream = args
        return _walk_chunk(region, size, launch_height, eps, stream)

    if workers is not None and workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, zip(sizes, streams)))
    else:
        results = [job(a) for a in zip(sizes, streams)]

    acc = (0, 0.0, 0.0)
    clean = True
    for n, mean, m2, ok in results:
        acc = _combine_welford(acc, (n, mean, m2))
        clean = clean and ok
    count, mean, m2 = acc
    stderr = math.sqrt(m2 / (count - 1) / count)
    return McEstimate(
        mean=mean,
        stderr=stderr,
        samples=count,
        launch_height=float(launch_height),
        low_launch_warning=low_launch or not clean,
    )


def hcap_additivity_check(a_chain: HullChain, b_extension: HullChain) -> float:
    """Residual of hcap(A then B) - hcap(A) - hcap(B extension); ~0 always."""
    joint = a_chain.extended(b_extension.atoms)
    return hcap_series(joint) - hcap_series(a_chain) - hcap_series(b_extension)


@dataclass(frozen=True)
class SuperadditivityResult:
    """Slack of the capacity superadditivity estimate for nested hulls."""

    slack: float
    stderr: float
    union_capacity: float
    parts_capacity: float
    estimate: McEstimate | None = None


def _is_prefix(shorter: HullChain, longer: HullChain) -> bool:
    n = len(shorter)
    if n > len(longer):
        return False
    return shorter.atoms == longer.atoms[:n]


def hcap_superadditivity_check(
    nested: Sequence[HullChain],
    samples: int = 200_000,
    rng: np.random.Generator | None = None,
    launch_height: float | None = None,
    per_atom: int = 96,
    workers: int | None = None,
) -> SuperadditivityResult:
    """Check hcap(A1 u (A3\\A2) u (A5\\A4) u ...) >= sum of part capacities.

    The nested hulls must be successive prefix-extensions of one chain.  The
    union is not a chain, so its capacity is estimated by Monte Carlo; the
    part capacities are exact from the capacity clock.  The returned slack
    should be >= -3 stderr.
    """
    if any(not _is_prefix(nested[i], nested[i + 1]) for i in range(len(nested) - 1)):
        raise ValueError("hulls must be nested prefix-extensions of one chain")
    if len(nested) == 1:
        cap = hcap_series(nested[0])
        return SuperadditivityResult(0.0, 0.0, cap, cap)
    if len(nested) == 2:
        raise ValueError("need one hull or at least 3 nested hulls")
    full = nested[-1]
    counts = [len(c) for c in nested]
    cum = np.concatenate(([0.0], np.cumsum(full.dts)))
    parts = 2.0 * cum[counts[0]]
    keep = list(range(counts[0]))
    k = 1
    while k + 1 < len(nested):
        parts += 2.0 * (cum[counts[k + 1]] - cum[counts[k]])
        keep.extend(range(counts[k], counts[k + 1]))
        k += 2
    arcs = hull_arcs(full, per_atom)
    region = PolylineRegion([arcs[i] for i in keep])
    est = hcap_mc(region, samples, launch_height, rng, workers=workers)
    return SuperadditivityResult(
        slack=est.mean - parts,
        stderr=est.stderr,
        union_capacity=est.mean,
        parts_capacity=parts,
        estimate=est,
    )
