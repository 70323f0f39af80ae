"""Compiled inner loops for the atom-by-atom map compositions.

These loops are inherently sequential in the atom index, so vectorised
numpy spends its time on per-call overhead; the jitted versions run the
whole sweep in one call.  Swallowed points are marked NaN in place.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def forward_atom_inplace(images: np.ndarray, start: int, b: float, d: float) -> int:
    """Apply one forward slit atom to images[start:]; returns swallow count."""
    h = 2.0 * np.sqrt(d)
    width = 1e-12 * h
    h_eff = h * (1.0 - 1e-9)
    swallowed = 0
    for k in range(start, images.shape[0]):
        w = images[k]
        ur = w.real - b
        ui = w.imag
        if ur != ur:  # already NaN
            continue
        if (ur if ur >= 0 else -ur) <= width and ui < h_eff:
            images[k] = complex(np.nan, np.nan)
            swallowed += 1
            continue
        s = np.sqrt(complex(ur * ur - ui * ui + 4.0 * d, 2.0 * ur * ui))
        images[k] = b - s if ur < 0 else b + s
    return swallowed


@njit(cache=True)
def inverse_atom_inplace(points: np.ndarray, start: int, b: float, d: float) -> None:
    """Apply one inverse slit atom to points[start:] in place."""
    for k in range(start, points.shape[0]):
        w = points[k]
        vr = w.real - b
        vi = w.imag
        s = np.sqrt(complex(vr * vr - vi * vi - 4.0 * d, 2.0 * vr * vi))
        z = -s if vr < 0 else s
        if z.imag < 0:
            # Boundary inputs on the removed interval map onto the slit.
            if (z.real if z.real >= 0 else -z.real) <= 1e-9 * (-z.imag):
                z = -z
            else:
                z = complex(z.real, 0.0)
        points[k] = b + z


@njit(cache=True)
def push_chain(bases: np.ndarray, dts: np.ndarray, zr: float, zi: float) -> complex:
    """Push one point through the whole chain; NaN if swallowed."""
    w = complex(zr, zi)
    for k in range(bases.shape[0]):
        b = bases[k]
        d = dts[k]
        h = 2.0 * np.sqrt(d)
        ur = w.real - b
        ui = w.imag
        if (ur if ur >= 0 else -ur) <= 1e-12 * h and ui < h * (1.0 - 1e-9):
            return complex(np.nan, np.nan)
        s = np.sqrt(complex(ur * ur - ui * ui + 4.0 * d, 2.0 * ur * ui))
        w = b - s if ur < 0 else b + s
    return w
