"""Numerical toolkit for chordal Loewner evolution in the upper half-plane."""

from .core import (
    ARBITRARY,
    CAPACITY,
    ConvergenceReport,
    DrivingFunction,
    ExtrapolationError,
    HPoint,
    HullChain,
    HullNotIncreasingError,
    SampledPath,
    SlitAtom,
    SwallowedPointError,
    driver_distance,
    modulus_of_continuity,
    reparametrize_linear,
    sup_distance,
)
from .conformal import (
    EmptyRegion,
    HalfDiskRegion,
    McEstimate,
    PolylineRegion,
    SlitRegion,
    UnionRegion,
    chain_forward,
    chain_inverse,
    chain_region,
    hcap_additivity_check,
    hcap_mc,
    hcap_series,
    hcap_superadditivity_check,
    hull_arcs,
    slit_forward,
    slit_inverse,
)
from .forward import build_chain, drive_to_trace, glue_traces
from .inverse import (
    UnzipResult,
    map_out_initial,
    reparametrize_by_hcap,
    trace_to_driver,
    unzip_trace,
)

__version__ = "0.1.0"
