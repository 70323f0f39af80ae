"""JSON and CSV encodings for paths, drivers and hull chains.

JSON carries the full metadata (parametrisation / interpolation tags and the
number format); CSV keeps only the sample columns and loads with default
tags.  Floats are written with full 64-bit precision so encode/decode is the
identity bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

import numpy as np

from .core import ARBITRARY, LINEAR, DrivingFunction, HullChain, SampledPath, SlitAtom

NUMBER_FORMAT = "float64"


def _check_format(obj: dict) -> None:
    fmt = obj.get("number_format", NUMBER_FORMAT)
    if fmt != NUMBER_FORMAT:
        raise ValueError(f"unsupported number format {fmt!r}")


def path_to_dict(p: SampledPath) -> dict[str, Any]:
    return {
        "times": p.times.tolist(),
        "re": p.points.real.tolist(),
        "im": p.points.imag.tolist(),
        "parametrisation": p.parametrisation,
        "number_format": NUMBER_FORMAT,
    }


def path_from_dict(obj: dict[str, Any]) -> SampledPath:
    _check_format(obj)
    pts = np.asarray(obj["re"], dtype=np.float64) + 1j * np.asarray(obj["im"], dtype=np.float64)
    return SampledPath(obj["times"], pts, obj.get("parametrisation", ARBITRARY))


def driver_to_dict(d: DrivingFunction) -> dict[str, Any]:
    return {
        "times": d.times.tolist(),
        "values": d.values.tolist(),
        "interpolation": d.interpolation,
        "number_format": NUMBER_FORMAT,
    }


def driver_from_dict(obj: dict[str, Any]) -> DrivingFunction:
    _check_format(obj)
    return DrivingFunction(obj["times"], obj["values"], obj.get("interpolation", LINEAR))


def chain_to_dict(c: HullChain) -> dict[str, Any]:
    return {
        "t0": c.t0,
        "atoms": [{"base": a.base, "dt": a.dt} for a in c.atoms],
        "number_format": NUMBER_FORMAT,
    }


def chain_from_dict(obj: dict[str, Any]) -> HullChain:
    _check_format(obj)
    atoms = tuple(SlitAtom(a["base"], a["dt"]) for a in obj["atoms"])
    return HullChain(atoms, float(obj.get("t0", 0.0)))


_TO_DICT = {SampledPath: path_to_dict, DrivingFunction: driver_to_dict, HullChain: chain_to_dict}


def dumps(obj: SampledPath | DrivingFunction | HullChain) -> str:
    return json.dumps(_TO_DICT[type(obj)](obj))


def save_json(obj: SampledPath | DrivingFunction | HullChain, path: str | Path) -> None:
    Path(path).write_text(dumps(obj))


def load_path(path: str | Path) -> SampledPath:
    return path_from_dict(json.loads(Path(path).read_text()))


def load_driver(path: str | Path) -> DrivingFunction:
    return driver_from_dict(json.loads(Path(path).read_text()))


def load_chain(path: str | Path) -> HullChain:
    return chain_from_dict(json.loads(Path(path).read_text()))


def path_to_csv(p: SampledPath) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t", "re", "im"])
    for t, z in zip(p.times, p.points):
        writer.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])
    return buf.getvalue()


def path_from_csv(text: str) -> SampledPath:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["t", "re", "im"]:
        raise ValueError("expected a CSV with header row 't,re,im'")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=np.float64)
    return SampledPath(data[:, 0], data[:, 1] + 1j * data[:, 2], ARBITRARY)


def driver_to_csv(d: DrivingFunction) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t", "xi"])
    for t, v in zip(d.times, d.values):
        writer.writerow([repr(float(t)), repr(float(v))])
    return buf.getvalue()


def driver_from_csv(text: str) -> DrivingFunction:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["t", "xi"]:
        raise ValueError("expected a CSV with header row 't,xi'")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=np.float64)
    return DrivingFunction(data[:, 0], data[:, 1], LINEAR)
