"""File formats: currents, particle measures, grid measures, families, reports."""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .continuity import GridMeasure, ParticleMeasure
from .currents import DiscreteCurrent, PolyhedralCurrent
from .transport import SolutionFamily

__all__ = [
    "dump_json",
    "load_json",
    "load_current",
    "save_current",
    "save_grid_measure",
    "load_grid_measure",
    "save_particles",
    "load_particles",
    "save_family",
    "load_family",
    "write_csv",
]


def dump_json(obj, path=None) -> str:
    """Deterministic JSON text (sorted keys, fixed float repr); written if ``path`` is given."""
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_json(path):
    return json.loads(Path(path).read_text())


def load_current(data):
    """Polyhedral (``simplices``) or atomic (``atoms``) current from a dict or path."""
    if not isinstance(data, dict):
        data = load_json(data)
    if "simplices" in data:
        return PolyhedralCurrent.from_dict(data)
    if "atoms" in data:
        return DiscreteCurrent.from_dict(data)
    raise ValueError("current JSON needs 'simplices' or 'atoms'")


def save_current(T, path):
    dump_json(T.to_dict(), path)


def save_particles(mu: ParticleMeasure, path):
    dump_json(mu.to_dict(), path)


def load_particles(path) -> ParticleMeasure:
    return ParticleMeasure.from_dict(load_json(path))


def save_grid_measure(nu: GridMeasure, path):
    """Row-major float64 payload at ``path`` plus ``path.json`` header."""
    path = Path(path)
    np.ascontiguousarray(nu.density, dtype="<f8").tofile(path)
    dump_json(nu.header(), str(path) + ".json")


def load_grid_measure(path) -> GridMeasure:
    path = Path(path)
    head = load_json(str(path) + ".json")
    if head.get("dtype", "float64") != "float64" or head.get("order", "row-major") != "row-major":
        raise ValueError("unsupported grid payload layout")
    data = np.fromfile(path, dtype="<f8")
    shape = tuple(head["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError("grid payload size does not match its header")
    return GridMeasure(tuple(head["origin"]), float(head["h"]), data.reshape(shape))


def save_family(F: SolutionFamily, directory):
    """Manifest ``family.json`` plus one current file per slice (and boundary)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cur, bnd = [], []
    for i, T in enumerate(F.currents):
        name = f"current_{i:05d}.json"
        save_current(T, d / name)
        cur.append(name)
    if F.boundaries is not None:
        for i, T in enumerate(F.boundaries):
            name = f"boundary_{i:05d}.json"
            save_current(T, d / name)
            bnd.append(name)
    manifest = {"grid": [float(t) for t in F.grid], "currents": cur,
                "boundaries": bnd if F.boundaries is not None else None, "provenance": F.provenance}
    dump_json(manifest, d / "family.json")


def load_family(manifest_path) -> SolutionFamily:
    """External families always declare their boundary family explicitly (or ``null`` for k = 0)."""
    manifest_path = Path(manifest_path)
    m = load_json(manifest_path)
    base = manifest_path.parent
    cur = [load_current(base / f) for f in m["currents"]]
    bnd = None if m.get("boundaries") is None else [load_current(base / f) for f in m["boundaries"]]
    if bnd is None and cur and cur[0].k > 0:
        raise ValueError("a family of k-currents with k > 0 needs an explicit boundary family")
    return SolutionFamily(np.asarray(m["grid"], float), cur, bnd, m.get("provenance", "external"))


def write_csv(path, header, rows) -> str:
    """CSV with ``repr`` floats so re-runs are byte-identical."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
