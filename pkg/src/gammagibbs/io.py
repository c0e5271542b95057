"""Sample dumps: CSV atoms plus a JSON sidecar.

CSV header: ``sample_id,atom_id,x_1,...,x_d,mark``.  Floats are written with
``repr`` (shortest round-trip form) so a dump re-reads bit-exact.  The sidecar
``<stem>.json`` records the number of samples (empty samples have no rows),
the dimension, the window and whatever run metadata the caller passes.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .lattice import CubeGrid, Window
from .levy import MeasureBatch, canonical_batch_order
from .measures import DiscreteMeasure


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def _as_batch(samples, window: Optional[Window]) -> MeasureBatch:
    if isinstance(samples, MeasureBatch):
        return samples
    samples = list(samples)
    if not samples:
        raise ValueError("nothing to write")
    d = samples[0].dimension
    counts = [len(s) for s in samples]
    pos = np.vstack([s.positions for s in samples]) if sum(counts) else np.zeros((0, d))
    marks = np.concatenate([s.marks for s in samples]) if sum(counts) else np.zeros(0)
    sid = np.repeat(np.arange(len(samples)), counts)
    return MeasureBatch(pos, marks, sid, len(samples), window or samples[0].window)


def write_samples(path, samples: Union[MeasureBatch, Sequence[DiscreteMeasure]],
                  metadata: Optional[dict] = None, window: Optional[Window] = None) -> Path:
    """Write a dump and its sidecar; returns the CSV path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    batch = _as_batch(samples, window)
    d = batch.positions.shape[1] if batch.positions.ndim == 2 else 1
    if batch.window is not None:
        d = batch.window.dimension
    bounds = np.searchsorted(batch.sample_id, np.arange(batch.n_samples + 1))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "atom_id"] + [f"x_{j + 1}" for j in range(d)] + ["mark"])
        for i in range(batch.n_samples):
            for a, k in enumerate(range(bounds[i], bounds[i + 1])):
                w.writerow([i, a] + [repr(float(v)) for v in batch.positions[k]]
                           + [repr(float(batch.marks[k]))])
    meta = {"format": "gammagibbs-samples", "version": 1, "n_samples": int(batch.n_samples),
            "dimension": int(d), "n_atoms": int(len(batch.marks))}
    if batch.window is not None and batch.window.exclude is None:
        meta["window"] = batch.window.to_dict()
        if batch.window.grid is not None:
            g = batch.window.grid
            meta["grid"] = {"d": g.dimension, "delta": g.delta, "R": g.range}
    meta.update(metadata or {})
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def window_from_dict(spec: dict, grid: Optional[CubeGrid] = None) -> Window:
    if "cubes" in spec:
        if grid is None:
            raise ValueError("a cube window needs a grid")
        return Window.from_cubes([tuple(k) for k in spec["cubes"]], grid)
    return Window.box(spec["lower"], spec["upper"])


def read_samples(path, window: Optional[Window] = None) -> MeasureBatch:
    """Read a dump back; atoms are returned in canonical order."""
    path = Path(path)
    meta = {}
    if sidecar_path(path).exists():
        with open(sidecar_path(path)) as fh:
            meta = json.load(fh)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["sample_id", "atom_id"] or header[-1] != "mark":
        raise ValueError(f"{path}: not a sample dump (header {header})")
    d = len(header) - 3
    if body:
        sid = np.array([int(r[0]) for r in body], dtype=np.int64)
        pos = np.array([[float(v) for v in r[2:2 + d]] for r in body]).reshape(-1, d)
        marks = np.array([float(r[-1]) for r in body])
    else:
        sid, pos, marks = np.zeros(0, np.int64), np.zeros((0, d)), np.zeros(0)
    n = int(meta.get("n_samples", int(sid.max()) + 1 if len(sid) else 0))
    if window is None and "window" in meta:
        grid = None
        if "grid" in meta:
            g = meta["grid"]
            grid = CubeGrid(g["d"], g["delta"], g["R"])
        window = window_from_dict(meta["window"], grid)
    order = canonical_batch_order(pos, sid)
    return MeasureBatch(pos[order], marks[order], sid[order], n, window)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")
    return path


def write_table(path, rows: list) -> Path:
    """CSV of a list of flat dicts (plot data)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return path


def _default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    if isinstance(o, (tuple, set, frozenset)):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def default_out_dir() -> Path:
    return Path(os.environ.get("GAMMAGIBBS_OUT_DIR", "gammagibbs_out"))
