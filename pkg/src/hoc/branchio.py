"""Branch files: a CSV of traced points plus a JSON metadata sidecar.

The CSV column layout is ``step,s,d,class,H,xi,T,t_1..t_{m+1},xbar_1_1..``
with ``T`` the sum of the segment durations and state columns grouped by
segment.  Floats are written with 17 significant digits so that parsing a
written file reproduces every value bit-exactly, and nothing run-dependent
(timestamps, hostnames) is recorded: identical runs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .continuation import Branch
from .model import HybridSystem
from .shooting import ContinuationVector

__all__ = ["FORMAT_VERSION", "write_branch", "read_branch", "meta_path_for", "LoadedBranch"]

FORMAT_VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def meta_path_for(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta.json")


def _columns(seg_dims) -> list[str]:
    cols = ["step", "s", "d", "class", "H", "xi", "T"]
    cols += [f"t_{i}" for i in range(1, len(seg_dims) + 1)]
    for i, n in enumerate(seg_dims, start=1):
        cols += [f"xbar_{i}_{j}" for j in range(1, n + 1)]
    return cols


def write_branch(branch: Branch, sys: HybridSystem, csv_path) -> Path:
    """Write a branch to ``csv_path`` and its metadata sidecar; returns the sidecar path."""
    csv_path = Path(csv_path)
    seg_dims = sys.segment_dims()
    cols = _columns(seg_dims)
    lines = [",".join(cols)]
    for step, p in enumerate(branch.points):
        cv = p.u
        row = [
            str(step),
            _fmt(p.arclength),
            str(int(p.direction)),
            p.classification,
            _fmt(cv.level),
            _fmt(cv.xi),
            _fmt(cv.period),
        ]
        row += [_fmt(cv.duration(i)) for i in range(1, len(seg_dims) + 1)]
        for i in range(1, len(seg_dims) + 1):
            row += [_fmt(v) for v in cv.start(i)]
        lines.append(",".join(row))
    csv_path.write_text("\n".join(lines) + "\n")

    meta = {
        "format_version": FORMAT_VERSION,
        "model": branch.model,
        "segment_dims": list(seg_dims),
        "settings": branch.settings,
        "termination": branch.termination,
        "points": len(branch.points),
        "classifications": [p.classification for p in branch.points],
    }
    mp = meta_path_for(csv_path)
    mp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return mp


@dataclass(frozen=True)
class LoadedBranch:
    """Branch file contents: per-point unknown vectors plus bookkeeping columns."""

    model: str
    segment_dims: tuple[int, ...]
    settings: dict
    termination: str
    steps: tuple[int, ...]
    arclengths: tuple[float, ...]
    directions: tuple[int, ...]
    classifications: tuple[str, ...]
    points: tuple[ContinuationVector, ...]


def read_branch(csv_path) -> LoadedBranch:
    csv_path = Path(csv_path)
    meta = json.loads(meta_path_for(csv_path).read_text())
    seg_dims = tuple(int(n) for n in meta["segment_dims"])
    m1 = len(seg_dims)
    text = csv_path.read_text().strip().splitlines()
    header = text[0].split(",")
    expected = _columns(seg_dims)
    if header != expected:
        raise ValueError(f"unexpected branch CSV header: {header[:8]}...")

    steps, arcs, dirs, classes, points = [], [], [], [], []
    for line in text[1:]:
        parts = line.split(",")
        steps.append(int(parts[0]))
        arcs.append(float(parts[1]))
        dirs.append(int(parts[2]))
        classes.append(parts[3])
        level = float(parts[4])
        xi = float(parts[5])
        k = 7
        durations_asc = [float(parts[k + i]) for i in range(m1)]
        k += m1
        starts_asc = []
        for n in seg_dims:
            starts_asc.append(np.array([float(v) for v in parts[k : k + n]]))
            k += n
        points.append(
            ContinuationVector(
                durations=tuple(reversed(durations_asc)),
                phase_starts=tuple(reversed([np.asarray(s) for s in starts_asc])),
                xi=xi,
                level=level,
            )
        )
    return LoadedBranch(
        model=meta["model"],
        segment_dims=seg_dims,
        settings=meta["settings"],
        termination=meta["termination"],
        steps=tuple(steps),
        arclengths=tuple(arcs),
        directions=tuple(dirs),
        classifications=tuple(classes),
        points=tuple(points),
    )
