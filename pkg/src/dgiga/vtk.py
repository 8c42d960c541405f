"""Legacy ASCII VTK output of discrete fields, one structured grid per patch."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .assembly import DiscreteField

HEADER = "# vtk DataFile Version 3.0"


def write_vtk(field: DiscreteField, prefix: str | Path, resolution: int = 16) -> list[Path]:
    """Sample ``field`` on a uniform parametric grid and write ``<prefix>_p<i>.vtk``.

    ``resolution`` is the number of cells per parametric direction, so each
    file holds ``resolution + 1`` points along every axis.
    """
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, ps in enumerate(field.space.patches):
        d = ps.patch.dim
        t = np.linspace(0.0, 1.0, resolution + 1)
        vals, _, pts = field.eval_grid(i, [t] * d)
        # VTK wants the first axis varying fastest
        order = tuple(range(d - 1, -1, -1))
        v = np.transpose(vals, order).ravel()
        x = np.transpose(pts, order + (d,)).reshape(-1, pts.shape[-1])
        x3 = np.zeros((x.shape[0], 3))
        x3[:, : x.shape[1]] = x
        dims = [resolution + 1] * d + [1] * (3 - d)
        path = prefix.with_name(f"{prefix.name}_p{i}.vtk")
        lines = [
            HEADER,
            f"dgiga field on patch {i}",
            "ASCII",
            "DATASET STRUCTURED_GRID",
            "DIMENSIONS " + " ".join(map(str, dims)),
            f"POINTS {x3.shape[0]} double",
        ]
        lines += [" ".join(f"{c:.12g}" for c in row) for row in x3]
        lines += [f"POINT_DATA {v.size}", "SCALARS u double 1", "LOOKUP_TABLE default"]
        lines += [f"{c:.12g}" for c in v]
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def read_vtk(path: str | Path) -> tuple[tuple[int, ...], np.ndarray, np.ndarray]:
    """Parse a file written by :func:`write_vtk`; returns dimensions, points and ``u``."""
    tokens = Path(path).read_text().split("\n")
    if tokens[0].strip() != HEADER:
        raise ValueError(f"{path}: not a legacy VTK file")
    it = iter(tokens[1:])
    dims: tuple[int, ...] = ()
    pts = vals = None
    for line in it:
        head = line.split()
        if not head:
            continue
        if head[0] == "DIMENSIONS":
            dims = tuple(int(s) for s in head[1:4])
        elif head[0] == "POINTS":
            n = int(head[1])
            pts = np.array([[float(s) for s in next(it).split()] for _ in range(n)])
        elif head[0] == "POINT_DATA":
            n = int(head[1])
            next(it)
            next(it)
            vals = np.array([float(next(it)) for _ in range(n)])
    if pts is None or vals is None or not dims:
        raise ValueError(f"{path}: missing grid or point data")
    return dims, pts, vals
