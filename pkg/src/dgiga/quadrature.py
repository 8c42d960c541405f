"""Gauss rules on elements, boundary sides and non-matching interfaces."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, GlueError
from .geometry import InterfaceGlue, MultiPatchDomain, Patch, Side, tangential_axes

MAX_POINTS = 30
MERGE_TOL = 1e-12


@lru_cache(maxsize=None)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[-1, 1]``, exact to degree ``2n - 1``."""
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_POINTS:
        raise DomainError(f"number of Gauss points must be in 1..{MAX_POINTS}, got {n!r}")
    return _leggauss(int(n))


def interval_rule(breaks, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule over consecutive sub-intervals of ``breaks``.

    Points are ordered interval by interval.
    """
    b = np.asarray(breaks, dtype=np.float64)
    x, w = gauss_rule(n)
    half = np.diff(b)[:, None] / 2
    pts = (b[:-1, None] + half * (x[None, :] + 1)).ravel()
    wts = (half * w[None, :]).ravel()
    return pts, wts


def element_quadrature(patch: Patch, element, n: int):
    """Tensor Gauss rule on one element ``[(lo, hi), ...]`` of a patch.

    Returns parametric points ``(Q, d)``, physical points ``(Q, D)`` and
    weights that already include the measure of the map.
    """
    element = [tuple(map(float, e)) for e in element]
    if len(element) != patch.dim or any(hi <= lo for lo, hi in element):
        raise DomainError("element must give one non-empty interval per axis")
    rules = [interval_rule([lo, hi], n) for lo, hi in element]
    grid = patch.eval_grid([r[0] for r in rules])
    g, _, _ = grid.metric()
    w = rules[0][1]
    for r in rules[1:]:
        w = np.multiply.outer(w, r[1])
    mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    xhat = np.stack([m.ravel() for m in mesh], axis=-1)
    return xhat, grid.x.reshape(-1, patch.phys_dim), (w * g).ravel()


def merge_breaks(*arrays: np.ndarray) -> np.ndarray:
    """Sorted union of breakpoint arrays, fusing values closer than a tolerance."""
    b = np.sort(np.concatenate(arrays))
    keep = np.r_[True, np.diff(b) > MERGE_TOL]
    return b[keep]


@dataclass
class FaceQuadrature:
    """Quadrature on one side of a patch, optionally matched to a second side.

    ``coords_a`` / ``coords_b`` are per-axis coordinate arrays for tensor
    evaluation on each side (the normal axis holds the single end value).
    After evaluation, side b's tangential axes must be transposed by
    ``b_transpose`` to line up point by point with side a. ``param_weights``
    are the tangential Gauss weights; ``weights`` additionally include the
    face measure computed on side a.
    """

    patch_a: int
    side_a: Side
    coords_a: list[np.ndarray]
    param_weights: np.ndarray
    weights: np.ndarray
    xhat_a: np.ndarray
    x: np.ndarray
    merged: list[np.ndarray]
    patch_b: int | None = None
    side_b: Side | None = None
    coords_b: list[np.ndarray] | None = None
    b_transpose: tuple[int, ...] = ()
    xhat_b: np.ndarray | None = None
    weights_b: np.ndarray | None = None

    @property
    def n_points(self) -> int:
        return self.weights.size


def face_measure(J: np.ndarray, side: Side) -> np.ndarray:
    """Measure of the side's own parametrisation from the full Jacobian."""
    d = J.shape[-1]
    tang = tangential_axes(d, side)
    if not tang:
        return np.ones(J.shape[:-2])
    Jt = J[..., tang]
    return np.sqrt(np.linalg.det(np.einsum("...pi,...pj->...ij", Jt, Jt)))


def _tensor_points(coords: list[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*coords, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def boundary_quadrature(patch: Patch, side: Side, n: int, breaks=None, patch_index: int = 0) -> FaceQuadrature:
    """Gauss rule on one side; ``breaks`` gives mesh breakpoints per axis."""
    side = Side(*side)
    d = patch.dim
    if breaks is None:
        breaks = [kv.breakpoints() for kv in patch.knots]
    coords, tw = [], []
    for ax in range(d):
        if ax == side.axis:
            coords.append(np.array([float(side.end)]))
        else:
            pts, wts = interval_rule(breaks[ax], n)
            coords.append(pts)
            tw.append(wts)
    pw = np.ones(1)
    for w in tw:
        pw = np.multiply.outer(pw, w).ravel()
    grid = patch.eval_grid(coords)
    meas = face_measure(grid.J, side).ravel()
    return FaceQuadrature(
        patch_a=patch_index,
        side_a=side,
        coords_a=coords,
        param_weights=pw,
        weights=pw * meas,
        xhat_a=_tensor_points(coords),
        x=grid.x.reshape(-1, patch.phys_dim),
        merged=[np.asarray(breaks[ax]) for ax in tangential_axes(d, side)],
    )


def interface_quadrature(
    domain: MultiPatchDomain,
    glue: InterfaceGlue,
    n: int,
    breaks_a=None,
    breaks_b=None,
    tol: float = 1e-8,
) -> FaceQuadrature:
    """Gauss rule on the merged breakpoints of both sides of an interface.

    Every sub-interval lies inside one element of each side, so the rule is
    exact for the piecewise polynomial products that appear in assembly.
    Raises :class:`GlueError` when the two sides disagree beyond ``tol``.
    """
    pa, pb = domain.patches[glue.a], domain.patches[glue.b]
    sa, sb = Side(*glue.side_a), Side(*glue.side_b)
    d = pa.dim
    breaks_a = breaks_a if breaks_a is not None else [kv.breakpoints() for kv in pa.knots]
    breaks_b = breaks_b if breaks_b is not None else [kv.breakpoints() for kv in pb.knots]
    tang_a = tangential_axes(d, sa)
    tang_b = tangential_axes(d, sb)
    merged, pts_a, tw = [], [], []
    for t, ax in enumerate(tang_a):
        other = np.asarray(breaks_b[tang_b[glue.perm[t]]], dtype=np.float64)
        if glue.flips[t]:
            other = 1.0 - other[::-1]
        m = merge_breaks(np.asarray(breaks_a[ax], dtype=np.float64), other)
        merged.append(m)
        p, w = interval_rule(m, n)
        pts_a.append(p)
        tw.append(w)
    coords_a: list[np.ndarray] = []
    it = iter(pts_a)
    for ax in range(d):
        coords_a.append(np.array([float(sa.end)]) if ax == sa.axis else next(it))
    mapped = glue.map_tangential(pts_a)
    coords_b: list[np.ndarray] = []
    it = iter(mapped)
    for ax in range(d):
        coords_b.append(np.array([float(sb.end)]) if ax == sb.axis else next(it))
    pw = np.ones(1)
    for w in tw:
        pw = np.multiply.outer(pw, w).ravel()
    ga = pa.eval_grid(coords_a)
    gb = pb.eval_grid(coords_b)
    transpose = tuple(glue.perm)
    xa = np.squeeze(ga.x, axis=sa.axis).reshape(-1, pa.phys_dim) if d > 1 else ga.x.reshape(-1, pa.phys_dim)
    xb_grid = np.squeeze(gb.x, axis=sb.axis) if d > 1 else gb.x.reshape(1, -1)
    if d > 1:
        xb_grid = np.transpose(xb_grid, transpose + (d - 1,))
    xb = xb_grid.reshape(-1, pb.phys_dim)
    mismatch = float(np.max(np.linalg.norm(xa - xb, axis=1)))
    if mismatch > tol:
        raise GlueError(f"interface {glue.a}/{glue.b}: sides differ by {mismatch:.3e} at quadrature points")
    meas_a = face_measure(ga.J, sa).reshape(-1) if d == 1 else np.squeeze(face_measure(ga.J, sa), axis=sa.axis).ravel()
    meas_b = face_measure(gb.J, sb)
    if d > 1:
        meas_b = np.transpose(np.squeeze(meas_b, axis=sb.axis), transpose)
    meas_b = np.asarray(meas_b).ravel()
    xhat_a = _tensor_points(coords_a)
    xhat_b = _b_points(glue, d, pts_a, sb)
    return FaceQuadrature(
        patch_a=glue.a,
        side_a=sa,
        coords_a=coords_a,
        param_weights=pw,
        weights=pw * meas_a,
        xhat_a=xhat_a,
        x=xa,
        merged=merged,
        patch_b=glue.b,
        side_b=sb,
        coords_b=coords_b,
        b_transpose=transpose,
        xhat_b=xhat_b,
        weights_b=pw * meas_b,
    )


def _b_points(glue: InterfaceGlue, d: int, pts_a: list[np.ndarray], sb: Side) -> np.ndarray:
    """Side-b parametric points listed in side a's point order."""
    if d == 1:
        return np.array([[float(sb.end)]])
    ta = _tensor_points(pts_a)
    cols = [ta[:, t] for t in range(d - 1)]
    mapped = glue.map_tangential(cols)
    tang_b = tangential_axes(d, sb)
    out = np.empty((ta.shape[0], d))
    out[:, sb.axis] = sb.end
    for j, ax in enumerate(tang_b):
        out[:, ax] = mapped[j]
    return out

