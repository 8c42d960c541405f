"""Patch maps, interface correspondences and the built-in multipatch domains.

A patch is a (rational) tensor-product spline map from ``[0, 1]^d`` into
``R^D`` with ``D >= d``. The same metric quantities serve volumes
(``D == d``) and embedded surfaces (``D == d + 1``): with ``F = J^T J`` the
physical or surface gradient of a parametric function is ``J F^{-1}``
applied to its parametric gradient and the measure is ``sqrt(det F)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegenerateGeometryError, DomainError, GlueError, UnknownNameError
from .splines import KnotVector, TensorBasis, dense_basis

METRIC_FLOOR = 1e-14
GLUE_TOL = 1e-10


class Side(NamedTuple):
    """One side of the parameter box: ``axis`` held fixed at ``end`` (0 or 1)."""

    axis: int
    end: int


def sides_of(dim: int) -> list[Side]:
    return [Side(a, e) for a in range(dim) for e in (0, 1)]


def tangential_axes(dim: int, side: Side) -> list[int]:
    return [a for a in range(dim) if a != side.axis]


@dataclass
class GeometryGrid:
    """Map and first derivatives on a tensor grid of parametric points.

    Arrays carry the grid shape in front: ``x (*G, D)``, ``J (*G, D, d)``,
    ``W (*G)`` and ``dW (*G, d)``. ``W`` is the rational denominator
    (identically one for polynomial patches).
    """

    x: np.ndarray
    J: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    _metric: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def metric(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(g, Finv, G)``: measure, inverse first fundamental form and ``J Finv``."""
        if self._metric is None:
            F = np.einsum("...pi,...pj->...ij", self.J, self.J)
            det = np.linalg.det(F)
            if np.any(det <= METRIC_FLOOR):
                raise DegenerateGeometryError(f"metric determinant {det.min():.3e} below {METRIC_FLOOR}")
            Finv = np.linalg.inv(F)
            self._metric = (np.sqrt(det), Finv, np.einsum("...pi,...ij->...pj", self.J, Finv))
        return self._metric


class Patch:
    """Tensor-product spline map with homogeneous control net.

    ``control_points`` has shape ``(*basis.shape, D)``; rational weights live
    in ``basis.weights``. Knot vectors must span ``[0, 1]``.
    """

    def __init__(self, basis: TensorBasis, control_points, name: str = "", check: bool = True) -> None:
        cp = np.asarray(control_points, dtype=np.float64)
        if cp.shape[:-1] != basis.shape:
            raise ConfigError(f"control net shape {cp.shape[:-1]} does not match basis {basis.shape}")
        for kv in basis.knots:
            if kv.domain != (0.0, 1.0):
                raise ConfigError("patch knot vectors must span [0, 1]")
        if cp.shape[-1] < basis.dim:
            raise ConfigError("physical dimension smaller than parametric dimension")
        self.basis = basis
        self.control_points = cp
        self.name = name
        w = np.ones(basis.shape) if basis.weights is None else basis.weights
        self.cw = np.concatenate([cp * w[..., None], w[..., None]], axis=-1)
        self.c_min = self.c_max = float("nan")
        if check:
            self._check_regularity()

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def phys_dim(self) -> int:
        return self.control_points.shape[-1]

    @property
    def is_rational(self) -> bool:
        w = self.basis.weights
        return w is not None and not np.all(w == 1.0)

    @property
    def knots(self) -> tuple[KnotVector, ...]:
        return self.basis.knots

    def axis_tables(self, coords) -> list[tuple[np.ndarray, np.ndarray]]:
        """Dense geometry basis values and first derivatives per axis."""
        out = []
        for kv, c in zip(self.basis.knots, coords):
            t = dense_basis(kv, c, 1)
            out.append((t[0], t[1]))
        return out

    def eval_tables(self, tables) -> GeometryGrid:
        D = self.phys_dim

        def contract(mats):
            res = self.cw
            for d, M in enumerate(mats):
                res = np.moveaxis(np.tensordot(M, res, axes=([1], [d])), 0, d)
            return res

        H = contract([t[0] for t in tables])
        dH = [contract([t[1] if d == e else t[0] for e, t in enumerate(tables)]) for d in range(self.dim)]
        W = H[..., D]
        x = H[..., :D] / W[..., None]
        J = np.stack([(h[..., :D] - x * h[..., D : D + 1]) / W[..., None] for h in dH], axis=-1)
        dW = np.stack([h[..., D] for h in dH], axis=-1)
        return GeometryGrid(x=x, J=J, W=W, dW=dW)

    def eval_grid(self, coords) -> GeometryGrid:
        """Evaluate on the tensor grid spanned by one coordinate array per axis."""
        if len(coords) != self.dim:
            raise DomainError(f"expected {self.dim} coordinate arrays")
        return self.eval_tables(self.axis_tables([np.atleast_1d(np.asarray(c, float)) for c in coords]))

    def eval_points(self, pts) -> GeometryGrid:
        """Evaluate at scattered points ``(n, d)``; returns arrays with leading ``n``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        tabs = self.axis_tables([pts[:, d] for d in range(self.dim)])
        D = self.phys_dim
        sub = "abc"[: self.dim]
        expr = ",".join(f"n{s}" for s in sub) + f",{sub}k->nk"
        H = np.einsum(expr, *[t[0] for t in tabs], self.cw)
        dH = [
            np.einsum(expr, *[t[1] if d == e else t[0] for e, t in enumerate(tabs)], self.cw)
            for d in range(self.dim)
        ]
        W = H[:, D]
        x = H[:, :D] / W[:, None]
        J = np.stack([(h[:, :D] - x * h[:, D : D + 1]) / W[:, None] for h in dH], axis=-1)
        return GeometryGrid(x=x, J=J, W=W, dW=np.stack([h[:, D] for h in dH], axis=-1))

    def _check_regularity(self) -> None:
        from .quadrature import gauss_rule

        nodes, _ = gauss_rule(3)
        coords = []
        for kv in self.basis.knots:
            b = kv.breakpoints()
            coords.append((b[:-1, None] + np.diff(b)[:, None] * (nodes[None, :] + 1) / 2).ravel())
        coords = [np.r_[0.0, c, 1.0] for c in coords]
        grid = self.eval_grid(coords)
        F = np.einsum("...pi,...pj->...ij", grid.J, grid.J)
        g = np.sqrt(np.clip(np.linalg.det(F), 0.0, None))
        label = self.name or "patch"
        if np.any(g <= 1e-12 * max(g.max(), 1.0)):
            raise DegenerateGeometryError(f"{label}: measure vanishes (min {g.min():.3e})")
        if self.dim == self.phys_dim:
            det = np.linalg.det(grid.J)
            if det.min() < 0 < det.max():
                raise DegenerateGeometryError(f"{label}: Jacobian changes sign inside the patch")
        self.c_min, self.c_max = float(g.min()), float(g.max())

    def side_point(self, side: Side, tangential) -> np.ndarray:
        t = np.atleast_1d(np.asarray(tangential, dtype=np.float64))
        pt = np.empty(self.dim)
        pt[side.axis] = float(side.end)
        pt[tangential_axes(self.dim, side)] = t
        return pt

    def __repr__(self) -> str:
        return f"Patch({self.name!r}, dim={self.dim}, phys_dim={self.phys_dim}, shape={self.basis.shape})"


def map_point(patch: Patch, xhat) -> tuple[np.ndarray, np.ndarray]:
    """Physical point and Jacobian ``(D, d)`` at one parametric point."""
    pt = np.asarray(xhat, dtype=np.float64)
    if pt.shape != (patch.dim,):
        raise DomainError(f"point must have {patch.dim} coordinates")
    if np.any(pt < -1e-12) or np.any(pt > 1 + 1e-12) or not np.all(np.isfinite(pt)):
        raise DomainError(f"parametric point {pt.tolist()} outside [0, 1]^{patch.dim}")
    g = patch.eval_points(np.clip(pt, 0, 1)[None, :])
    return g.x[0], g.J[0]


def surface_metric(patch: Patch, xhat) -> tuple[np.ndarray, float, np.ndarray]:
    """First fundamental form ``F``, measure ``sqrt(det F)`` and ``F^{-1}``."""
    _, J = map_point(patch, xhat)
    F = J.T @ J
    det = float(np.linalg.det(F))
    if det < METRIC_FLOOR:
        raise DegenerateGeometryError(f"metric determinant {det:.3e} below {METRIC_FLOOR}")
    return F, math.sqrt(det), np.linalg.inv(F)


def face_normal(patch: Patch, side: Side, xhat_face) -> np.ndarray:
    """Outward unit normal (or in-surface conormal) on one side of a patch.

    ``xhat_face`` holds either the tangential coordinates on that side or a
    full parametric point lying on it.
    """
    side = Side(*side)
    t = np.atleast_1d(np.asarray(xhat_face, dtype=np.float64))
    if t.size == patch.dim:
        if abs(t[side.axis] - side.end) > 1e-12:
            raise DomainError("point does not lie on the requested side")
        pt = t
    else:
        pt = patch.side_point(side, t)
    _, J = map_point(patch, pt)
    Finv = np.linalg.inv(J.T @ J)
    n = J @ Finv[:, side.axis] * (1.0 if side.end == 1 else -1.0)
    return n / np.linalg.norm(n)


@dataclass(frozen=True)
class InterfaceGlue:
    """Correspondence between side ``side_a`` of patch ``a`` and ``side_b`` of ``b``.

    Tangential axis ``t`` of side a (in increasing axis order) maps to
    tangential axis ``perm[t]`` of side b, reversed when ``flips[t]``.
    ``a == b`` is allowed for a patch glued to itself.
    """

    a: int
    side_a: Side
    b: int
    side_b: Side
    perm: tuple[int, ...] = ()
    flips: tuple[bool, ...] = ()

    def map_tangential(self, coords_a: list[np.ndarray]) -> list[np.ndarray]:
        """Tangential coordinate arrays on side b, ordered by b's axes."""
        out: list[np.ndarray | None] = [None] * len(coords_a)
        for t, c in enumerate(coords_a):
            out[self.perm[t]] = 1.0 - c if self.flips[t] else c
        return out  # type: ignore[return-value]

    def map_point_a_to_b(self, dim: int, xhat_a) -> np.ndarray:
        ta = [np.atleast_1d(xhat_a[ax]) for ax in tangential_axes(dim, self.side_a)]
        tb = self.map_tangential(ta)
        pt = np.empty(dim)
        pt[self.side_b.axis] = self.side_b.end
        for j, ax in enumerate(tangential_axes(dim, self.side_b)):
            pt[ax] = tb[j][0]
        return pt


def glue_mismatch(patches, glue: InterfaceGlue, samples: int = 5) -> float:
    """Largest distance between glued sides at a sample grid of points."""
    pa, pb = patches[glue.a], patches[glue.b]
    s = np.linspace(0.0, 1.0, samples) if pa.dim > 1 else np.zeros(0)
    nt = pa.dim - 1
    grids = np.meshgrid(*([s] * nt), indexing="ij") if nt else []
    ta = [g.ravel() for g in grids]
    n = ta[0].size if nt else 1
    tb = glue.map_tangential(ta)
    xa = np.empty((n, pa.dim))
    xb = np.empty((n, pb.dim))
    xa[:, glue.side_a.axis] = glue.side_a.end
    xb[:, glue.side_b.axis] = glue.side_b.end
    for j, ax in enumerate(tangential_axes(pa.dim, glue.side_a)):
        xa[:, ax] = ta[j]
    for j, ax in enumerate(tangential_axes(pb.dim, glue.side_b)):
        xb[:, ax] = tb[j]
    return float(np.max(np.linalg.norm(pa.eval_points(xa).x - pb.eval_points(xb).x, axis=1)))


def find_interfaces(patches: list[Patch], tol: float = GLUE_TOL) -> list[InterfaceGlue]:
    """Detect coincident sides by trying every axis permutation and flip."""
    dim = patches[0].dim
    nt = dim - 1
    cands = [(i, s) for i in range(len(patches)) for s in sides_of(dim)]
    corners = {}
    for i, s in cands:
        pts = np.array(list(itertools.product((0.0, 1.0), repeat=nt))) if nt else np.zeros((1, 0))
        full = np.array([patches[i].side_point(s, p) for p in pts])
        corners[(i, s)] = np.sort(np.round(patches[i].eval_points(full).x, 8), axis=0)
    found: list[InterfaceGlue] = []
    used: set[tuple[int, Side]] = set()
    for ia, (i, si) in enumerate(cands):
        if (i, si) in used:
            continue
        for j, sj in cands[ia + 1 :]:
            if (j, sj) in used or corners[(i, si)].shape != corners[(j, sj)].shape:
                continue
            if not np.allclose(corners[(i, si)], corners[(j, sj)], atol=1e-6):
                continue
            for perm in itertools.permutations(range(nt)):
                for flips in itertools.product((False, True), repeat=nt):
                    g = InterfaceGlue(i, si, j, sj, tuple(perm), tuple(flips))
                    if glue_mismatch(patches, g) < tol:
                        found.append(g)
                        used.update({(i, si), (j, sj)})
                        break
                else:
                    continue
                break
            if (i, si) in used:
                break
    return found


@dataclass
class MultiPatchDomain:
    """Patches, their interfaces, the remaining boundary sides and per-patch coefficients."""

    patches: list[Patch]
    interfaces: list[InterfaceGlue]
    alphas: np.ndarray
    name: str = ""
    boundary: list[tuple[int, Side]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        if self.alphas.shape != (len(self.patches),):
            raise ConfigError("need exactly one coefficient per patch")
        if np.any(self.alphas <= 0):
            raise ConfigError("diffusion coefficients must be positive")
        dims = {(p.dim, p.phys_dim) for p in self.patches}
        if len(dims) != 1:
            raise ConfigError("all patches must share parametric and physical dimension")
        glued = set()
        for g in self.interfaces:
            for key in ((g.a, Side(*g.side_a)), (g.b, Side(*g.side_b))):
                if key in glued:
                    raise GlueError(f"side {key} appears in two interfaces")
                glued.add(key)
        self.boundary = [(i, s) for i in range(len(self.patches)) for s in sides_of(self.dim) if (i, s) not in glued]

    @property
    def dim(self) -> int:
        return self.patches[0].dim

    @property
    def phys_dim(self) -> int:
        return self.patches[0].phys_dim

    @property
    def is_surface(self) -> bool:
        return self.phys_dim > self.dim

    @property
    def is_closed(self) -> bool:
        return not self.boundary

    @classmethod
    def from_patches(cls, patches, alphas=None, name: str = "", tol: float = GLUE_TOL) -> MultiPatchDomain:
        alphas = np.ones(len(patches)) if alphas is None else alphas
        return cls(list(patches), find_interfaces(list(patches), tol), alphas, name)

    def with_alphas(self, alphas) -> MultiPatchDomain:
        return replace(self, alphas=np.asarray(alphas, dtype=np.float64), boundary=[])

    def check_glue(self, tol: float = GLUE_TOL) -> float:
        """Largest mismatch over all interfaces; raises when above ``tol``."""
        worst = 0.0
        for g in self.interfaces:
            err = glue_mismatch(self.patches, g)
            if err > tol:
                raise GlueError(f"interface {g.a}:{tuple(g.side_a)} / {g.b}:{tuple(g.side_b)} mismatch {err:.3e}")
            worst = max(worst, err)
        return worst


# -- built-in geometries -----------------------------------------------------


def box_patch(lo, hi, name: str = "") -> Patch:
    """Multilinear patch covering the axis-aligned box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    d = lo.size
    kv = KnotVector([0, 0, 1, 1], 1)
    cp = np.empty((2,) * d + (d,))
    for idx in itertools.product((0, 1), repeat=d):
        cp[idx] = np.where(np.array(idx) == 1, hi, lo)
    return Patch(TensorBasis((kv,) * d), cp, name)


def bilinear_patch(p00, p10, p01, p11, name: str = "") -> Patch:
    """Bilinear quadrilateral; ``pij`` sits at parametric corner ``(i, j)``."""
    kv = KnotVector([0, 0, 1, 1], 1)
    cp = np.array([[p00, p01], [p10, p11]], dtype=np.float64)
    return Patch(TensorBasis((kv, kv)), cp, name)


def _line_2patch() -> list[Patch]:
    return [box_patch([-1.0], [0.0], "left"), box_patch([0.0], [1.0], "right")]


def _unit_square_2patch() -> list[Patch]:
    return [box_patch([-1.0, 0.0], [0.0, 1.0], "left"), box_patch([0.0, 0.0], [1.0, 1.0], "right")]


def _square_4patch() -> list[Patch]:
    out = []
    for j, y in enumerate((-1.0, 0.0)):
        for i, x in enumerate((-1.0, 0.0)):
            out.append(box_patch([x, y], [x + 1, y + 1], f"q{2 * j + i}"))
    return out


def _cube_4patch() -> list[Patch]:
    out = []
    for j, y in enumerate((-1.0, 0.0)):
        for i, x in enumerate((-1.0, 0.0)):
            out.append(box_patch([x, y, -1.0], [x + 1, y + 1, 1.0], f"c{2 * j + i}"))
    return out


def _lshape_2patch() -> list[Patch]:
    # Split along the diagonal from the re-entrant corner; both patches have
    # that corner at parametric (0, 0).
    upper = bilinear_patch((0, 0), (1, 1), (-1, 0), (-1, 1), "upper")
    lower = bilinear_patch((0, 0), (0, -1), (1, 1), (1, -1), "lower")
    return [upper, lower]


def _bernstein_product(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Bernstein coefficients of the product of two bidegree-(2,2) polynomials."""
    C = np.zeros((5, 5))
    for i, j, k, l in itertools.product(range(3), repeat=4):
        C[i + k, j + l] += (
            math.comb(2, i) * math.comb(2, k) / math.comb(4, i + k)
            * math.comb(2, j) * math.comb(2, l) / math.comb(4, j + l)
            * A[i, j] * B[k, l]
        )
    return C


def sphere_cap_net(center_weight: float | None = None) -> np.ndarray:
    """Homogeneous biquartic net ``(5, 5, 4)`` of the cube-face patch around +z.

    A rational biquadratic quadrilateral bounded by circular arcs is lifted
    by inverse stereographic projection; the four arcs become the great
    circles through the cube edges.
    """
    s2, s3, s6 = math.sqrt(2), math.sqrt(3), math.sqrt(6)
    a = (s3 - 1) / 2
    m = 2 * s3 - 3
    w_edge = (s6 + s2) / 4
    wc = w_edge**2 if center_weight is None else center_weight
    layout = {
        (0, 0): (-a, -a, 1.0), (1, 0): (0.0, -m, w_edge), (2, 0): (a, -a, 1.0),
        (0, 1): (-m, 0.0, w_edge), (1, 1): (0.0, 0.0, wc), (2, 1): (m, 0.0, w_edge),
        (0, 2): (-a, a, 1.0), (1, 2): (0.0, m, w_edge), (2, 2): (a, a, 1.0),
    }
    P = np.zeros((3, 3, 3))
    for (i, j), (s, t, w) in layout.items():
        P[i, j] = (w * s, w * t, w)
    p, r, q = P[..., 0], P[..., 1], P[..., 2]
    qq, pp, rr = _bernstein_product(q, q), _bernstein_product(p, p), _bernstein_product(r, r)
    X = 2 * _bernstein_product(p, q)
    Y = 2 * _bernstein_product(r, q)
    return np.stack([X, Y, qq - pp - rr, qq + pp + rr], axis=-1)


def _rot(axis: int, quarter_turns: int) -> np.ndarray:
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][quarter_turns % 4]
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    R = np.eye(3)
    R[i, i], R[i, j], R[j, i], R[j, j] = c, -s, s, c
    return R


def _sphere_6patch() -> list[Patch]:
    net = sphere_cap_net()
    kv = KnotVector([0] * 5 + [1] * 5, 4)
    rotations = {
        "+z": np.eye(3), "-z": _rot(0, 2), "+x": _rot(1, 1),
        "-x": _rot(1, 3), "+y": _rot(0, 3), "-y": _rot(0, 1),
    }
    out = []
    for name, R in rotations.items():
        w = net[..., 3]
        pts = (net[..., :3] / w[..., None]) @ R.T
        out.append(Patch(TensorBasis((kv, kv), w), pts, f"sphere{name}"))
    return out


TORUS_R = 2.0
TORUS_r = 1.0


def _torus_4patch(R: float = TORUS_R, r: float = TORUS_r) -> list[Patch]:
    # full circle around the axis (four rational quarter arcs) times one
    # quarter of the tube cross-section per patch
    h = math.sqrt(0.5)
    circ = [(1, 0, 1), (1, 1, h), (0, 1, 1), (-1, 1, h), (-1, 0, 1), (-1, -1, h), (0, -1, 1), (1, -1, h), (1, 0, 1)]
    kv_phi = KnotVector([0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1], 2)
    kv_th = KnotVector([0, 0, 0, 1, 1, 1], 2)
    out = []
    for q in range(4):
        t0, t1 = q * math.pi / 2, (q + 1) * math.pi / 2
        u0 = np.array([math.cos(t0), math.sin(t0)])
        u1 = np.array([math.cos(t1), math.sin(t1)])
        prof = [(u0, 1.0), (u0 + u1, h), (u1, 1.0)]  # (radial offset / r, weight)
        cp = np.empty((9, 3, 3))
        w = np.empty((9, 3))
        for i, (cx, cy, wi) in enumerate(circ):
            for j, (u, wj) in enumerate(prof):
                rho = R + r * u[0]
                cp[i, j] = (rho * cx, rho * cy, r * u[1])
                w[i, j] = wi * wj
        out.append(Patch(TensorBasis((kv_phi, kv_th), w), cp, f"torus{q}"))
    return out


_BUILDERS = {
    "line_2patch": _line_2patch,
    "unit_square_2patch": _unit_square_2patch,
    "square_4patch": _square_4patch,
    "cube_4patch": _cube_4patch,
    "lshape_2patch": _lshape_2patch,
    "sphere_6patch": _sphere_6patch,
    "torus_4patch": _torus_4patch,
}


def geometry_names() -> list[str]:
    return sorted(_BUILDERS)


def builtin_geometry(name: str, alphas=None) -> MultiPatchDomain:
    """One of the registered multipatch domains, with interfaces detected and checked."""
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise UnknownNameError(f"unknown geometry {name!r}; known: {', '.join(geometry_names())}") from None
    dom = MultiPatchDomain.from_patches(build(), alphas, name)
    dom.check_glue()
    return dom
