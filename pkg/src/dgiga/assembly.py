"""Discrete spaces and assembly of the symmetric interior penalty system.

Each patch carries its own spline space; functions are discontinuous across
interfaces. The bilinear form is

    sum_i int alpha_i grad u . grad v
      - int_F {alpha grad u}.n [v] - int_F {alpha grad v}.n [u] + int_F sigma [u][v]

summed over interfaces ``F`` (jump ``[w] = w_a - w_b``, average of the two
one-sided fluxes, ``n`` pointing out of side a), plus the same terms with
full one-sided weight on Dirichlet sides. Surfaces use the surface gradient
and in-surface conormals; nothing else changes.
"""

from __future__ import annotations

import math
import os
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigError
from .geometry import MultiPatchDomain, Patch, Side
from .quadrature import boundary_quadrature, interface_quadrature, interval_rule
from .splines import GradingConfig, KnotVector, field_knots, insertion_matrix, transfer_matrix

ScalarFn = Callable[[np.ndarray], np.ndarray]

# cap on (points x local functions x components) held per assembly chunk
_CHUNK_ENTRIES = 4_000_000


def default_penalty(degree: int, dim: int) -> float:
    """Penalty constant ``2 (k + 1)(k + d) / d`` that keeps the form coercive."""
    return 2.0 * (degree + 1) * (degree + dim) / dim


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        n = int(threads)
    else:
        n = int(os.environ.get("DGIGA_THREADS", "1") or 1)
    if n < 1:
        raise ConfigError("thread count must be positive")
    return n


@dataclass
class ProblemSpec:
    """Everything that defines one boundary value problem.

    ``f``, ``dirichlet`` and ``exact`` take physical points ``(n, D)``;
    ``exact_grad`` returns ``(n, D)`` (the surface gradient on surfaces).
    ``spans`` sets the level-zero subdivision per patch and axis, and
    ``grading`` optionally grades individual patches toward a corner.
    """

    domain: MultiPatchDomain
    f: ScalarFn
    dirichlet: ScalarFn | None = None
    exact: ScalarFn | None = None
    exact_grad: ScalarFn | None = None
    penalty: float | None = None
    nitsche_rhs_consistency: bool = True
    constraint: str = "none"
    grading: tuple[GradingConfig | None, ...] | None = None
    spans: tuple[tuple[int, ...], ...] | None = None
    penalty_length: str = "local"

    def __post_init__(self) -> None:
        dom = self.domain
        if self.constraint not in ("none", "zero-mean"):
            raise ConfigError(f"unknown constraint {self.constraint!r}")
        if self.penalty is not None and not self.penalty > 0:
            raise ConfigError("penalty constant must be positive")
        if self.penalty_length not in ("local", "patch"):
            raise ConfigError("penalty length must be 'local' or 'patch'")
        if dom.is_closed:
            if self.constraint != "zero-mean":
                raise ConfigError("a domain without boundary needs the zero-mean constraint")
            if self.dirichlet is not None:
                raise ConfigError("Dirichlet data given for a domain without boundary")
        elif self.dirichlet is None:
            raise ConfigError("Dirichlet data required on a domain with boundary")
        n = len(dom.patches)
        if self.grading is not None and len(self.grading) != n:
            raise ConfigError("grading needs one entry per patch")
        if self.spans is not None:
            if len(self.spans) != n or any(len(s) != dom.dim for s in self.spans):
                raise ConfigError("spans needs one tuple of per-axis counts per patch")
            if any(m < 1 for s in self.spans for m in s):
                raise ConfigError("span counts must be positive")


# -- discrete spaces ---------------------------------------------------------


@dataclass
class PatchSpace:
    """Spline space on one patch and its slot in the global numbering."""

    index: int
    patch: Patch
    knots: tuple[KnotVector, ...]
    offset: int
    rational: bool
    # per-function NURBS weights, the geometry weights expressed in this space
    weights: np.ndarray | None = None

    @property
    def degree(self) -> int:
        return self.knots[0].degree

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(kv.n for kv in self.knots)

    @property
    def ndofs(self) -> int:
        return math.prod(self.shape)

    @property
    def strides(self) -> tuple[int, ...]:
        s = [1] * len(self.shape)
        for d in range(len(self.shape) - 2, -1, -1):
            s[d] = s[d + 1] * self.shape[d + 1]
        return tuple(s)

    def breaks(self) -> list[np.ndarray]:
        return [kv.breakpoints() for kv in self.knots]

    def normal_span(self, side: Side) -> float:
        """Parametric width of the element layer touching ``side``."""
        b = self.knots[side.axis].breakpoints()
        return float(b[1] - b[0]) if side.end == 0 else float(b[-1] - b[-2])


@dataclass
class DiscreteSpace:
    domain: MultiPatchDomain
    degree: int
    level: int
    patches: list[PatchSpace]

    @property
    def ndofs(self) -> int:
        return sum(p.ndofs for p in self.patches)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([p.offset for p in self.patches] + [self.ndofs])


def build_space(
    domain: MultiPatchDomain,
    degree: int,
    level: int = 0,
    spans=None,
    grading=None,
) -> DiscreteSpace:
    """Per-patch spline spaces of ``degree`` after ``level`` uniform bisections.

    The fields use the rational weights of the geometry only when ``degree``
    is at least the geometry degree; otherwise plain B-splines are used so
    that constants stay in the space.
    """
    if degree < 1:
        raise ConfigError("degree must be at least 1")
    if level < 0:
        raise ConfigError("level must be non-negative")
    out, offset = [], 0
    for i, patch in enumerate(domain.patches):
        base = spans[i] if spans is not None else (1,) * patch.dim
        cfg = grading[i] if grading is not None else None
        kvs = tuple(
            field_knots(patch.knots[ax], degree, base[ax] * 2**level, cfg, ax) for ax in range(patch.dim)
        )
        rational = patch.is_rational and degree >= max(kv.degree for kv in patch.knots)
        weights = None
        if rational:
            weights = patch.basis.weights
            for ax, (kg, kf) in enumerate(zip(patch.knots, kvs)):
                weights = np.moveaxis(np.tensordot(transfer_matrix(kg, kf), weights, axes=(1, ax)), 0, ax)
            weights = weights.ravel()
        ps = PatchSpace(i, patch, kvs, offset, rational, weights)
        out.append(ps)
        offset += ps.ndofs
    return DiscreteSpace(domain, degree, level, out)


def prolongation(coarse: DiscreteSpace, fine: DiscreteSpace) -> sp.csr_matrix:
    """Coefficient map embedding a coarse space into a nested finer one."""
    blocks = []
    for pc, pf in zip(coarse.patches, fine.patches):
        if pc.rational != pf.rational:
            raise ConfigError("spaces are not nested")
        T = sp.identity(1, format="csr")
        for kc, kf in zip(pc.knots, pf.knots):
            T = sp.kron(T, insertion_matrix(kc, kf), format="csr")
        if pc.rational:
            # refine the weighted numerators, then divide by the fine weights
            T = (sp.diags(1.0 / pf.weights) @ T @ sp.diags(pc.weights)).tocsr()
        blocks.append(T)
    return sp.block_diag(blocks, format="csr")


# -- evaluation on tensor grids ----------------------------------------------


@dataclass
class AxisTable:
    first: np.ndarray
    vals: np.ndarray
    ders: np.ndarray
    geo: tuple[np.ndarray, np.ndarray]

    def take(self, sl: slice) -> AxisTable:
        return AxisTable(self.first[sl], self.vals[sl], self.ders[sl], (self.geo[0][sl], self.geo[1][sl]))


def axis_tables(ps: PatchSpace, coords) -> list[AxisTable]:
    geo = ps.patch.axis_tables(coords)
    out = []
    for kv, c, g in zip(ps.knots, coords, geo):
        first, ders = kernels.basis_ders(kv.knots, kv.degree, np.ascontiguousarray(c, dtype=np.float64), 1)
        out.append(AxisTable(first, ders[:, 0, :], ders[:, 1, :], g))
    return out


def _outer(arrays: list[np.ndarray]) -> np.ndarray:
    """``(n_d, a_d)`` factors to the tensor product ``(*n, prod a_d)``."""
    D = len(arrays)
    pts, loc = string.ascii_lowercase[:D], string.ascii_uppercase[:D]
    expr = ",".join(p + l for p, l in zip(pts, loc)) + "->" + pts + loc
    res = np.einsum(expr, *arrays)
    return res.reshape(res.shape[:D] + (-1,))


def _outer_sum(arrays: list[np.ndarray]) -> np.ndarray:
    """Like :func:`_outer` with addition in place of multiplication."""
    D = len(arrays)
    res = np.zeros([a.shape[0] for a in arrays] + [a.shape[1] for a in arrays], dtype=arrays[0].dtype)
    for d, a in enumerate(arrays):
        shape = [1] * (2 * D)
        shape[d], shape[D + d] = a.shape
        res = res + a.reshape(shape)
    return res.reshape(res.shape[:D] + (-1,))


@dataclass
class FieldGrid:
    """Basis data on a tensor grid: arrays are ``(*grid, ...)``.

    ``vals (*G, A)`` and ``grads (*G, A, D)`` hold the active local functions
    (physical or surface gradients), ``gidx (*G, A)`` their global numbers.
    """

    x: np.ndarray
    g: np.ndarray
    G: np.ndarray
    vals: np.ndarray
    grads: np.ndarray
    gidx: np.ndarray


def eval_tables(ps: PatchSpace, tabs: list[AxisTable]) -> FieldGrid:
    geo = ps.patch.eval_tables([t.geo for t in tabs])
    g, _, G = geo.metric()
    D = ps.patch.dim
    vals = _outer([t.vals for t in tabs])
    dpar = np.stack([_outer([t.ders if e == d else t.vals for e, t in enumerate(tabs)]) for d in range(D)], axis=-1)
    k1 = ps.degree + 1
    strides = ps.strides
    lidx = _outer_sum([(t.first[:, None] + np.arange(k1)[None, :]) * s for t, s in zip(tabs, strides)])
    if ps.rational:
        W = geo.W[..., None]
        vals = vals / W
        dpar = (dpar - vals[..., None] * geo.dW[..., None, :]) / W[..., None]
        w = ps.weights[lidx]
        vals = vals * w
        dpar = dpar * w[..., None]
    grads = np.einsum("...pd,...ad->...ap", G, dpar)
    gidx = lidx + ps.offset
    return FieldGrid(geo.x, g, G, vals, grads, gidx)


def eval_space_grid(ps: PatchSpace, coords) -> FieldGrid:
    return eval_tables(ps, axis_tables(ps, [np.atleast_1d(np.asarray(c, float)) for c in coords]))


def _to_elements(arr: np.ndarray, nspans: list[int], nq: int, tail: int) -> np.ndarray:
    """Reorder ``(n0*q, n1*q, ..., *tail)`` grid data into ``(E, Q, *tail)``."""
    D = len(nspans)
    rest = arr.shape[D:]
    a = arr.reshape(sum(([n, nq] for n in nspans), []) + list(rest))
    order = list(range(0, 2 * D, 2)) + list(range(1, 2 * D, 2)) + list(range(2 * D, 2 * D + len(rest)))
    a = a.transpose(order)
    return a.reshape((math.prod(nspans), nq**D) + tuple(rest))


@dataclass
class ElementChunk:
    """Quadrature data for a slab of elements of one patch."""

    x: np.ndarray  # (E, Q, D)
    w: np.ndarray  # (E, Q) weights including the measure
    vals: np.ndarray  # (E, Q, A)
    grads: np.ndarray  # (E, Q, A, D)
    gidx: np.ndarray  # (E, A)


def element_chunks(ps: PatchSpace, nq: int, max_entries: int = _CHUNK_ENTRIES):
    """Yield :class:`ElementChunk` slabs along the first axis of a patch."""
    breaks = ps.breaks()
    rules = [interval_rule(b, nq) for b in breaks]
    tabs = axis_tables(ps, [r[0] for r in rules])
    nspans = [b.size - 1 for b in breaks]
    A = (ps.degree + 1) ** ps.patch.dim
    per_span0 = max(1, math.prod(nspans[1:]) * nq**ps.patch.dim * A * ps.patch.phys_dim)
    step = max(1, max_entries // per_span0)
    for s0 in range(0, nspans[0], step):
        s1 = min(nspans[0], s0 + step)
        sl = slice(s0 * nq, s1 * nq)
        sub = [tabs[0].take(sl)] + tabs[1:]
        fg = eval_tables(ps, sub)
        ns = [s1 - s0] + nspans[1:]
        w = rules[0][1][sl]
        for r in rules[1:]:
            w = np.multiply.outer(w, r[1])
        D = ps.patch.dim
        yield ElementChunk(
            x=_to_elements(fg.x, ns, nq, 1),
            w=_to_elements(w * fg.g, ns, nq, 0),
            vals=_to_elements(fg.vals, ns, nq, 1),
            grads=_to_elements(fg.grads, ns, nq, 2),
            gidx=_to_elements(fg.gidx, ns, nq, 1)[:, 0, :] if D else fg.gidx,
        )


@dataclass
class FacePoints:
    """One side's basis data at the points of a face rule, flattened to ``(P, ...)``."""

    x: np.ndarray
    vals: np.ndarray
    grads: np.ndarray
    gidx: np.ndarray
    normal: np.ndarray
    h: np.ndarray


def face_points(ps: PatchSpace, side: Side, coords, transpose: tuple[int, ...] | None = None) -> FacePoints:
    fg = eval_space_grid(ps, coords)
    d = ps.patch.dim

    def flat(a: np.ndarray) -> np.ndarray:
        a = np.squeeze(a, axis=side.axis)
        if transpose is not None and d > 1:
            a = np.transpose(a, tuple(transpose) + tuple(range(d - 1, a.ndim)))
        return a.reshape((-1,) + a.shape[d - 1 :])

    G = flat(fg.G)
    col = G[:, :, side.axis]
    size = np.linalg.norm(col, axis=1)
    normal = col / size[:, None] * (1.0 if side.end == 1 else -1.0)
    return FacePoints(
        x=flat(fg.x),
        vals=flat(fg.vals),
        grads=flat(fg.grads),
        gidx=flat(fg.gidx),
        normal=normal,
        h=ps.normal_span(side) / size,
    )


def patch_mesh_size(ps: PatchSpace) -> float:
    """Largest physical distance between opposite corners of any element."""
    breaks = ps.breaks()
    d = ps.patch.dim
    x = ps.patch.eval_grid(breaks).x
    best = 0.0
    for flips in range(2 ** (d - 1)):
        lo = [slice(None, -1)] * d
        hi = [slice(1, None)] * d
        for ax in range(1, d):
            if flips >> (ax - 1) & 1:
                lo[ax], hi[ax] = hi[ax], lo[ax]
        diag = np.linalg.norm(x[tuple(hi)] - x[tuple(lo)], axis=-1)
        best = max(best, float(diag.max()))
    return best


# -- sparsity patterns -------------------------------------------------------


class Pattern:
    """Sorted CSR sparsity pattern described by flat ``row * ncols + col`` keys."""

    def __init__(self, nrows: int, ncols: int, keys: np.ndarray) -> None:
        self.nrows, self.ncols = nrows, ncols
        self.keys = np.ascontiguousarray(keys, dtype=np.int64)
        rows = self.keys // ncols
        self.indices = np.ascontiguousarray(self.keys - rows * ncols)
        self.indptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=nrows), out=self.indptr[1:])

    @property
    def nnz(self) -> int:
        return self.keys.size

    @classmethod
    def from_csr(cls, m: sp.csr_matrix) -> Pattern:
        m = m.tocsr()
        m.sort_indices()
        rows = np.repeat(np.arange(m.shape[0], dtype=np.int64), np.diff(m.indptr))
        return cls(m.shape[0], m.shape[1], rows * m.shape[1] + m.indices.astype(np.int64))

    @classmethod
    def from_local_sets(cls, n: int, sets: np.ndarray) -> Pattern:
        """All pairs within each row of ``sets (P, m)`` of global indices."""
        sets = np.unique(np.sort(sets, axis=1), axis=0)
        keys = (sets[:, :, None] * np.int64(n) + sets[:, None, :]).ravel()
        return cls(n, n, np.unique(keys))

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.nrows, self.ncols))

    def accumulate(self, A, B, w, rows, cols, data) -> None:
        kernels.accumulate(
            np.ascontiguousarray(A, dtype=np.float64),
            np.ascontiguousarray(B, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
            np.ascontiguousarray(rows, dtype=np.int64),
            np.ascontiguousarray(cols, dtype=np.int64),
            self.indptr,
            self.indices,
            self.keys,
            self.ncols,
            data,
        )


def band_pattern(shape: tuple[int, ...], degree: int) -> Pattern:
    """Couplings of tensor B-splines whose supports can overlap."""
    m = sp.identity(1, format="csr")
    for n in shape:
        band = sp.diags([np.ones(n - abs(o)) for o in range(-degree, degree + 1)], range(-degree, degree + 1), shape=(n, n))
        m = sp.kron(m, band, format="csr")
    return Pattern.from_csr(m)


# -- assembly ----------------------------------------------------------------


@dataclass
class DGSystem:
    """Assembled linear system and the matrices used to measure errors.

    ``norm_matrix`` is the discrete energy norm (coefficient-weighted
    broken gradients plus penalised jumps); ``mean_vector`` integrates each
    basis function, and ``constraint`` is set to it when the solution must
    have zero mean.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    space: DiscreteSpace
    norm_matrix: sp.csr_matrix
    mean_vector: np.ndarray
    constraint: np.ndarray | None
    penalty: float
    spec: ProblemSpec
    quad: int
    mass: sp.csr_matrix | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def offsets(self) -> np.ndarray:
        return self.space.offsets

    @property
    def ndofs(self) -> int:
        return self.space.ndofs


@dataclass
class _Block:
    """Result of one assembly task: a global-size matrix piece plus vectors."""

    stiff: sp.csr_matrix | None = None
    pen: sp.csr_matrix | None = None
    mass: sp.csr_matrix | None = None
    rhs: np.ndarray | None = None
    mean: np.ndarray | None = None


def _embed(m: sp.csr_matrix, offset: int, n: int) -> sp.csr_matrix:
    m = m.tocoo()
    return sp.csr_matrix((m.data, (m.row + offset, m.col + offset)), shape=(n, n))


def _volume_task(ps: PatchSpace, alpha: float, f: ScalarFn, nq: int, n: int, with_mass: bool) -> _Block:
    pat = band_pattern(ps.shape, ps.degree)
    data = np.zeros(pat.nnz)
    mdata = np.zeros(pat.nnz) if with_mass else None
    rhs = np.zeros(n)
    mean = np.zeros(n)
    for ch in element_chunks(ps, nq):
        loc = ch.gidx - ps.offset
        pat.accumulate(ch.grads, ch.grads, alpha * ch.w, loc, loc, data)
        if mdata is not None:
            pat.accumulate(ch.vals[..., None], ch.vals[..., None], ch.w, loc, loc, mdata)
        E, Q, D = ch.x.shape
        fx = np.asarray(f(ch.x.reshape(-1, D)), dtype=np.float64).reshape(E, Q)
        rhs += np.bincount(ch.gidx.ravel(), np.einsum("eq,eqa->ea", ch.w * fx, ch.vals).ravel(), minlength=n)
        mean += np.bincount(ch.gidx.ravel(), np.einsum("eq,eqa->ea", ch.w, ch.vals).ravel(), minlength=n)
    stiff = _embed(pat.matrix(data), ps.offset, n)
    mass = _embed(pat.matrix(mdata), ps.offset, n) if mdata is not None else None
    return _Block(stiff=stiff, mass=mass, rhs=rhs, mean=mean)


def _face_forms(n, rows, jump, flux, sigma, w, rhs_coef=None) -> _Block:
    """Assemble flux/penalty couplings from per-point jump and flux features."""
    pat = Pattern.from_local_sets(n, rows)
    P, m = jump.shape
    A = np.stack([jump, flux, jump], axis=-1)[:, None]
    B = np.stack([-flux, -jump, sigma[:, None] * jump], axis=-1)[:, None]
    data = np.zeros(pat.nnz)
    pat.accumulate(A, B, w[:, None], rows, rows, data)
    pdata = np.zeros(pat.nnz)
    pat.accumulate(jump[:, None, :, None], (sigma[:, None] * jump)[:, None, :, None], w[:, None], rows, rows, pdata)
    block = _Block(stiff=pat.matrix(data), pen=pat.matrix(pdata))
    if rhs_coef is not None:
        block.rhs = np.bincount(rows.ravel(), rhs_coef.ravel(), minlength=n)
    return block


def _interface_task(space: DiscreteSpace, glue, mu: float, nq: int, hmode, n: int) -> _Block:
    dom = space.domain
    psa, psb = space.patches[glue.a], space.patches[glue.b]
    fq = interface_quadrature(dom, glue, nq, psa.breaks(), psb.breaks())
    a = face_points(psa, fq.side_a, fq.coords_a)
    b = face_points(psb, fq.side_b, fq.coords_b, fq.b_transpose)
    al_a, al_b = dom.alphas[glue.a], dom.alphas[glue.b]
    ha, hb = (a.h, b.h) if hmode is None else (hmode[glue.a], hmode[glue.b])
    sigma = mu * (al_a / ha + al_b / hb) * np.ones(fq.n_points)
    jump = np.concatenate([a.vals, -b.vals], axis=1)
    flux = 0.5 * np.concatenate(
        [al_a * np.einsum("pad,pd->pa", a.grads, a.normal), al_b * np.einsum("pad,pd->pa", b.grads, a.normal)],
        axis=1,
    )
    rows = np.concatenate([a.gidx, b.gidx], axis=1)
    return _face_forms(n, rows, jump, flux, sigma, fq.weights)


def _boundary_task(space: DiscreteSpace, i: int, side: Side, mu, nq, hmode, uD, nitsche, n) -> _Block:
    ps = space.patches[i]
    fq = boundary_quadrature(ps.patch, side, nq, ps.breaks(), i)
    a = face_points(ps, side, fq.coords_a)
    al = space.domain.alphas[i]
    h = a.h if hmode is None else hmode[i]
    sigma = mu * al / h * np.ones(fq.n_points)
    flux = al * np.einsum("pad,pd->pa", a.grads, a.normal)
    g = np.asarray(uD(a.x), dtype=np.float64)
    coef = fq.weights[:, None] * g[:, None] * (sigma[:, None] * a.vals - (flux if nitsche else 0.0))
    return _face_forms(n, a.gidx, a.vals, flux, sigma, fq.weights, coef)


def assemble(
    spec: ProblemSpec,
    level: int,
    degree: int,
    quad: int | None = None,
    threads: int | None = None,
    with_mass: bool = False,
    space: DiscreteSpace | None = None,
) -> DGSystem:
    """Assemble the penalty system at refinement ``level`` with splines of ``degree``.

    Work is split into one task per patch volume, interface and boundary
    side. Results are summed in task order, so the matrix is bitwise
    independent of the thread count.
    """
    if space is None:
        space = build_space(spec.domain, degree, level, spec.spans, spec.grading)
    n = space.ndofs
    dom = spec.domain
    nq = degree + 1 if quad is None else int(quad)
    mu = default_penalty(degree, dom.dim) if spec.penalty is None else float(spec.penalty)
    hmode = None
    if spec.penalty_length == "patch":
        hmode = [patch_mesh_size(ps) for ps in space.patches]
    tasks: list[Callable[[], _Block]] = []
    for ps in space.patches:
        tasks.append(lambda ps=ps: _volume_task(ps, dom.alphas[ps.index], spec.f, nq, n, with_mass))
    for glue in dom.interfaces:
        tasks.append(lambda g=glue: _interface_task(space, g, mu, nq, hmode, n))
    if dom.boundary:
        for i, side in dom.boundary:
            tasks.append(
                lambda i=i, s=side: _boundary_task(
                    space, i, s, mu, nq, hmode, spec.dirichlet, spec.nitsche_rhs_consistency, n
                )
            )
    nthreads = thread_count(threads)
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            blocks = list(pool.map(lambda t: t(), tasks))
    else:
        blocks = [t() for t in tasks]
    stiff = sp.csr_matrix((n, n))
    pen = sp.csr_matrix((n, n))
    mass = sp.csr_matrix((n, n)) if with_mass else None
    rhs = np.zeros(n)
    mean = np.zeros(n)
    vol = sp.csr_matrix((n, n))
    for b in blocks:
        if b.stiff is not None:
            if b.pen is None:
                vol = vol + b.stiff
            else:
                stiff = stiff + b.stiff
                pen = pen + b.pen
        if b.mass is not None and mass is not None:
            mass = mass + b.mass
        if b.rhs is not None:
            rhs += b.rhs
        if b.mean is not None:
            mean += b.mean
    K = (vol + stiff).tocsr()
    Dn = (vol + pen).tocsr()
    for m in (K, Dn):
        m.sort_indices()
    return DGSystem(
        matrix=K,
        rhs=rhs,
        space=space,
        norm_matrix=Dn,
        mean_vector=mean,
        constraint=mean.copy() if spec.constraint == "zero-mean" else None,
        penalty=mu,
        spec=spec,
        quad=nq,
        mass=mass.tocsr() if mass is not None else None,
    )


def coercivity_probe(system: DGSystem, n_samples: int = 32, seed: int = 0) -> float:
    """Smallest ``v^T K v / v^T D v`` over random coefficient vectors."""
    rng = np.random.default_rng(seed)
    K, D = system.matrix, system.norm_matrix
    best = math.inf
    for _ in range(n_samples):
        v = rng.standard_normal(system.ndofs)
        den = float(v @ (D @ v))
        if den > 0:
            best = min(best, float(v @ (K @ v)) / den)
    return best


@dataclass
class DiscreteField:
    """A coefficient vector interpreted in a discrete space."""

    space: DiscreteSpace
    coeffs: np.ndarray

    def eval_grid(self, patch: int, coords) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values ``(*G)``, gradients ``(*G, D)`` and points ``(*G, D)`` on a grid."""
        fg = eval_space_grid(self.space.patches[patch], coords)
        c = self.coeffs[fg.gidx]
        return np.einsum("...a,...a->...", c, fg.vals), np.einsum("...a,...ad->...d", c, fg.grads), fg.x
