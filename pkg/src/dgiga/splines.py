"""Univariate and tensor-product B-spline bases.

Knot vectors are open (first and last knot repeated ``degree + 1`` times)
and normalised to ``[0, 1]`` by the geometry builders. Evaluation goes
through the batched kernels in :mod:`dgiga.kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigError, DomainError

_SPAN_TOL = 1e-12


class KnotVector:
    """Non-decreasing open knot vector of a given degree."""

    __slots__ = ("knots", "degree")

    def __init__(self, knots, degree: int) -> None:
        t = np.array(knots, dtype=np.float64)
        if degree < 0:
            raise ConfigError(f"degree must be non-negative, got {degree}")
        if t.ndim != 1 or t.size < 2 * (degree + 1):
            raise ConfigError("knot vector too short for its degree")
        if np.any(np.diff(t) < 0):
            raise ConfigError("knot vector must be non-decreasing")
        if not np.all(t[: degree + 1] == t[0]) or not np.all(t[-degree - 1 :] == t[-1]):
            raise ConfigError("knot vector must be open (end multiplicity degree+1)")
        if t[0] == t[-1]:
            raise ConfigError("knot vector spans an empty interval")
        if t[degree + 1] == t[0] or t[-degree - 2] == t[-1]:
            raise ConfigError("end knot multiplicity exceeds degree+1")
        _, counts = np.unique(t[degree + 1 : -degree - 1], return_counts=True)
        if counts.size and counts.max() > degree + 1:
            raise ConfigError("interior knot multiplicity exceeds degree+1")
        t.flags.writeable = False
        self.knots = t
        self.degree = int(degree)

    @classmethod
    def open_uniform(cls, n_spans: int, degree: int, lo: float = 0.0, hi: float = 1.0) -> KnotVector:
        inner = np.linspace(lo, hi, n_spans + 1)[1:-1]
        return cls(np.r_[[lo] * (degree + 1), inner, [hi] * (degree + 1)], degree)

    @classmethod
    def from_breakpoints(cls, breaks, degree: int, mults=None) -> KnotVector:
        """Open knot vector with the given breakpoints and interior multiplicities."""
        b = np.asarray(breaks, dtype=np.float64)
        m = np.ones(b.size - 2, dtype=int) if mults is None else np.asarray(mults, dtype=int)
        inner = np.repeat(b[1:-1], m)
        return cls(np.r_[[b[0]] * (degree + 1), inner, [b[-1]] * (degree + 1)], degree)

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    def interior_multiplicities(self) -> tuple[np.ndarray, np.ndarray]:
        """Interior breakpoints and how often each is repeated."""
        vals, counts = np.unique(self.knots[self.degree + 1 : -self.degree - 1], return_counts=True)
        return vals, counts

    def n_spans(self) -> int:
        return self.breakpoints().size - 1

    def find_span(self, x: float) -> int:
        self._check_domain(np.atleast_1d(x))
        return int(kernels.find_spans(self.knots, self.degree, np.atleast_1d(float(x)))[0])

    def _check_domain(self, x: np.ndarray) -> None:
        lo, hi = self.domain
        width = hi - lo
        if np.any(x < lo - _SPAN_TOL * width) or np.any(x > hi + _SPAN_TOL * width) or np.any(~np.isfinite(x)):
            bad = x[(x < lo - _SPAN_TOL * width) | (x > hi + _SPAN_TOL * width) | ~np.isfinite(x)][0]
            raise DomainError(f"parameter {bad!r} outside knot range [{lo}, {hi}]")

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, KnotVector)
            and self.degree == other.degree
            and self.knots.shape == other.knots.shape
            and bool(np.all(self.knots == other.knots))
        )

    def __hash__(self) -> int:
        return hash((self.degree, self.knots.tobytes()))

    def __repr__(self) -> str:
        return f"KnotVector(degree={self.degree}, n={self.n}, spans={self.n_spans()})"


@dataclass(frozen=True)
class TensorBasis:
    """Tensor product of univariate bases, optionally with rational weights."""

    knots: tuple[KnotVector, ...]
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "knots", tuple(self.knots))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != self.shape:
                raise ConfigError(f"weights shape {w.shape} does not match basis shape {self.shape}")
            if np.any(w <= 0):
                raise ConfigError("rational weights must be positive")
            object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return len(self.knots)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(kv.n for kv in self.knots)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(kv.degree for kv in self.knots)


@dataclass(frozen=True)
class GradingConfig:
    """Mesh grading toward one corner of the parameter domain.

    ``singular_corner`` gives, per parametric direction, the end (0 or 1)
    the mesh is graded toward, or ``None`` to leave that direction uniform.
    Breakpoints follow ``(j/n) ** (1/mu_grading)`` measured from that end.
    """

    mu_grading: float
    singular_corner: tuple[int | None, ...] | int = 0
    lam: float | None = None
    levels: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.mu_grading <= 1.0:
            raise ConfigError(f"grading exponent must lie in (0, 1], got {self.mu_grading}")
        if self.lam is not None and not 0.0 < self.lam < 1.0:
            raise ConfigError(f"singular exponent must lie in (0, 1), got {self.lam}")
        if self.levels < 0:
            raise ConfigError("levels must be non-negative")

    def corner(self, axis: int) -> int | None:
        c = self.singular_corner
        if isinstance(c, int):
            return c
        return c[axis]


def eval_basis(kv: KnotVector, x: float) -> tuple[int, np.ndarray]:
    """First active index and the ``degree + 1`` nonzero values at ``x``."""
    first, table = eval_basis_derivs(kv, x, 0)
    return first, table[0]


def eval_basis_derivs(kv: KnotVector, x: float, m: int) -> tuple[int, np.ndarray]:
    """Derivatives of order ``0..m`` of the active functions at ``x``.

    Rows above the degree are identically zero.
    """
    if m < 0:
        raise DomainError("derivative order must be non-negative")
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    kv._check_domain(xa)
    first, ders = kernels.basis_ders(kv.knots, kv.degree, np.clip(xa, *kv.domain), m)
    return int(first[0]), ders[0]


def basis_table(kv: KnotVector, xs, m: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`eval_basis_derivs`: ``first (n,)`` and ``ders (n, m+1, degree+1)``."""
    xa = np.ascontiguousarray(np.atleast_1d(np.asarray(xs, dtype=np.float64)))
    kv._check_domain(xa)
    return kernels.basis_ders(kv.knots, kv.degree, np.clip(xa, *kv.domain), m)


def dense_basis(kv: KnotVector, xs, m: int = 1) -> np.ndarray:
    """All basis functions at ``xs`` as a dense ``(m+1, n_pts, n)`` array."""
    first, ders = basis_table(kv, xs, m)
    npt = first.size
    out = np.zeros((m + 1, npt, kv.n))
    cols = first[:, None] + np.arange(kv.degree + 1)
    for order in range(m + 1):
        out[order, np.arange(npt)[:, None], cols] = ders[:, order, :]
    return out


def tensor_eval(basis: TensorBasis, point) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Active functions of a tensor basis at one point.

    Returns multi-indices ``(A, d)``, values ``(A,)`` and parametric
    gradients ``(A, d)``. With weights, the rational functions are returned.
    """
    pt = np.asarray(point, dtype=np.float64)
    if pt.shape != (basis.dim,):
        raise DomainError(f"point must have {basis.dim} coordinates")
    firsts, tables = [], []
    for kv, x in zip(basis.knots, pt):
        f, t = eval_basis_derivs(kv, x, 1)
        firsts.append(f)
        tables.append(t)
    locs = list(product(*[range(kv.degree + 1) for kv in basis.knots]))
    idx = np.array([[firsts[d] + a[d] for d in range(basis.dim)] for a in locs], dtype=np.int64)
    vals = np.array([math.prod(tables[d][0, a[d]] for d in range(basis.dim)) for a in locs])
    grads = np.array(
        [
            [
                math.prod(tables[d][1 if d == g else 0, a[d]] for d in range(basis.dim))
                for g in range(basis.dim)
            ]
            for a in locs
        ]
    ).reshape(len(locs), basis.dim)
    if basis.weights is not None:
        w = basis.weights[tuple(idx.T)]
        num = vals * w
        dnum = grads * w[:, None]
        W = num.sum()
        dW = dnum.sum(axis=0)
        vals = num / W
        grads = (dnum - vals[:, None] * dW[None, :]) / W
    return idx, vals, grads


def subdivide(kv: KnotVector, m: int) -> KnotVector:
    """Split every nonempty span into ``m`` equal parts with single new knots."""
    if m < 1:
        raise ConfigError("subdivision factor must be at least 1")
    if m == 1:
        return kv
    b = kv.breakpoints()
    new = (b[:-1, None] + (b[1:] - b[:-1])[:, None] * (np.arange(1, m) / m)[None, :]).ravel()
    return KnotVector(np.sort(np.r_[kv.knots, new]), kv.degree)


def h_refine(kv: KnotVector, times: int = 1) -> KnotVector:
    """Bisect every span ``times`` times."""
    if times < 0:
        raise ConfigError("refinement count must be non-negative")
    return subdivide(kv, 2**times)


def graded_breakpoints(n_spans: int, mu_grading: float, corner: int = 0) -> np.ndarray:
    """Breakpoints ``(j/n)^(1/mu)`` on ``[0, 1]``, mirrored when the corner is 1."""
    if n_spans < 1:
        raise ConfigError("need at least one span")
    b = (np.arange(n_spans + 1) / n_spans) ** (1.0 / mu_grading)
    b[0], b[-1] = 0.0, 1.0
    if corner == 1:
        b = 1.0 - b[::-1]
        b[0], b[-1] = 0.0, 1.0
    return b


def graded_knots(n_spans: int, cfg: GradingConfig, degree: int = 1, axis: int = 0) -> KnotVector:
    """Open knot vector on ``[0, 1]`` graded toward ``cfg``'s corner along ``axis``."""
    corner = cfg.corner(axis)
    if corner is None:
        return KnotVector.open_uniform(n_spans, degree)
    return KnotVector.from_breakpoints(graded_breakpoints(n_spans, cfg.mu_grading, corner), degree)


def field_knots(
    geometry: KnotVector,
    degree: int,
    multiplier: int,
    grading: GradingConfig | None = None,
    axis: int = 0,
) -> KnotVector:
    """Discretisation knots built on top of a geometry knot vector.

    Every geometry span is split into ``multiplier`` equal parts (or, with
    grading, the graded breakpoints are merged in). At a geometry knot with
    continuity ``c`` the result keeps continuity ``min(degree - 1, c)``;
    added knots are simple.
    """
    vals, counts = geometry.interior_multiplicities()
    geo_cont = {float(v): geometry.degree - int(c) for v, c in zip(vals, counts)}
    if grading is not None and grading.corner(axis) is not None:
        lo, hi = geometry.domain
        gb = lo + (hi - lo) * graded_breakpoints(multiplier, grading.mu_grading, grading.corner(axis))
        breaks = np.union1d(gb, geometry.breakpoints())
    else:
        breaks = subdivide(KnotVector.from_breakpoints(geometry.breakpoints(), 1), multiplier).breakpoints()
    mults = []
    for b in breaks[1:-1]:
        c = geo_cont.get(float(b))
        mults.append(1 if c is None else degree - min(degree - 1, c))
    return KnotVector.from_breakpoints(breaks, degree, mults)


def insertion_matrix(coarse: KnotVector, fine: KnotVector) -> sp.csr_matrix:
    """Matrix ``T`` with ``c_fine = T @ c_coarse`` for nested spline spaces.

    Built by inserting the missing knots one at a time.
    """
    if coarse.degree != fine.degree or coarse.domain != fine.domain:
        raise ConfigError("knot vectors must share degree and domain")
    missing = _knot_difference(coarse.knots, fine.knots)
    p = coarse.degree
    U = coarse.knots.copy()
    T = sp.identity(coarse.n, format="csr")
    for t in missing:
        n = U.size - p - 1
        k = int(np.searchsorted(U, t, side="right") - 1)
        k = min(max(k, p), n - 1)
        rows, cols, vals = [], [], []
        for i in range(n + 1):
            if i <= k - p:
                rows.append(i), cols.append(i), vals.append(1.0)
            elif i >= k + 1:
                rows.append(i), cols.append(i - 1), vals.append(1.0)
            else:
                a = (t - U[i]) / (U[i + p] - U[i])
                rows += [i, i]
                cols += [i, i - 1]
                vals += [a, 1.0 - a]
        step = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))
        T = (step @ T).tocsr()
        U = np.insert(U, k + 1, t)
    if not np.array_equal(U, fine.knots):
        raise ConfigError("fine knot vector does not contain the coarse one")
    T.eliminate_zeros()
    return T


def greville(kv: KnotVector) -> np.ndarray:
    """Knot averages; interpolation there is uniquely solvable."""
    p = kv.degree
    if p == 0:
        return 0.5 * (kv.knots[:-1] + kv.knots[1:])
    t = kv.knots
    return np.array([t[i + 1 : i + p + 1].mean() for i in range(kv.n)])


def transfer_matrix(coarse: KnotVector, fine: KnotVector) -> np.ndarray:
    """Dense ``T`` with ``c_fine = T @ c_coarse`` when ``fine`` spans ``coarse``.

    Unlike :func:`insertion_matrix` the degrees may differ, so this covers
    degree elevation. Found by interpolation at the fine Greville points.
    """
    if coarse.domain != fine.domain or fine.degree < coarse.degree:
        raise ConfigError("fine space cannot contain the coarse one")
    g = greville(fine)
    A = dense_basis(fine, g, 0)[0]
    B = dense_basis(coarse, g, 0)[0]
    T = np.linalg.solve(A, B)
    # the difference is piecewise polynomial on the merged spans, so
    # degree + 1 samples per span decide containment
    br = np.union1d(coarse.breakpoints(), fine.breakpoints())
    s = np.linspace(0.1, 0.9, fine.degree + 1)
    xs = (br[:-1, None] + s[None, :] * np.diff(br)[:, None]).ravel()
    if not np.allclose(dense_basis(fine, xs, 0)[0] @ T, dense_basis(coarse, xs, 0)[0], atol=1e-10):
        raise ConfigError("fine space does not contain the coarse one")
    return T


def _knot_difference(coarse: np.ndarray, fine: np.ndarray) -> list[float]:
    cv, cc = np.unique(coarse, return_counts=True)
    fv, fc = np.unique(fine, return_counts=True)
    have = dict(zip(cv.tolist(), cc.tolist()))
    out: list[float] = []
    for v, c in zip(fv.tolist(), fc.tolist()):
        extra = c - have.pop(v, 0)
        if extra < 0:
            raise ConfigError("fine knot vector does not contain the coarse one")
        out += [v] * extra
    if have:
        raise ConfigError("fine knot vector does not contain the coarse one")
    return out
