"""Error norms, predicted and observed convergence rates, and study drivers."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    DGSystem,
    DiscreteField,
    ProblemSpec,
    assemble,
    build_space,
    element_chunks,
    face_points,
    patch_mesh_size,
    prolongation,
)
from .errors import ConfigError, DomainError
from .linalg import SolveReport, solve_system
from .quadrature import boundary_quadrature, interface_quadrature

RATE_FLOOR = 1e-11


@dataclass(frozen=True)
class ErrorNorms:
    """L2 and energy-norm errors; ``dg**2 == volume + interface + boundary``."""

    l2: float
    dg: float
    volume: float = 0.0
    interface: float = 0.0
    boundary: float = 0.0


@dataclass(frozen=True)
class ConvergenceRecord:
    level: int
    dofs: int
    l2_error: float
    l2_rate: float | None
    dg_error: float
    dg_rate: float | None


def error_norms(system: DGSystem, coeffs: np.ndarray, quad: int | None = None) -> ErrorNorms:
    """Errors of ``coeffs`` against the exact solution of ``system.spec``.

    Integrals use ``degree + 3`` Gauss points per direction unless ``quad``
    is given. The energy norm weights the broken gradient error by the
    diffusion coefficient and adds the penalised interface jumps and
    boundary misfit with the same penalty weights as the assembled form.
    """
    spec = system.spec
    if spec.exact is None or spec.exact_grad is None:
        raise ConfigError("problem has no exact solution to compare against")
    space = system.space
    dom = spec.domain
    nq = space.degree + 3 if quad is None else int(quad)
    mu = system.penalty
    hmode = [patch_mesh_size(ps) for ps in space.patches] if spec.penalty_length == "patch" else None
    c = np.asarray(coeffs, dtype=np.float64)
    l2 = vol = 0.0
    for ps in space.patches:
        alpha = dom.alphas[ps.index]
        for ch in element_chunks(ps, nq):
            cl = c[ch.gidx][:, None, :]
            uh = np.einsum("eqa,eqa->eq", np.broadcast_to(cl, ch.vals.shape), ch.vals)
            gh = np.einsum("eqa,eqad->eqd", np.broadcast_to(cl, ch.vals.shape), ch.grads)
            E, Q, D = ch.x.shape
            pts = ch.x.reshape(-1, D)
            u = np.asarray(spec.exact(pts)).reshape(E, Q)
            gu = np.asarray(spec.exact_grad(pts)).reshape(E, Q, D)
            l2 += math.fsum((ch.w * (uh - u) ** 2).ravel())
            vol += alpha * math.fsum((ch.w * np.sum((gh - gu) ** 2, axis=-1)).ravel())
    jump = 0.0
    for glue in dom.interfaces:
        psa, psb = space.patches[glue.a], space.patches[glue.b]
        fq = interface_quadrature(dom, glue, nq, psa.breaks(), psb.breaks())
        a = face_points(psa, fq.side_a, fq.coords_a)
        b = face_points(psb, fq.side_b, fq.coords_b, fq.b_transpose)
        ha, hb = (a.h, b.h) if hmode is None else (hmode[glue.a], hmode[glue.b])
        sigma = mu * (dom.alphas[glue.a] / ha + dom.alphas[glue.b] / hb)
        ja = np.einsum("pa,pa->p", c[a.gidx], a.vals) - np.einsum("pa,pa->p", c[b.gidx], b.vals)
        jump += math.fsum(fq.weights * sigma * ja**2)
    bnd = 0.0
    for i, side in dom.boundary:
        ps = space.patches[i]
        fq = boundary_quadrature(ps.patch, side, nq, ps.breaks(), i)
        a = face_points(ps, side, fq.coords_a)
        h = a.h if hmode is None else hmode[i]
        sigma = mu * dom.alphas[i] / h
        mis = np.asarray(spec.dirichlet(a.x)) - np.einsum("pa,pa->p", c[a.gidx], a.vals)
        bnd += math.fsum(fq.weights * sigma * mis**2)
    return ErrorNorms(math.sqrt(l2), math.sqrt(vol + jump + bnd), vol, jump, bnd)


def predicted_rate(kind: str, *, k: int, norm: str = "dg", l: float | None = None, p: float | None = None,
                   d: int | None = None, lam: float | None = None, mu: float | None = None) -> float:
    """Expected asymptotic rate in mesh-halving steps.

    ``kind`` is ``"smooth"`` (``k`` in the energy norm, ``k + 1`` in L2),
    ``"low_regularity"`` (``min(k, l + d/2 - d/p - 1)`` for a solution in
    ``W^{l,p}``) or ``"graded"`` (``min(k, lam/mu)`` for a corner
    singularity ``r^lam`` on a mesh graded with exponent ``mu``).
    """
    if k < 1:
        raise DomainError("degree must be at least 1")
    if norm not in ("dg", "l2"):
        raise DomainError(f"unknown norm {norm!r}")
    if kind == "smooth":
        return float(k + 1 if norm == "l2" else k)
    if kind == "low_regularity":
        if l is None or p is None or d is None:
            raise DomainError("low-regularity rate needs l, p and d")
        if p <= 1 or l < 1 or d < 1:
            raise DomainError("need p > 1, l >= 1 and d >= 1")
        delta = l + d / 2 - d / p - 1
        if delta <= 0:
            raise DomainError(f"regularity index {delta:.3f} gives no convergence")
        return float(min(k, delta))
    if kind == "graded":
        if lam is None or mu is None:
            raise DomainError("graded rate needs lam and mu")
        if not 0 < mu <= 1 or lam <= 0:
            raise DomainError("need 0 < mu <= 1 and lam > 0")
        return float(min(k, lam / mu))
    raise DomainError(f"unknown rate kind {kind!r}")


def observed_rate(coarse: float, fine: float, floor: float = RATE_FLOOR) -> float | None:
    """``log2(coarse / fine)``, or ``None`` when either error is at round-off level."""
    if not (coarse > floor and fine > floor):
        return None
    return math.log2(coarse / fine)


def rate_table(levels, dofs, l2_errors, dg_errors) -> list[ConvergenceRecord]:
    """Attach observed rates between consecutive levels."""
    out = []
    for i, (lv, n, e0, e1) in enumerate(zip(levels, dofs, l2_errors, dg_errors)):
        r0 = observed_rate(l2_errors[i - 1], e0) if i else None
        r1 = observed_rate(dg_errors[i - 1], e1) if i else None
        out.append(ConvergenceRecord(int(lv), int(n), float(e0), r0, float(e1), r1))
    return out


@dataclass
class LevelResult:
    level: int
    system: DGSystem
    coeffs: np.ndarray
    report: SolveReport
    errors: ErrorNorms | None = None
    seconds: dict[str, float] = field(default_factory=dict)


def solve_level(
    spec: ProblemSpec,
    degree: int,
    level: int,
    *,
    quad: int | None = None,
    error_quad: int | None = None,
    tol: float = 1e-11,
    maxit: int | None = None,
    threads: int | None = None,
    solver: str = "auto",
    with_mass: bool = False,
    compute_errors: bool = True,
) -> LevelResult:
    t0 = time.perf_counter()
    system = assemble(spec, level, degree, quad=quad, threads=threads, with_mass=with_mass)
    t1 = time.perf_counter()
    coeffs, report = solve_system(system.matrix, system.rhs, system.constraint, tol=tol, maxit=maxit, method=solver)
    t2 = time.perf_counter()
    errors = error_norms(system, coeffs, error_quad) if compute_errors and spec.exact is not None else None
    t3 = time.perf_counter()
    return LevelResult(level, system, coeffs, report, errors, {"assemble": t1 - t0, "solve": t2 - t1, "errors": t3 - t2})


def convergence_study(spec: ProblemSpec, degree: int, levels, **kw) -> tuple[list[ConvergenceRecord], list[LevelResult]]:
    """Solve on each level and tabulate errors against the exact solution."""
    results: list[LevelResult] = []
    for lv in levels:
        if results:  # keep memory flat; only the finest level stays intact
            prev = results[-1]
            prev.system.matrix = prev.system.norm_matrix = prev.system.mass = None  # type: ignore[assignment]
            prev.coeffs = np.empty(0)
        results.append(solve_level(spec, degree, lv, **kw))
    recs = rate_table(
        [r.level for r in results],
        [r.system.space.ndofs for r in results],
        [r.errors.l2 for r in results],
        [r.errors.dg for r in results],
    )
    return recs, results


def reference_study(
    spec: ProblemSpec, degree: int, levels, reference_level: int, **kw
) -> tuple[list[ConvergenceRecord], LevelResult]:
    """Compare each level with a finer reference solution.

    Coarse solutions are embedded exactly into the reference space by knot
    insertion; the differences are measured with the reference level's mass
    and energy-norm matrices.
    """
    levels = list(levels)
    if reference_level <= max(levels):
        raise ConfigError("reference level must be finer than all compared levels")
    kw = {k: v for k, v in kw.items() if k not in ("with_mass", "compute_errors")}
    ref = solve_level(spec, degree, reference_level, with_mass=True, compute_errors=False, **kw)
    M, D = ref.system.mass, ref.system.norm_matrix
    l2s, dgs, dofs = [], [], []
    for lv in levels:
        r = solve_level(spec, degree, lv, compute_errors=False, **kw)
        P = prolongation(r.system.space, ref.system.space)
        e = P @ r.coeffs - ref.coeffs
        l2s.append(math.sqrt(max(float(e @ (M @ e)), 0.0)))
        dgs.append(math.sqrt(max(float(e @ (D @ e)), 0.0)))
        dofs.append(r.system.ndofs)
    return rate_table(levels, dofs, l2s, dgs), ref


def space_size(spec: ProblemSpec, degree: int, level: int) -> int:
    """Number of unknowns without assembling anything."""
    return build_space(spec.domain, degree, level, spec.spans, spec.grading).ndofs


def field_of(result: LevelResult) -> DiscreteField:
    return DiscreteField(result.system.space, result.coeffs)
