import math

import numpy as np
import pytest
import scipy.linalg as sla

from dgiga import _kernels_py, kernels
from dgiga.analysis import error_norms
from dgiga.assembly import (
    DiscreteField,
    ProblemSpec,
    assemble,
    build_space,
    coercivity_probe,
    default_penalty,
    prolongation,
)
from dgiga.errors import ConfigError
from dgiga.geometry import MultiPatchDomain, bilinear_patch, builtin_geometry
from dgiga.linalg import solve_system
from dgiga.problems import get_case


def _sym_error(m):
    d = abs(m - m.T)
    return (d.max() if d.nnz else 0.0) / abs(m).max()


@pytest.mark.parametrize(
    "case, params, k",
    [
        ("smooth2d", {}, 2),
        ("two_patch_sine", {"ratio": 3}, 2),
        ("smooth3d", {}, 1),
        ("lshape", {"grading": 0.5}, 2),
        ("sphere_lb", {}, 2),
        ("torus_jump", {}, 2),
    ],
)
def test_matrices_symmetric(case, params, k):
    sysm = assemble(get_case(case, **params).problem(), 0, k)
    assert _sym_error(sysm.matrix) < 1e-13
    assert _sym_error(sysm.norm_matrix) < 1e-13


@pytest.mark.parametrize("dim, k", [(1, 1), (1, 3), (2, 1), (2, 2), (2, 3), (3, 2)])
def test_patch_test_reproduces_polynomials(dim, k):
    case = get_case("patch_test", dim=dim, degree=k)
    sysm = assemble(case.problem(), 1, k)
    u, _ = solve_system(sysm.matrix, sysm.rhs, method="dense")
    assert error_norms(sysm, u).dg < 1e-9


def test_patch_test_with_coefficient_jump():
    case = get_case("patch_test", dim=2, jump=True)
    sysm = assemble(case.problem(), 1, 2)
    u, _ = solve_system(sysm.matrix, sysm.rhs, method="dense")
    assert error_norms(sysm, u).dg < 1e-9


def test_default_penalty_value():
    assert default_penalty(2, 2) == 12.0
    assert default_penalty(1, 3) == pytest.approx(16 / 3)


@pytest.mark.parametrize("case, k", [("two_patch_sine", 2), ("sphere_lb", 2), ("smooth3d", 1)])
def test_coercivity_probe_positive_at_default_penalty(case, k):
    sysm = assemble(get_case(case).problem(), 1 if case != "smooth3d" else 0, k)
    assert coercivity_probe(sysm, n_samples=16) > 0


def test_small_penalty_loses_coercivity():
    case = get_case("two_patch_sine", ratio=2)
    K_ok = assemble(case.problem(), 1, 2)
    K_bad = assemble(case.problem(penalty=0.01), 1, 2)
    lo_ok = sla.eigh(K_ok.matrix.toarray(), K_ok.norm_matrix.toarray(), eigvals_only=True)[0]
    lo_bad = sla.eigh(K_bad.matrix.toarray(), K_bad.norm_matrix.toarray(), eigvals_only=True)[0]
    assert lo_ok > 0
    assert lo_bad < 0


def test_thread_count_does_not_change_matrix():
    spec = get_case("smooth2d").problem()
    a = assemble(spec, 2, 2, threads=1)
    b = assemble(spec, 2, 2, threads=4)
    assert np.array_equal(a.matrix.indptr, b.matrix.indptr)
    assert np.array_equal(a.matrix.indices, b.matrix.indices)
    assert np.array_equal(a.matrix.data, b.matrix.data)
    assert np.array_equal(a.rhs, b.rhs)


def test_thread_count_from_environment(monkeypatch):
    from dgiga.assembly import thread_count

    monkeypatch.setenv("DGIGA_THREADS", "3")
    assert thread_count() == 3
    assert thread_count(2) == 2
    monkeypatch.setenv("DGIGA_THREADS", "0")
    with pytest.raises(ConfigError):
        thread_count()


def test_numpy_backend_gives_same_system(monkeypatch):
    spec = get_case("two_patch_sine", ratio=3).problem()
    ref = assemble(spec, 1, 2)
    for name in ("basis_ders", "accumulate", "find_spans"):
        monkeypatch.setattr(kernels, name, getattr(_kernels_py, name))
    alt = assemble(spec, 1, 2)
    diff = abs(ref.matrix - alt.matrix)
    assert (diff.max() if diff.nnz else 0.0) <= 1e-12 * abs(ref.matrix).max()
    np.testing.assert_allclose(alt.rhs, ref.rhs, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("name, k", [("sphere_lb", 2), ("sphere_lb", 4), ("torus_lb", 1), ("torus_lb", 2)])
def test_closed_surface_constants_in_kernel(name, k):
    # NURBS fields form a partition of unity, so constants are the ones vector
    sysm = assemble(get_case(name).problem(), 1, k, quad=8)
    ones = np.ones(sysm.ndofs)
    assert np.abs(sysm.matrix @ ones).max() < 1e-10 * abs(sysm.matrix).max()
    area = 4 * math.pi if name == "sphere_lb" else 8 * math.pi**2
    assert sysm.mean_vector.sum() == pytest.approx(area, rel=1e-8)


def test_rational_fields_follow_geometry_degree():
    dom = builtin_geometry("torus_4patch")  # quadratic NURBS
    assert not build_space(dom, 1).patches[0].rational
    assert build_space(dom, 2).patches[0].rational
    sph = builtin_geometry("sphere_6patch")  # quartic NURBS
    assert not build_space(sph, 3).patches[0].rational
    assert build_space(sph, 4).patches[0].rational


@pytest.mark.parametrize("name, k", [("two_patch_sine", 2), ("torus_lb", 2), ("lshape", 1)])
def test_prolongation_preserves_fields(name, k):
    case = get_case(name, grading=0.6) if name == "lshape" else get_case(name)
    spec = case.problem()
    coarse = build_space(spec.domain, k, 1, spec.spans, spec.grading)
    fine = build_space(spec.domain, k, 2, spec.spans, spec.grading)
    P = prolongation(coarse, fine)
    c = np.random.default_rng(0).standard_normal(coarse.ndofs)
    t = np.linspace(0, 1, 7)
    for i in range(len(spec.domain.patches)):
        v0, g0, _ = DiscreteField(coarse, c).eval_grid(i, [t, t])
        v1, g1, _ = DiscreteField(fine, P @ c).eval_grid(i, [t, t])
        np.testing.assert_allclose(v1, v0, atol=1e-12)
        np.testing.assert_allclose(g1, g0, atol=1e-10)


def _rotation():
    a, b = 0.7, -0.4
    Rz = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
    Rx = np.array([[1, 0, 0], [0, math.cos(b), -math.sin(b)], [0, math.sin(b), math.cos(b)]])
    return Rx @ Rz


def test_flat_surface_matches_planar_assembly():
    Q = _rotation()
    shift = np.array([0.3, -1.0, 2.0])
    corners = [
        ((-1, 0), (0, 0), (-1, 1), (0, 1)),
        ((0, 0), (1, 0.2), (0, 1), (1, 1)),
    ]

    def lift(p):
        return Q @ np.array([p[0], p[1], 0.0]) + shift

    flat = MultiPatchDomain.from_patches([bilinear_patch(*c) for c in corners])
    surf = MultiPatchDomain.from_patches([bilinear_patch(*[lift(p) for p in c]) for c in corners])

    def down(x):
        return ((x - shift) @ Q)[:, :2]

    def u2(x):
        return np.sin(x[:, 0]) * np.exp(x[:, 1])

    def f2(x):
        return np.zeros(x.shape[0])

    a = assemble(ProblemSpec(flat, f=f2, dirichlet=u2), 1, 2)
    b = assemble(ProblemSpec(surf, f=lambda x: f2(down(x)), dirichlet=lambda x: u2(down(x))), 1, 2)
    scale = abs(a.matrix).max()
    assert abs(a.matrix - b.matrix).max() < 1e-12 * scale
    np.testing.assert_allclose(b.rhs, a.rhs, atol=1e-12 * np.abs(a.rhs).max())


def test_problem_spec_validation():
    dom = builtin_geometry("unit_square_2patch")
    closed = builtin_geometry("torus_4patch")
    f = lambda x: np.zeros(len(x))  # noqa: E731
    with pytest.raises(ConfigError):
        ProblemSpec(dom, f)  # no boundary data
    with pytest.raises(ConfigError):
        ProblemSpec(closed, f)  # closed needs zero mean
    with pytest.raises(ConfigError):
        ProblemSpec(closed, f, dirichlet=f, constraint="zero-mean")
    with pytest.raises(ConfigError):
        ProblemSpec(dom, f, dirichlet=f, penalty=-1.0)
    with pytest.raises(ConfigError):
        ProblemSpec(dom, f, dirichlet=f, spans=((1, 1),))
    with pytest.raises(ConfigError):
        build_space(dom, 0)


def test_nitsche_flag_changes_only_rhs():
    case = get_case("lshape")
    a = assemble(case.problem(), 1, 2)
    b = assemble(case.problem(nitsche=False), 1, 2)
    assert abs(a.matrix - b.matrix).max() == 0
    assert np.abs(a.rhs - b.rhs).max() > 1e-6
