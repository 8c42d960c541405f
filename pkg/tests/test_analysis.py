import math

import numpy as np
import pytest
import scipy.linalg as sla
from scipy import integrate

from dgiga.analysis import (
    convergence_study,
    error_norms,
    observed_rate,
    predicted_rate,
    rate_table,
    reference_study,
    space_size,
)
from dgiga.assembly import assemble, build_space, element_chunks, face_points, patch_mesh_size
from dgiga.errors import ConfigError, DomainError
from dgiga.problems import get_case
from dgiga.quadrature import boundary_quadrature
from dgiga.splines import KnotVector, dense_basis, transfer_matrix


def test_observed_rate_and_floor():
    assert observed_rate(1.0, 0.25) == pytest.approx(2.0)
    assert observed_rate(1e-13, 1e-14) is None
    assert observed_rate(1.0, 0.0) is None


def test_rate_table_first_row_has_no_rate():
    recs = rate_table([0, 1, 2], [4, 16, 64], [1.0, 0.25, 0.0625], [1.0, 0.5, 0.25])
    assert recs[0].l2_rate is None and recs[0].dg_rate is None
    assert [r.l2_rate for r in recs[1:]] == pytest.approx([2.0, 2.0])
    assert [r.dg_rate for r in recs[1:]] == pytest.approx([1.0, 1.0])
    assert recs[2].dofs == 64


def test_error_norms_of_zero_field_match_quadrature_oracle():
    case = get_case("patch_test", dim=2, degree=2)
    sysm = assemble(case.problem(), 1, 2)
    err = error_norms(sysm, np.zeros(sysm.ndofs))

    def u(y, x):
        return float(case.exact(np.array([[x, y]]))[0])

    def grad2(y, x):
        return float(np.sum(case.exact_grad(np.array([[x, y]]))[0] ** 2))

    l2, _ = integrate.dblquad(lambda y, x: u(y, x) ** 2, -1, 1, 0, 1, epsabs=1e-12)
    h1, _ = integrate.dblquad(grad2, -1, 1, 0, 1, epsabs=1e-12)
    assert err.l2 == pytest.approx(math.sqrt(l2), rel=1e-10)
    assert err.volume == pytest.approx(h1, rel=1e-10)
    assert err.interface == 0.0
    assert err.dg**2 == pytest.approx(err.volume + err.interface + err.boundary, rel=1e-14)


def test_error_norm_parts_sum_for_discrete_solution():
    recs, res = convergence_study(get_case("two_patch_sine", ratio=3).problem(), 2, [1])
    e = res[-1].errors
    assert e.interface > 0 and e.boundary > 0
    assert e.dg**2 == pytest.approx(e.volume + e.interface + e.boundary, rel=1e-12)
    assert recs[0].dg_error == e.dg


def test_convergence_study_smooth_rates():
    recs, _ = convergence_study(get_case("smooth2d").problem(), 1, range(0, 4))
    assert [r.level for r in recs] == [0, 1, 2, 3]
    assert recs[-1].dg_rate == pytest.approx(1.0, abs=0.15)
    assert recs[-1].l2_rate == pytest.approx(2.0, abs=0.2)


def test_reference_study_errors_decrease():
    recs, ref = reference_study(get_case("torus_jump").problem(), 1, [0, 1, 2], 3)
    dg = [r.dg_error for r in recs]
    assert dg[0] > dg[1] > dg[2] > 0
    assert ref.level == 3
    with pytest.raises(ConfigError):
        reference_study(get_case("torus_jump").problem(), 1, [0, 1], 1)


def test_space_size_counts_without_assembly():
    spec = get_case("smooth2d").problem()
    assert space_size(spec, 2, 1) == assemble(spec, 1, 2).ndofs


@pytest.mark.parametrize(
    "kw",
    [
        {"kind": "smooth", "k": 0},
        {"kind": "smooth", "k": 1, "norm": "h1"},
        {"kind": "low_regularity", "k": 1, "l": 2},
        {"kind": "low_regularity", "k": 1, "l": 1, "p": 1.1, "d": 3},
        {"kind": "graded", "k": 1, "lam": 0.5, "mu": 1.5},
        {"kind": "magic", "k": 1},
    ],
)
def test_predicted_rate_rejects_bad_input(kw):
    with pytest.raises(DomainError):
        predicted_rate(**kw)


def test_predicted_rate_caps_at_degree():
    assert predicted_rate("graded", k=1, lam=2 / 3, mu=0.3) == 1.0
    assert predicted_rate("low_regularity", k=2, l=5, p=2, d=2) == 2.0


def test_transfer_matrix_reproduces_degree_elevation():
    coarse = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    fine = KnotVector([0, 0, 0, 0, 0.25, 0.5, 0.5, 0.75, 1, 1, 1, 1], 3)
    T = transfer_matrix(coarse, fine)
    xs = np.linspace(0, 1, 23)
    c = np.random.default_rng(2).standard_normal(coarse.n)
    np.testing.assert_allclose(dense_basis(fine, xs, 0)[0] @ (T @ c), dense_basis(coarse, xs, 0)[0] @ c, atol=1e-13)
    # no breakpoint at 0.5, so the coarse kink cannot be represented
    with pytest.raises(ConfigError):
        transfer_matrix(coarse, KnotVector.open_uniform(3, 3))


def test_dg_norm_is_definite_on_open_domains():
    sysm = assemble(get_case("two_patch_sine", ratio=2).problem(), 1, 2)
    D = sysm.norm_matrix
    rng = np.random.default_rng(8)
    for _ in range(20):
        c = rng.standard_normal(sysm.ndofs)
        assert c @ (D @ c) > 0
    assert np.linalg.eigvalsh(D.toarray())[0] > 0


def _patch_matrices(ps, side, nq):
    """Dense mass, gradient and boundary-trace Gram matrices of one patch space."""
    n = ps.ndofs
    M, G, T = np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n))
    for ch in element_chunks(ps, nq):
        idx = ch.gidx - ps.offset
        m = np.einsum("eq,eqa,eqb->eab", ch.w, ch.vals, ch.vals)
        g = np.einsum("eq,eqad,eqbd->eab", ch.w, ch.grads, ch.grads)
        for e in range(idx.shape[0]):
            block = np.ix_(idx[e], idx[e])
            M[block] += m[e]
            G[block] += g[e]
    fq = boundary_quadrature(ps.patch, side, nq, ps.breaks(), ps.index)
    a = face_points(ps, side, fq.coords_a)
    t = np.einsum("p,pa,pb->pab", fq.weights, a.vals, a.vals)
    for p, row in enumerate(a.gidx - ps.offset):
        T[np.ix_(row, row)] += t[p]
    return M, G, T


# sharp level-1 constants (largest generalized eigenvalues) frozen at calibration
SHARP = {
    ("two_patch_sine", 1): (4.9497, 6.9282),
    ("two_patch_sine", 2): (9.8995, 11.3456),
    ("lshape", 2): (17.1492, 23.4936),
    ("smooth3d", 2): (11.5776, 14.4114),
}


@pytest.mark.parametrize("name, k", list(SHARP))
def test_trace_and_inverse_inequalities(name, k):
    spec = get_case(name).problem()
    side = next(s for i, s in spec.domain.boundary if i == 0)
    frozen_trace, frozen_inverse = SHARP[(name, k)]
    for level in (1, 2):
        ps = build_space(spec.domain, k, level, spec.spans, spec.grading).patches[0]
        h = patch_mesh_size(ps)
        M, G, T = _patch_matrices(ps, side, k + 2)
        c_trace = h * sla.eigh(T, M, eigvals_only=True)[-1]
        c_inverse = h * math.sqrt(sla.eigh(G, M, eigvals_only=True)[-1])
        if level == 1:
            assert c_trace == pytest.approx(frozen_trace, rel=1e-3)
            assert c_inverse == pytest.approx(frozen_inverse, rel=1e-3)
        else:  # stable under one refinement
            assert c_trace <= 1.1 * frozen_trace and c_inverse <= 1.1 * frozen_inverse
        rng = np.random.default_rng(level)
        for _ in range(50):
            v = rng.standard_normal(ps.ndofs)
            mass = v @ M @ v
            assert h * (v @ T @ v) <= c_trace * mass * (1 + 1e-10)
            assert h * math.sqrt(v @ G @ v / mass) <= c_inverse * (1 + 1e-10)
