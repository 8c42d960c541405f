import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgiga.errors import ConfigError, DomainError
from dgiga.splines import (
    GradingConfig,
    KnotVector,
    TensorBasis,
    basis_table,
    dense_basis,
    eval_basis,
    eval_basis_derivs,
    field_knots,
    graded_breakpoints,
    graded_knots,
    h_refine,
    insertion_matrix,
    subdivide,
    tensor_eval,
)
from oracles import cox_de_boor_all


@st.composite
def knot_vectors(draw):
    degree = draw(st.integers(1, 4))
    n_inner = draw(st.integers(0, 6))
    inner = sorted(draw(st.lists(st.floats(0.01, 0.99), min_size=n_inner, max_size=n_inner)))
    # allow repeated knots up to the degree
    reps = [draw(st.integers(1, degree)) for _ in inner]
    uniq = []
    for v, r in zip(inner, reps):
        if uniq and abs(v - uniq[-1][0]) < 1e-3:
            continue
        uniq.append((v, r))
    knots = [0.0] * (degree + 1) + [v for v, r in uniq for _ in range(r)] + [1.0] * (degree + 1)
    return KnotVector(knots, degree)


def test_frozen_quadratic_values():
    # values from the recursive oracle, hand-checked: N0 = (1 - 0.6)^2
    kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    first, vals = eval_basis(kv, 0.3)
    assert first == 0
    np.testing.assert_allclose(vals, [0.16, 0.66, 0.18], atol=1e-15)


def test_frozen_cubic_at_double_knot():
    kv = KnotVector([0, 0, 0, 0, 0.25, 0.5, 0.5, 1, 1, 1, 1], 3)
    full = dense_basis(kv, [0.4, 0.5], 0)[0]
    np.testing.assert_allclose(full[0], [0, 0.016, 0.176, 0.736, 0.072, 0, 0], atol=1e-14)
    np.testing.assert_allclose(full[1], [0, 0, 0, 2 / 3, 1 / 3, 0, 0], atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(knot_vectors(), st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_matches_cox_de_boor(kv, xs):
    got = dense_basis(kv, xs, 0)[0]
    want = np.array([cox_de_boor_all(kv.knots, kv.degree, x) for x in xs])
    np.testing.assert_allclose(got, want, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(knot_vectors(), st.lists(st.floats(0, 1), min_size=1, max_size=16))
def test_partition_of_unity_and_nonnegativity(kv, xs):
    vals = dense_basis(kv, xs, 1)
    np.testing.assert_allclose(vals[0].sum(axis=1), 1.0, atol=1e-13)
    np.testing.assert_allclose(vals[1].sum(axis=1), 0.0, atol=1e-9)
    assert vals[0].min() >= -1e-14


@settings(max_examples=30, deadline=None)
@given(knot_vectors(), st.floats(0.02, 0.98))
def test_derivatives_match_finite_differences(kv, x):
    b = kv.breakpoints()
    h = 1e-6
    if np.min(np.abs(b - x)) < 10 * h:
        return
    d = dense_basis(kv, [x - h, x, x + h], 2)
    np.testing.assert_allclose(d[1, 1], (d[0, 2] - d[0, 0]) / (2 * h), atol=1e-5 * max(1, abs(d[1, 1]).max()))
    np.testing.assert_allclose(d[2, 1], (d[1, 2] - d[1, 0]) / (2 * h), atol=1e-4 * max(1, abs(d[2, 1]).max()))


def test_derivative_rows_above_degree_vanish():
    kv = KnotVector.open_uniform(3, 2)
    _, ders = eval_basis_derivs(kv, 0.4, 4)
    assert ders.shape == (5, 3)
    assert np.all(ders[3:] == 0)


def test_endpoint_uses_last_span():
    kv = KnotVector.open_uniform(4, 3)
    first, vals = eval_basis(kv, 1.0)
    assert first == kv.n - 4
    np.testing.assert_allclose(vals, [0, 0, 0, 1])


@pytest.mark.parametrize(
    "knots, degree",
    [
        ([0, 0, 1, 0.5, 1], 1),
        ([0, 0.1, 1, 1], 1),
        ([0, 0, 0, 1, 1, 1], 1),
        ([0, 0, 0.5, 0.5, 0.5, 1, 1], 1),
        ([0, 0], 1),
        ([0.5, 0.5, 0.5, 0.5], 1),
    ],
)
def test_invalid_knot_vectors(knots, degree):
    with pytest.raises(ConfigError):
        KnotVector(knots, degree)


def test_out_of_domain_evaluation():
    kv = KnotVector.open_uniform(2, 2)
    with pytest.raises(DomainError):
        eval_basis(kv, 1.5)
    with pytest.raises(DomainError):
        basis_table(kv, [0.2, np.nan])


def test_find_span_and_breakpoints():
    kv = KnotVector([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2)
    assert kv.n == 5
    np.testing.assert_array_equal(kv.breakpoints(), [0, 0.5, 1])
    assert kv.find_span(0.5) == 4
    assert kv.find_span(1.0) == 4
    vals, counts = kv.interior_multiplicities()
    assert vals.tolist() == [0.5] and counts.tolist() == [2]


def test_refinement_counts():
    kv = KnotVector.open_uniform(3, 2)
    assert subdivide(kv, 3).n_spans() == 9
    assert h_refine(kv, 2).n_spans() == 12
    assert h_refine(kv, 2).n == 14


@settings(max_examples=25, deadline=None)
@given(knot_vectors(), st.integers(1, 3), st.lists(st.floats(0, 1), min_size=3, max_size=10))
def test_insertion_matrix_reproduces_coarse_basis(kv, m, xs):
    fine = subdivide(kv, m + 1)
    T = insertion_matrix(kv, fine)
    coarse_vals = dense_basis(kv, xs, 0)[0]
    fine_vals = dense_basis(fine, xs, 0)[0]
    np.testing.assert_allclose(fine_vals @ T.toarray(), coarse_vals, atol=1e-12)


def test_insertion_matrix_rejects_non_nested():
    a = KnotVector.open_uniform(2, 2)
    b = KnotVector.open_uniform(3, 2)
    with pytest.raises(ConfigError):
        insertion_matrix(a, b)


def test_graded_breakpoints_law_and_nesting():
    mu = 0.6
    for n in (8, 16, 32, 64):
        b = graded_breakpoints(n, mu)
        span = np.diff(b)[1:]
        dist = b[1:-1]
        ratio = span / dist ** (1 - mu)
        assert ratio.max() / ratio.min() <= 4.0
        fine = graded_breakpoints(2 * n, mu)
        np.testing.assert_allclose(fine[::2], b, atol=1e-15)
    mirrored = graded_breakpoints(8, mu, corner=1)
    np.testing.assert_allclose(mirrored, 1 - graded_breakpoints(8, mu)[::-1])


def test_graded_knots_axis_choice():
    cfg = GradingConfig(0.5, singular_corner=(0, None))
    g0 = graded_knots(4, cfg, degree=2, axis=0)
    g1 = graded_knots(4, cfg, degree=2, axis=1)
    np.testing.assert_allclose(g0.breakpoints(), [0, 1 / 16, 1 / 4, 9 / 16, 1])
    np.testing.assert_allclose(g1.breakpoints(), [0, 0.25, 0.5, 0.75, 1])


@pytest.mark.parametrize("mu", [0.0, 1.5, -0.2])
def test_grading_config_rejects_bad_exponent(mu):
    with pytest.raises(ConfigError):
        GradingConfig(mu)


def test_field_knots_keep_geometry_continuity():
    geo = KnotVector([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2)  # C0 at 0.5
    for k in (1, 2, 3):
        fk = field_knots(geo, k, 2)
        vals, counts = fk.interior_multiplicities()
        at_half = counts[np.isclose(vals, 0.5)][0]
        assert at_half == k  # continuity min(k - 1, 0) = 0
        assert np.all(counts[~np.isclose(vals, 0.5)] == 1)
        assert fk.n_spans() == 4


def test_tensor_eval_rational_partition_of_unity():
    kv = KnotVector.open_uniform(2, 2)
    w = np.linspace(0.5, 2.0, kv.n * kv.n).reshape(kv.n, kv.n)
    basis = TensorBasis((kv, kv), w)
    idx, vals, grads = tensor_eval(basis, [0.3, 0.8])
    assert idx.shape == (9, 2)
    np.testing.assert_allclose(vals.sum(), 1.0, atol=1e-14)
    np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-12)
