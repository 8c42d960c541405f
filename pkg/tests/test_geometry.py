import itertools
import math

import numpy as np
import pytest

from dgiga.errors import DegenerateGeometryError, DomainError, GlueError, UnknownNameError
from dgiga.geometry import (
    TORUS_R,
    TORUS_r,
    InterfaceGlue,
    MultiPatchDomain,
    Side,
    bilinear_patch,
    box_patch,
    builtin_geometry,
    face_normal,
    geometry_names,
    map_point,
    surface_metric,
)
from dgiga.quadrature import element_quadrature


def domain_measure(dom: MultiPatchDomain, split: int = 4, n: int = 8) -> float:
    cuts = np.linspace(0, 1, split + 1)
    total = 0.0
    for p in dom.patches:
        for cell in itertools.product(range(split), repeat=p.dim):
            el = [(cuts[c], cuts[c + 1]) for c in cell]
            total += element_quadrature(p, el, n)[2].sum()
    return total


@pytest.mark.parametrize(
    "name, measure",
    [
        ("line_2patch", 2.0),
        ("unit_square_2patch", 2.0),
        ("square_4patch", 4.0),
        ("cube_4patch", 8.0),
        ("lshape_2patch", 3.0),
        ("sphere_6patch", 4 * math.pi),
        ("torus_4patch", 4 * math.pi**2 * TORUS_R * TORUS_r),
    ],
)
def test_builtin_measures(name, measure):
    assert domain_measure(builtin_geometry(name)) == pytest.approx(measure, rel=1e-9)


@pytest.mark.parametrize(
    "name, n_interfaces, closed",
    [
        ("line_2patch", 1, False),
        ("unit_square_2patch", 1, False),
        ("square_4patch", 4, False),
        ("cube_4patch", 4, False),
        ("lshape_2patch", 1, False),
        ("sphere_6patch", 12, True),
        ("torus_4patch", 8, True),
    ],
)
def test_builtin_topology(name, n_interfaces, closed):
    dom = builtin_geometry(name)
    assert len(dom.interfaces) == n_interfaces
    assert dom.is_closed == closed
    assert dom.check_glue() < 1e-10


def test_geometry_registry():
    assert "torus_4patch" in geometry_names()
    with pytest.raises(UnknownNameError):
        builtin_geometry("klein_bottle")


def _random_params(rng, d, n=50):
    return rng.uniform(0, 1, size=(n, d))


def test_sphere_points_on_unit_sphere():
    rng = np.random.default_rng(1)
    for p in builtin_geometry("sphere_6patch").patches:
        x = p.eval_points(_random_params(rng, 2)).x
        np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-13)


def test_torus_points_on_torus():
    rng = np.random.default_rng(2)
    for p in builtin_geometry("torus_4patch").patches:
        x = p.eval_points(_random_params(rng, 2)).x
        rho = np.hypot(x[:, 0], x[:, 1])
        np.testing.assert_allclose((rho - TORUS_R) ** 2 + x[:, 2] ** 2, TORUS_r**2, atol=1e-12)


@pytest.mark.parametrize("name", ["sphere_6patch", "torus_4patch"])
def test_area_element_matches_cross_product(name):
    # oracle: |x_u x x_v| from central differences of the map
    rng = np.random.default_rng(3)
    h = 1e-6
    for p in builtin_geometry(name).patches:
        for uv in rng.uniform(0.05, 0.95, size=(5, 2)):
            du = (map_point(p, uv + [h, 0])[0] - map_point(p, uv - [h, 0])[0]) / (2 * h)
            dv = (map_point(p, uv + [0, h])[0] - map_point(p, uv - [0, h])[0]) / (2 * h)
            _, g, Finv = surface_metric(p, uv)
            assert g == pytest.approx(np.linalg.norm(np.cross(du, dv)), rel=1e-7)
            F = np.array([[du @ du, du @ dv], [du @ dv, dv @ dv]])
            np.testing.assert_allclose(Finv @ F, np.eye(2), atol=1e-6)


def test_box_jacobian_and_normals():
    p = box_patch([0, 0, 0], [2, 3, 4])
    x, J = map_point(p, [0.5, 0.5, 0.25])
    np.testing.assert_allclose(x, [1, 1.5, 1])
    np.testing.assert_allclose(J, np.diag([2, 3, 4]))
    np.testing.assert_allclose(face_normal(p, Side(0, 0), [0.3, 0.3]), [-1, 0, 0], atol=1e-14)
    np.testing.assert_allclose(face_normal(p, Side(2, 1), [0.3, 0.3]), [0, 0, 1], atol=1e-14)


def test_surface_conormal_is_tangent_and_outward():
    p = builtin_geometry("sphere_6patch").patches[0]
    for side in (Side(0, 0), Side(0, 1), Side(1, 0), Side(1, 1)):
        n = face_normal(p, side, [0.4])
        x, J = map_point(p, p.side_point(side, [0.4]))
        assert abs(n @ x) < 1e-12  # tangent to the sphere
        inward = map_point(p, p.side_point(side, [0.4]) + (0.01 if side.end == 0 else -0.01) * np.eye(2)[side.axis])[0]
        assert n @ (x - inward) > 0


def test_map_point_domain_errors():
    p = box_patch([0, 0], [1, 1])
    with pytest.raises(DomainError):
        map_point(p, [1.2, 0.5])
    with pytest.raises(DomainError):
        map_point(p, [0.5])
    with pytest.raises(DomainError):
        face_normal(p, Side(0, 1), [0.5, 0.5])


def test_degenerate_patches_rejected():
    with pytest.raises(DegenerateGeometryError):
        bilinear_patch([0, 0], [1, 0], [0, 0], [1, 0])
    with pytest.raises(DegenerateGeometryError):
        # bow-tie quadrilateral folds over itself
        bilinear_patch([0, 0], [1, 0], [1, 1], [0, 1])


def test_glue_detects_flips_and_rejects_mismatch():
    a = box_patch([0, 0], [1, 1])
    b = bilinear_patch([2, 1], [1, 1], [2, 0], [1, 0])  # reversed orientation
    dom = MultiPatchDomain.from_patches([a, b])
    assert len(dom.interfaces) == 1
    g = dom.interfaces[0]
    assert g.flips == (True,)
    assert len(dom.boundary) == 6
    bad = InterfaceGlue(0, Side(0, 1), 1, Side(0, 1), (0,), (False,))
    with pytest.raises(GlueError):
        MultiPatchDomain([a, b], [bad], [1, 1]).check_glue()
