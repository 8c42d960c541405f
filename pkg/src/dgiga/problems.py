"""Registry of manufactured and benchmark problems.

Each case bundles a geometry, coefficients, data, the exact solution where
one is known, default refinement settings and the rates a correct
discretisation should show.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import predicted_rate
from .assembly import ProblemSpec
from .errors import ConfigError, UnknownNameError
from .geometry import TORUS_R, TORUS_r, MultiPatchDomain, builtin_geometry
from .splines import GradingConfig

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass
class ProblemCase:
    """A named problem together with its study defaults.

    ``rate`` maps ``(degree, norm)`` to the expected asymptotic rate (norm
    is ``"dg"`` or ``"l2"``); a missing entry means no prediction.
    ``reference_gap`` marks cases without a closed-form solution that are
    measured against a solution that many levels finer.
    """

    name: str
    geometry: str
    description: str
    f: Fn
    exact: Fn | None = None
    exact_grad: Fn | None = None
    alphas: tuple[float, ...] | None = None
    constraint: str = "none"
    spans: tuple[tuple[int, ...], ...] | None = None
    grading: tuple[GradingConfig | None, ...] | None = None
    rate: Callable[[int, str], float | None] = lambda k, norm: None
    reference_gap: int | None = None
    params: dict = field(default_factory=dict)

    def domain(self) -> MultiPatchDomain:
        return builtin_geometry(self.geometry, self.alphas)

    def problem(self, *, penalty: float | None = None, nitsche: bool = True, penalty_length: str = "local") -> ProblemSpec:
        dom = self.domain()
        closed = dom.is_closed
        return ProblemSpec(
            domain=dom,
            f=self.f,
            dirichlet=None if closed else self.exact,
            exact=self.exact,
            exact_grad=self.exact_grad,
            penalty=penalty,
            nitsche_rhs_consistency=nitsche,
            constraint=self.constraint,
            grading=self.grading,
            spans=self.spans,
            penalty_length=penalty_length,
        )

    def expected(self, k: int, norm: str = "dg") -> float | None:
        return self.rate(k, norm)


def _smooth_rate(k: int, norm: str) -> float:
    return predicted_rate("smooth", k=k, norm=norm)


# -- smooth manufactured solutions ------------------------------------------

_W = 2.5 * math.pi


def _sine_product(d: int, w: float):
    def u(x):
        return np.prod(np.sin(w * x[:, :d]), axis=1)

    def grad(x):
        s, c = np.sin(w * x[:, :d]), np.cos(w * x[:, :d])
        out = np.empty_like(x[:, :d])
        for i in range(d):
            out[:, i] = w * c[:, i] * np.prod(np.delete(s, i, axis=1), axis=1)
        return out

    def f(x):
        return d * w * w * u(x)

    return u, grad, f


def smooth2d(base: int = 2) -> ProblemCase:
    u, g, f = _sine_product(2, _W)
    return ProblemCase(
        "smooth2d", "square_4patch", "sin(2.5 pi x) sin(2.5 pi y) on the four-patch square",
        f, u, g, spans=((base, base),) * 4, rate=_smooth_rate, params={"base": base},
    )


def smooth3d(base: int = 2) -> ProblemCase:
    u, g, f = _sine_product(3, _W)
    return ProblemCase(
        "smooth3d", "cube_4patch", "product of sin(2.5 pi x_i) on the four-patch cube",
        f, u, g, spans=((base, base, 2 * base),) * 4, rate=_smooth_rate, params={"base": base},
    )


def two_patch_sine(ratio: int = 2, base: int = 1) -> ProblemCase:
    """sin(pi x) sin(pi y) with the right patch ``ratio`` times finer."""
    if ratio < 1:
        raise ConfigError("mesh ratio must be a positive integer")
    u, g, f = _sine_product(2, math.pi)
    return ProblemCase(
        "two_patch_sine", "unit_square_2patch", "sin(pi x) sin(pi y) on two patches with non-matching meshes",
        f, u, g, spans=((base, base), (ratio * base, ratio * base)), rate=_smooth_rate,
        params={"ratio": ratio, "base": base},
    )


# -- singular solutions -----------------------------------------------------


def _box_corner(dom: MultiPatchDomain, point) -> tuple[tuple[int | None, ...], ...]:
    """Per patch and axis, the parametric end touching ``point`` (None if interior)."""
    out = []
    point = np.asarray(point, dtype=np.float64)
    for p in dom.patches:
        cp = p.control_points.reshape(-1, p.phys_dim)
        lo, hi = cp.min(axis=0), cp.max(axis=0)
        corner = []
        for ax in range(p.dim):
            if abs(point[ax] - lo[ax]) < 1e-12:
                corner.append(0)
            elif abs(point[ax] - hi[ax]) < 1e-12:
                corner.append(1)
            else:
                corner.append(None)
        out.append(tuple(corner))
    return tuple(out)


def radial_singular(lam: float = 0.58, dim: int = 3, grading: float | None = None, base: int = 1) -> ProblemCase:
    """``|x|^lam`` with its point singularity at the origin, an interior vertex."""
    if dim not in (2, 3):
        raise ConfigError("radial singular case exists in 2 and 3 dimensions")
    if lam <= 0:
        raise ConfigError("singular exponent must be positive")

    def u(x):
        return np.linalg.norm(x[:, :dim], axis=1) ** lam

    def g(x):
        r = np.linalg.norm(x[:, :dim], axis=1)
        return lam * r[:, None] ** (lam - 2) * x[:, :dim]

    def f(x):
        r = np.linalg.norm(x[:, :dim], axis=1)
        return -lam * (lam + dim - 2) * r ** (lam - 2)

    geom = "cube_4patch" if dim == 3 else "square_4patch"
    spans = ((base, base, 2 * base),) * 4 if dim == 3 else ((base, base),) * 4
    gcfg = None
    if grading is not None:
        corners = _box_corner(builtin_geometry(geom), np.zeros(dim))
        glam = lam if lam < 1 else None
        gcfg = tuple(GradingConfig(grading, c, glam) for c in corners)
    if dim == 3:
        # Sobolev exponent p = 1.4 with l = 2 (lam < 1) or l = 3 (lam > 1)
        l_reg, p_reg = (2 if lam < 1 else 3), 1.4
    else:
        l_reg, p_reg = 2, 2.0 / (2.0 - lam)

    def rate(k: int, norm: str) -> float | None:
        if norm != "dg":
            return None
        if grading is not None:
            return predicted_rate("graded", k=k, lam=lam, mu=grading)
        return predicted_rate("low_regularity", k=k, l=l_reg, p=p_reg, d=dim)

    return ProblemCase(
        "radial_singular", geom, f"|x|^{lam} with a point singularity at the origin ({dim}D)",
        f, u, g, spans=spans, grading=gcfg, rate=rate,
        params={"lam": lam, "dim": dim, "grading": grading, "base": base},
    )


_LS = 2.0 / 3.0


def _lshape_angle(x):
    t = np.arctan2(x[:, 1], x[:, 0]) + math.pi / 2
    return np.where(t < -math.pi / 4, t + 2 * math.pi, t)


def lshape(grading: float | None = None, base: int = 1) -> ProblemCase:
    """Corner singularity ``r^(2/3) sin(2 theta / 3)`` of the L-shaped domain."""

    def u(x):
        r = np.hypot(x[:, 0], x[:, 1])
        return r**_LS * np.sin(_LS * _lshape_angle(x))

    def g(x):
        r = np.hypot(x[:, 0], x[:, 1])
        t = _lshape_angle(x)
        phys = np.arctan2(x[:, 1], x[:, 0])
        a = _LS * r ** (_LS - 1)
        er = np.stack([np.cos(phys), np.sin(phys)], axis=1)
        et = np.stack([-np.sin(phys), np.cos(phys)], axis=1)
        return a[:, None] * (np.sin(_LS * t)[:, None] * er + np.cos(_LS * t)[:, None] * et)

    def f(x):
        return np.zeros(x.shape[0])

    gcfg = None
    if grading is not None:
        gcfg = (GradingConfig(grading, (0, 0), _LS), GradingConfig(grading, (0, 0), _LS))

    def rate(k: int, norm: str) -> float | None:
        if norm != "dg":
            return None
        if grading is not None:
            return predicted_rate("graded", k=k, lam=_LS, mu=grading)
        return predicted_rate("low_regularity", k=k, l=2, p=2.0 / (2.0 - _LS), d=2)

    return ProblemCase(
        "lshape", "lshape_2patch", "re-entrant corner solution r^(2/3) sin(2 theta/3)",
        f, u, g, spans=((base, base),) * 2, grading=gcfg, rate=rate,
        params={"grading": grading, "base": base},
    )


# -- closed surfaces --------------------------------------------------------


def _tangential(grad: np.ndarray, normal: np.ndarray) -> np.ndarray:
    return grad - np.sum(grad * normal, axis=1)[:, None] * normal


def sphere_lb(base: int = 1) -> ProblemCase:
    """Spherical harmonic of degree three on the unit sphere, ``-lap u = 12 u``."""

    def u(x):
        return 12.0 * (3 * x[:, 0] ** 2 * x[:, 1] - x[:, 1] ** 3)

    def g(x):
        full = 12.0 * np.stack([6 * x[:, 0] * x[:, 1], 3 * x[:, 0] ** 2 - 3 * x[:, 1] ** 2, 0 * x[:, 0]], axis=1)
        return _tangential(full, x / np.linalg.norm(x, axis=1)[:, None])

    def f(x):
        return 12.0 * u(x)

    return ProblemCase(
        "sphere_lb", "sphere_6patch", "Laplace-Beltrami eigenfunction 12 sin(3 phi) sin^3(theta) on the sphere",
        f, u, g, constraint="zero-mean", spans=((base, base),) * 6, rate=_smooth_rate, params={"base": base},
    )


def _torus_angles(x):
    phi = np.arctan2(x[:, 1], x[:, 0])
    rho = np.hypot(x[:, 0], x[:, 1])
    theta = np.arctan2(x[:, 2], rho - TORUS_R)
    return phi, theta


def _torus_u(x):
    phi, th = _torus_angles(x)
    return np.sin(3 * phi) * np.cos(3 * th + phi)


def _torus_grad(x):
    phi, th = _torus_angles(x)
    R, r = TORUS_R, TORUS_r
    rho = R + r * np.cos(th)
    du_phi = 3 * np.cos(3 * phi) * np.cos(3 * th + phi) - np.sin(3 * phi) * np.sin(3 * th + phi)
    du_th = -3 * np.sin(3 * phi) * np.sin(3 * th + phi)
    e_phi = np.stack([-np.sin(phi), np.cos(phi), 0 * phi], axis=1)
    e_th = np.stack([-np.sin(th) * np.cos(phi), -np.sin(th) * np.sin(phi), np.cos(th)], axis=1)
    return (du_phi / rho)[:, None] * e_phi + (du_th / r)[:, None] * e_th


def _torus_f(x):
    phi, th = _torus_angles(x)
    R, r = TORUS_R, TORUS_r
    rho = R + r * np.cos(th)
    s3, c3 = np.sin(3 * phi), np.cos(3 * phi)
    cc, ss = np.cos(3 * th + phi), np.sin(3 * th + phi)
    return 9 * s3 * cc / r**2 + (10 * s3 * cc + 6 * c3 * ss) / rho**2 - 3 * np.sin(th) * s3 * ss / (r * rho)


def torus_lb(base: int = 1) -> ProblemCase:
    return ProblemCase(
        "torus_lb", "torus_4patch", "sin(3 phi) cos(3 theta + phi) on the torus R=2, r=1",
        _torus_f, _torus_u, _torus_grad, constraint="zero-mean", spans=((base, base),) * 4,
        rate=_smooth_rate, params={"base": base},
    )


def torus_jump(contrast: float = 1e-6, base: int = 1) -> ProblemCase:
    """Torus problem with the coefficient alternating between patches; no closed form."""
    return ProblemCase(
        "torus_jump", "torus_4patch", f"torus data with coefficients {contrast:g}/1 alternating by patch",
        _torus_f, alphas=(contrast, 1.0, contrast, 1.0), constraint="zero-mean",
        spans=((base, base),) * 4, rate=_smooth_rate, reference_gap=2,
        params={"contrast": contrast, "base": base},
    )


# -- polynomial patch tests -------------------------------------------------


def patch_test(dim: int = 2, degree: int = 1, jump: bool = False) -> ProblemCase:
    """Polynomial of total degree ``degree`` reproduced exactly by the method.

    With ``jump`` the coefficient differs between patches and the solution
    is continuous piecewise linear with matching fluxes.
    """
    geom = {1: "line_2patch", 2: "unit_square_2patch", 3: "cube_4patch"}[dim]
    if jump:
        a1, a2 = 1.0, 4.0
        alphas = (a1, a2) if dim < 3 else (a1, a2, a1, a2)
        left = lambda x: x[:, 0] < 0  # noqa: E731
        scale = lambda x: np.where(left(x), 1.0 / a1, 1.0 / a2)  # noqa: E731

        def u(x):
            return x[:, 0] * scale(x) + x[:, 1:].sum(axis=1)

        def g(x):
            out = np.ones_like(x)
            out[:, 0] = scale(x)
            return out

        def f(x):
            return np.zeros(x.shape[0])

        return ProblemCase(f"patch_test_{dim}d_jump", geom, "piecewise linear with coefficient jump",
                           f, u, g, alphas=alphas, params={"dim": dim})
    c = np.array([0.7, -1.3, 0.4])[:dim]

    def u(x):
        y = x[:, :dim] @ c
        return sum(y**j / (j + 1) for j in range(degree + 1)) + x[:, 0] * x[:, dim - 1] * (degree >= 2)

    def g(x):
        y = x[:, :dim] @ c
        dy = sum(j * y ** (j - 1) / (j + 1) for j in range(1, degree + 1))
        out = dy[:, None] * c[None, :]
        if degree >= 2:
            out[:, 0] += x[:, dim - 1]
            out[:, dim - 1] += x[:, 0]
        return out

    def f(x):
        y = x[:, :dim] @ c
        d2 = sum(j * (j - 1) * y ** (j - 2) / (j + 1) for j in range(2, degree + 1))
        extra = 2.0 if (degree >= 2 and dim == 1) else 0.0
        return -(d2 * float(c @ c) + extra) + 0.0 * y

    return ProblemCase(f"patch_test_{dim}d_k{degree}", geom, f"polynomial of degree {degree}", f, u, g,
                       params={"dim": dim, "degree": degree})


_REGISTRY: dict[str, Callable[..., ProblemCase]] = {
    "smooth2d": smooth2d,
    "smooth3d": smooth3d,
    "radial_singular": radial_singular,
    "lshape": lshape,
    "two_patch_sine": two_patch_sine,
    "sphere_lb": sphere_lb,
    "torus_lb": torus_lb,
    "torus_jump": torus_jump,
    "patch_test": patch_test,
}


def case_names() -> list[str]:
    return list(_REGISTRY)


def get_case(name: str, **params) -> ProblemCase:
    """Build a registered case; unknown keyword parameters raise ``ConfigError``."""
    try:
        build = _REGISTRY[name]
    except KeyError:
        raise UnknownNameError(f"unknown case {name!r}; known: {', '.join(case_names())}") from None
    try:
        return build(**{k: v for k, v in params.items() if v is not None})
    except TypeError as exc:
        raise ConfigError(f"bad parameters for case {name!r}: {exc}") from None
