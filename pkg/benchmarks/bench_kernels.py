"""Compare the compiled kernels with the numpy fallback.

Times the two hot loops in isolation and a full system assembly with each
backend swapped in. Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--level 3] [--degree 2]
"""

from __future__ import annotations

import argparse
import timeit
from contextlib import contextmanager

import numpy as np

from dgiga import _kernels_py, kernels
from dgiga.assembly import assemble
from dgiga.problems import get_case

try:
    from dgiga import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

NAMES = ("find_spans", "basis_ders", "accumulate")


@contextmanager
def backend(mod):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(mod, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def basis_job(mod, degree):
    knots = np.r_[[0.0] * degree, np.linspace(0, 1, 65), [1.0] * degree]
    x = np.random.default_rng(0).random(200_000)
    return lambda: mod.basis_ders(knots, degree, x, 1)


def accumulate_job(mod, degree):
    rng = np.random.default_rng(1)
    n_loc = (degree + 1) ** 2
    E, Q, n = 4000, (degree + 1) ** 2, 20_000
    A = rng.standard_normal((E, Q, n_loc, 2))
    w = rng.random((E, Q))
    rows = np.sort(rng.integers(0, n - n_loc, E))[:, None] + np.arange(n_loc)[None, :]
    rows = rows.astype(np.int64)
    # banded pattern wide enough to hold every element block
    band = np.arange(-n_loc, n_loc + 1)
    cols = np.clip(np.arange(n)[:, None] + band[None, :], 0, n - 1)
    cols = np.array([np.unique(c) for c in cols], dtype=object)
    indptr = np.r_[0, np.cumsum([len(c) for c in cols])].astype(np.int64)
    indices = np.concatenate(cols).astype(np.int64)
    keys = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr)) * n + indices
    data = np.zeros(indices.size)
    return lambda: mod.accumulate(A, A, w, rows, rows, indptr, indices, keys, n, data)


def assembly_job(mod, level, degree):
    spec = get_case("smooth2d").problem()

    def run():
        with backend(mod):
            assemble(spec, level, degree)

    return run


def best(fn, repeat):
    fn()  # warm-up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--level", type=int, default=3)
    ap.add_argument("--degree", type=int, default=2)
    args = ap.parse_args(argv)

    mods = {"numpy": _kernels_py}
    if _compiled is not None:
        mods["cython"] = _compiled
    jobs = {
        "basis_ders (200k points)": lambda m: basis_job(m, args.degree),
        "accumulate (4000 elements)": lambda m: accumulate_job(m, args.degree),
        f"assemble smooth2d level {args.level}": lambda m: assembly_job(m, args.level, args.degree),
    }
    print(f"degree {args.degree}, best of {args.repeat}")
    print(f"{'kernel':<30}" + "".join(f"{m:>12}" for m in mods) + ("     speed-up" if len(mods) > 1 else ""))
    for label, make in jobs.items():
        times = {m: best(make(mod), args.repeat) for m, mod in mods.items()}
        row = f"{label:<30}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times.values())
        if len(mods) > 1:
            row += f"{times['numpy'] / times['cython']:>12.1f}x"
        print(row)


if __name__ == "__main__":
    main()
