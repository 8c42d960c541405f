"""Pure numpy implementations of the hot loops.

These mirror the compiled kernels in ``_kernels.pyx`` one for one and are
used when the extension is not built or ``DGIGA_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def find_spans(knots: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    """Index ``i`` with ``knots[i] <= x < knots[i+1]``, clamped to the valid range."""
    n = knots.shape[0] - degree - 1
    span = np.searchsorted(knots, x, side="right") - 1
    return np.clip(span, degree, n - 1).astype(np.int64)


def basis_ders(knots: np.ndarray, degree: int, x: np.ndarray, nders: int):
    """Nonzero B-spline values and derivatives at many points at once.

    Returns ``(first, ders)`` where ``first[i]`` is the index of the first
    active function at ``x[i]`` and ``ders[i, m, a]`` is the ``m``-th
    derivative of function ``first[i] + a``.
    """
    knots = np.asarray(knots, dtype=np.float64)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    p = degree
    npt = x.shape[0]
    span = find_spans(knots, p, x)
    out = np.zeros((npt, nders + 1, p + 1))
    ndu = np.empty((p + 1, p + 1, npt))
    left = np.empty((p + 1, npt))
    right = np.empty((p + 1, npt))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = np.zeros(npt)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    for j in range(p + 1):
        out[:, 0, j] = ndu[j, p]
    top = min(nders, p)
    a = np.empty((2, p + 1, npt))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, top + 1):
            d = np.zeros(npt)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d += a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            out[:, k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, top + 1):
        out[:, k, :] *= fac
        fac *= p - k
    return span - p, out


def accumulate(A, B, w, rows, cols, indptr, indices, keys, ncols, data) -> None:
    """Add ``sum_q w[e,q] * A[e,q,c,:] . B[e,q,d,:]`` into CSR ``data``.

    ``(rows[e,c], cols[e,d])`` must already be in the sparsity pattern.
    ``keys`` holds ``row * ncols + col`` for every stored entry in storage
    order, so positions come out of a single sorted search.
    """
    if rows.shape[0] == 0:
        return
    local = np.einsum("eqcf,eqdf,eq->ecd", A, B, w, optimize=True).ravel()
    flat = (rows[:, :, None] * np.int64(ncols) + cols[:, None, :]).ravel()
    pos = np.searchsorted(keys, flat)
    order = np.argsort(pos, kind="stable")
    pos = pos[order]
    starts = np.flatnonzero(np.r_[True, pos[1:] != pos[:-1]])
    data[pos[starts]] += np.add.reduceat(local[order], starts)
