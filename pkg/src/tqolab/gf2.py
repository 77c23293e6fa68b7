"""Dense GF(2) linear algebra on numpy uint8 arrays.

Vectors and matrices hold 0/1 entries; arithmetic is mod 2, so row addition
is XOR. Row reduction here is the workhorse behind stabilizer-group
membership, support-restricted subgroups, and code-distance search.
"""

from __future__ import annotations

import numpy as np


def as_gf2(a) -> np.ndarray:
    """Coerce to a uint8 array of 0/1 entries."""
    return (np.asarray(a, dtype=np.uint8) & 1).astype(np.uint8)


def rref(mat):
    """Row-reduce a copy of ``mat`` over GF(2).

    Returns ``(reduced, pivot_cols)``. The reduction is full (entries above
    and below each pivot are cleared); zero rows sink to the bottom.
    """
    r = as_gf2(mat).copy()
    m, n = r.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        hot = np.nonzero(r[row:, col])[0]
        if hot.size == 0:
            continue
        piv = row + int(hot[0])
        if piv != row:
            r[[row, piv]] = r[[piv, row]]
        mask = r[:, col].astype(bool)
        mask[row] = False
        if mask.any():
            r[mask] ^= r[row]
        pivots.append(col)
        row += 1
    return r, pivots


def rank(mat) -> int:
    return len(rref(mat)[1])


def nullspace(mat) -> np.ndarray:
    """Basis of the right null space {v : mat @ v = 0 over GF(2)}, as rows.

    Returns a (k, n_cols) uint8 array; k = n_cols - rank(mat).
    """
    a = as_gf2(mat)
    n = a.shape[1]
    r, pivots = rref(a)
    piv = np.asarray(pivots, dtype=np.intp)
    free = np.asarray([c for c in range(n) if c not in set(pivots)], dtype=np.intp)
    basis = np.zeros((free.size, n), dtype=np.uint8)
    if free.size:
        basis[np.arange(free.size), free] = 1
        if piv.size:
            basis[:, piv] = r[: piv.size, :][:, free].T
    return basis


def reduce_rows(r, pivots, v):
    """Reduce query rows ``v`` against an RREF matrix; returns the residuals.

    A residual of all zeros means the corresponding query row lies in the
    row space of ``r``.
    """
    out = as_gf2(np.atleast_2d(v)).copy()
    for i, col in enumerate(pivots):
        mask = out[:, col].astype(bool)
        if mask.any():
            out[mask] ^= r[i]
    return out


def in_rowspace(mat, v) -> bool:
    """Whether vector ``v`` lies in the GF(2) row space of ``mat``."""
    r, pivots = rref(mat)
    return not reduce_rows(r, pivots, v).any()
