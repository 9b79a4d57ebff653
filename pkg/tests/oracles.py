"""Independent reference computations used by several test modules."""

import itertools

import numpy as np


def _insert(basis: dict, row: int) -> bool:
    """Add a GF(2) row (int bitmask) to an xor basis keyed by leading bit."""
    while row:
        top = row.bit_length() - 1
        if top not in basis:
            basis[top] = row
            return True
        row ^= basis[top]
    return False


def _boundary_rows(cx, k):
    """Rows = k-simplices (order positions), columns = (k+1)-simplices, as bitmasks over columns."""
    rows = list(cx.positions_of_dim(k))
    cols = list(cx.positions_of_dim(k + 1))
    col_index = {p: c for c, p in enumerate(cols)}
    row_index = {p: r for r, p in enumerate(rows)}
    masks = [0] * len(rows)
    for p in cols:
        s = cx.simplex(p)
        for face in itertools.combinations(s, len(s) - 1):
            masks[row_index[cx.position(face)]] |= 1 << col_index[p]
    return rows, cols, masks


def rank_pairs(cx, k):
    """Degree-k persistence pairs of a strictly ordered complex from ranks of
    lower-left submatrices of the boundary matrix (the pairing lemma).

    Returns (finite pairs as sorted (birth_pos, death_pos), sorted essential birth positions),
    zero-lifespan pairs included.
    """
    rows, cols, masks = _boundary_rows(cx, k)
    R, C = len(rows), len(cols)
    # r[i][j] = rank of rows i.. and columns ..j-1 (j = 0..C)
    r = np.zeros((R + 1, C + 1), dtype=int)
    for j in range(1, C + 1):
        keep = (1 << j) - 1
        basis, rank = {}, 0
        for i in range(R - 1, -1, -1):
            rank += _insert(basis, masks[i] & keep)
            r[i, j] = rank
    pairs = []
    for i in range(R):
        for j in range(1, C + 1):
            mu = r[i, j] - r[i + 1, j] - r[i, j - 1] + r[i + 1, j - 1]
            if mu:
                pairs.append((int(rows[i]), int(cols[j - 1])))
    # positive k-simplices: boundary dependent on earlier k-simplex boundaries
    positive = _positive(cx, k)
    born = {b for b, _ in pairs}
    essential = sorted(p for p in positive if p not in born)
    return sorted(pairs), essential


def _positive(cx, k):
    pos = list(cx.positions_of_dim(k))
    if k == 0:
        return [int(p) for p in pos]
    lower = {int(p): i for i, p in enumerate(cx.positions_of_dim(k - 1))}
    basis, out = {}, []
    for p in pos:
        s = cx.simplex(p)
        m = 0
        for face in itertools.combinations(s, len(s) - 1):
            m |= 1 << lower[cx.position(face)]
        if not _insert(basis, m):
            out.append(int(p))
    return out


def betti_prefix(cx, k, upto):
    """Betti number of degree k of the first ``upto`` simplices, by GF(2) ranks."""
    def rank_of(d):
        lo = [p for p in cx.positions_of_dim(d - 1) if p < upto] if d > 0 else []
        idx = {p: i for i, p in enumerate(lo)}
        basis, rk = {}, 0
        for p in cx.positions_of_dim(d):
            if p >= upto:
                continue
            s = cx.simplex(p)
            m = 0
            for face in itertools.combinations(s, len(s) - 1):
                m |= 1 << idx[cx.position(face)]
            rk += _insert(basis, m)
        return rk
    n_k = sum(1 for p in cx.positions_of_dim(k) if p < upto)
    zk = n_k - (rank_of(k) if k > 0 else 0)
    return zk - rank_of(k + 1)


def gaussian_mass_quad(center, var, lo, hi):
    """Mass of an isotropic 2D Gaussian over a box, by adaptive quadrature."""
    from scipy import integrate
    s = np.sqrt(var)
    f = lambda y, x: np.exp(-((x - center[0]) ** 2 + (y - center[1]) ** 2) / (2 * var)) / (2 * np.pi * var)
    val, _ = integrate.dblquad(f, max(lo[0], center[0] - 10 * s), min(hi[0], center[0] + 10 * s),
                               max(lo[1], center[1] - 10 * s), min(hi[1], center[1] + 10 * s),
                               epsabs=1e-12)
    return val
