"""Persistence pairs of a filtered complex over GF(2), keeping the generating
simplex pair (barcode template) of every interval."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .filtration import FilteredComplex


@dataclass(frozen=True)
class PersistencePair:
    dim: int
    birth_simplex: tuple
    death_simplex: Optional[tuple]  # None marks an essential class
    birth: float
    death: float
    birth_pos: int = -1
    death_pos: int = -1

    @property
    def essential(self) -> bool:
        return self.death_simplex is None

    @property
    def lifespan(self) -> float:
        return self.death - self.birth


@dataclass
class Diagram:
    pairs: list
    k: int
    essential_cap: Optional[float] = None
    zero_pairs: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.pairs)

    def as_array(self) -> np.ndarray:
        """(n, 2) array of (birth, death)."""
        if not self.pairs:
            return np.zeros((0, 2))
        return np.array([(p.birth, p.death) for p in self.pairs], dtype=float)

    @property
    def capped(self) -> bool:
        return all(np.isfinite(p.death) for p in self.pairs)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a


def _degree0(cx: FilteredComplex):
    """Elder-rule pairing of vertices with the edges that merge their components."""
    vpos = cx.positions_of_dim(0)
    order_of_vertex = np.empty(cx.n_points, dtype=np.int64)
    order_of_vertex[cx.verts[vpos, 0]] = vpos
    uf = _UnionFind(cx.n_points)
    # root -> oldest vertex position of its component
    oldest = {int(v): int(order_of_vertex[v]) for v in range(cx.n_points)}
    pairs, positive_edges = [], []
    for p in cx.positions_of_dim(1):
        a, b = int(cx.verts[p, 0]), int(cx.verts[p, 1])
        ra, rb = uf.find(a), uf.find(b)
        if ra == rb:
            positive_edges.append(int(p))
            continue
        oa, ob = oldest[ra], oldest[rb]
        young, old = (oa, ob) if oa > ob else (ob, oa)
        pairs.append((young, int(p)))
        uf.parent[ra if oa > ob else rb] = rb if oa > ob else ra
        oldest[uf.find(a)] = old
    paired = {b for b, _ in pairs}
    essential = [int(p) for p in vpos if int(p) not in paired]
    return pairs, essential


def _coboundaries(cx: FilteredComplex, k: int, chunk: int = 100_000):
    """For every k-simplex (in order) the sorted positions of its (k+1)-cofaces,
    as a flat array plus CSR-style offsets."""
    pos_k = cx.positions_of_dim(k)
    V = cx.verts[pos_k, :k + 1]
    n = cx.n_points
    if k + 1 > cx.max_dim or len(V) == 0:
        return pos_k, np.zeros(0, dtype=np.int64), np.zeros(len(pos_k) + 1, dtype=np.int64)
    adj = np.zeros((n, n), dtype=bool)
    E = cx.verts[cx.positions_of_dim(1), :2]
    adj[E[:, 0], E[:, 1]] = True
    adj[E[:, 1], E[:, 0]] = True
    rows_all, cof_all = [], []
    for start in range(0, len(V), chunk):
        blk = V[start:start + chunk]
        mask = adj[blk[:, 0]].copy()
        for c in range(1, k + 1):
            mask &= adj[blk[:, c]]
        r, c = np.nonzero(mask)
        if len(r) == 0:
            continue
        cof = np.sort(np.column_stack([blk[r], c]), axis=1)
        rows_all.append(r + start)
        cof_all.append(cx.positions(cof))
    if not rows_all:
        return pos_k, np.zeros(0, dtype=np.int64), np.zeros(len(pos_k) + 1, dtype=np.int64)
    rows = np.concatenate(rows_all)
    cofs = np.concatenate(cof_all)
    o = np.lexsort((cofs, rows))
    rows, cofs = rows[o], cofs[o]
    offsets = np.searchsorted(rows, np.arange(len(pos_k) + 1))
    return pos_k, cofs, offsets


def _cohomology_pairs(cx: FilteredComplex, k: int, cleared: set):
    """Pairs (k-simplex, (k+1)-simplex) and essential k-simplices.

    Coboundary columns are reduced from the last k-simplex to the first; the
    pivot of a column is its earliest coface. Columns of k-simplices that kill
    a (k-1)-class are skipped (clearing).
    """
    pos_k, cofs, offsets = _coboundaries(cx, k)
    owner: dict = {}
    pairs, essential = [], []
    for idx in range(len(pos_k) - 1, -1, -1):
        p = int(pos_k[idx])
        if p in cleared:
            continue
        col = cofs[offsets[idx]:offsets[idx + 1]]
        if len(col) == 0:
            essential.append(p)
            continue
        piv = int(col[0])
        if piv <= p:
            raise AssertionError("filtration order violated: coface precedes face")
        if piv not in owner:
            owner[piv] = col
            pairs.append((p, piv))
            continue
        cur = set(col.tolist())
        while True:
            other = owner[piv]
            if not isinstance(other, set):
                other = set(other.tolist())
                owner[piv] = other
            cur ^= other
            if not cur:
                essential.append(p)
                break
            piv = min(cur)
            if piv not in owner:
                owner[piv] = cur
                pairs.append((p, piv))
                break
    pairs.reverse()
    essential.reverse()
    return pairs, essential


def raw_pairs(cx: FilteredComplex, k: int):
    """All degree-k pairs as order positions, zero-lifespan ones included.

    Returns (finite, essential): a list of (birth_pos, death_pos) and a list of
    birth positions.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > cx.max_dim - 1:
        raise ValueError(f"degree {k} needs simplices up to dimension {k + 1}; complex has max_dim={cx.max_dim}")
    pairs, essential = _degree0(cx)
    for d in range(1, k + 1):
        cleared = {dp for _, dp in pairs}
        pairs, essential = _cohomology_pairs(cx, d, cleared)
    return pairs, essential


def reduce(cx: FilteredComplex, k: int) -> Diagram:
    """Degree-k persistence diagram with its barcode template.

    Zero-lifespan pairs are kept in ``zero_pairs`` but left out of ``pairs``.
    """
    finite, essential = raw_pairs(cx, k)
    vals = cx.values
    out, zero = [], []
    for b, d in finite:
        pp = PersistencePair(k, cx.simplex(b), cx.simplex(d), float(vals[b]), float(vals[d]), b, d)
        (out if vals[d] > vals[b] else zero).append(pp)
    for b in essential:
        out.append(PersistencePair(k, cx.simplex(b), None, float(vals[b]), np.inf, b, -1))
    return Diagram(out, k, None, zero)


def cap_infinite(diagram: Diagram, cap: float) -> Diagram:
    """Replace infinite deaths by ``cap``; finite pairs are untouched."""
    for p in diagram.pairs:
        if p.essential and p.birth > cap:
            raise ValueError(f"cap {cap} lies below an essential birth {p.birth}")
    pairs = [replace(p, death=float(cap)) if p.essential else p for p in diagram.pairs]
    return Diagram(pairs, diagram.k, float(cap), list(diagram.zero_pairs))


def default_cap(cx: FilteredComplex) -> float:
    from .filtration import Height
    if isinstance(cx.kind, Height):
        return float(cx.vertex_values.max())
    return float(cx.kind.max_edge)


def _simplex_str(s) -> str:
    return "" if s is None else "-".join(str(v) for v in s)


def write_diagram_csv(diagram: Diagram, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dim", "birth", "death", "birth_simplex", "death_simplex"])
        for p in diagram.pairs:
            w.writerow([p.dim, "%.17g" % p.birth, "%.17g" % p.death,
                        _simplex_str(p.birth_simplex), _simplex_str(p.death_simplex)])


def read_diagram_csv(path, k: Optional[int] = None) -> Diagram:
    pairs = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            bs = tuple(int(v) for v in row["birth_simplex"].split("-")) if row["birth_simplex"] else ()
            ds = tuple(int(v) for v in row["death_simplex"].split("-")) if row["death_simplex"] else None
            pairs.append(PersistencePair(int(row["dim"]), bs, ds, float(row["birth"]), float(row["death"])))
    if k is None:
        k = pairs[0].dim if pairs else 0
    return Diagram(pairs, k)
