"""Clique complexes of the R-neighbourhood graph with Rips, DTM and height
filtration values, and derivatives of those values in the point coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sps
from scipy.spatial.distance import cdist

from .geometry import PointCloud

Simplex = tuple  # strictly increasing vertex indices

NEAR_THRESHOLD_TOL = 1e-12
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Rips:
    max_edge: float = 1.0
    name = "rips"

    def __post_init__(self):
        if not self.max_edge > 0:
            raise ValueError("max_edge must be positive")


@dataclass(frozen=True)
class DTM:
    """Distance-to-measure filtration. Give ``k_neighbors`` directly, or ``m`` as
    a fraction of N (k = max(1, round(m N)))."""

    max_edge: float = 0.5
    k_neighbors: Optional[int] = None
    m: Optional[float] = None
    name = "dtm"

    def __post_init__(self):
        if not self.max_edge > 0:
            raise ValueError("max_edge must be positive")
        if (self.k_neighbors is None) == (self.m is None):
            raise ValueError("give exactly one of k_neighbors or m")
        if self.m is not None and not 0 < self.m < 1:
            raise ValueError("m must lie in (0, 1)")

    def k_for(self, n: int) -> int:
        k = self.k_neighbors if self.k_neighbors is not None else max(1, int(round(self.m * n)))
        if not 1 <= k < n:
            raise ValueError(f"need 1 <= k_neighbors < N, got k={k}, N={n}")
        return k


@dataclass(frozen=True)
class Height:
    direction: tuple = (1.0, 0.0)
    max_edge: float = 0.1
    name = "height"

    def __post_init__(self):
        v = np.asarray(self.direction, float)
        if abs(np.linalg.norm(v) - 1) > 1e-12:
            raise ValueError("direction must be a unit vector")
        if not self.max_edge > 0:
            raise ValueError("max_edge must be positive")
        object.__setattr__(self, "direction", tuple(float(x) for x in v))


FiltrationKind = Union[Rips, DTM, Height]


def kind_from_dict(d: dict) -> FiltrationKind:
    d = dict(d)
    name = d.pop("kind", d.pop("name", None))
    if name == "rips":
        return Rips(**d)
    if name == "dtm":
        return DTM(**d)
    if name == "height":
        if "direction" in d:
            d["direction"] = tuple(d["direction"])
        return Height(**d)
    raise ValueError(f"unknown filtration kind {name!r}")


def kind_to_dict(kind: FiltrationKind) -> dict:
    out = {"kind": kind.name, "max_edge": kind.max_edge}
    if isinstance(kind, DTM):
        out.update(k_neighbors=kind.k_neighbors, m=kind.m)
    if isinstance(kind, Height):
        out["direction"] = list(kind.direction)
    return out


@dataclass
class FilteredComplex:
    """Simplices listed in a strict filtration order.

    The order sorts by (value, dimension, vertex tuple). Row ``p`` of ``verts``
    holds the vertices of the p-th simplex, padded with -1. ``defining[p]`` is
    the edge (Rips, DTM) or vertex (height; second slot -1) whose value the
    simplex inherits, i.e. what the value is differentiated through.
    """

    verts: np.ndarray
    values: np.ndarray
    dims: np.ndarray
    max_dim: int
    kind: FiltrationKind
    n_points: int
    defining: np.ndarray
    vertex_values: np.ndarray
    knn: Optional[np.ndarray] = None  # DTM neighbour indices, (N, k)
    diagnostics: dict = field(default_factory=dict)
    _lookup: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.values)

    def simplex(self, pos: int) -> Simplex:
        return tuple(int(v) for v in self.verts[pos, :self.dims[pos] + 1])

    @property
    def simplices(self) -> list:
        return [self.simplex(p) for p in range(len(self))]

    def _dim_lookup(self, d: int):
        if d not in self._lookup:
            pos = np.flatnonzero(self.dims == d)
            keys = encode_keys(self.verts[pos, :d + 1], self.n_points)
            o = np.argsort(keys)
            self._lookup[d] = (keys[o], pos[o])
        return self._lookup[d]

    def positions(self, verts: np.ndarray) -> np.ndarray:
        """Order positions of simplices given as sorted vertex rows of one dimension."""
        verts = np.atleast_2d(np.asarray(verts, dtype=np.int64))
        keys, pos = self._dim_lookup(verts.shape[1] - 1)
        q = encode_keys(verts, self.n_points)
        i = np.searchsorted(keys, q)
        i = np.minimum(i, len(keys) - 1)
        if len(keys) == 0 or np.any(keys[i] != q):
            raise KeyError("simplex not in complex")
        return pos[i]

    def position(self, simplex: Simplex) -> int:
        return int(self.positions(np.array([sorted(simplex)]))[0])

    def value(self, simplex: Simplex) -> float:
        return float(self.values[self.position(simplex)])

    @property
    def generic(self) -> bool:
        return bool(self.diagnostics.get("generic", True))

    def positions_of_dim(self, d: int) -> np.ndarray:
        return np.flatnonzero(self.dims == d)

    def check_order(self) -> None:
        """Raise AssertionError unless values are monotone and faces precede cofaces."""
        for d in range(1, self.max_dim + 1):
            pos = self.positions_of_dim(d)
            if len(pos) == 0:
                continue
            V = self.verts[pos, :d + 1]
            for drop in range(d + 1):
                F = np.delete(V, drop, axis=1)
                fp = self.positions(F)
                if np.any(fp >= pos) or np.any(self.values[fp] > self.values[pos]):
                    raise AssertionError("filtration order violated")


def _vertex_values(pts: np.ndarray, dist: np.ndarray, kind) -> tuple[np.ndarray, Optional[np.ndarray]]:
    n = len(pts)
    if isinstance(kind, Rips):
        return np.zeros(n), None
    if isinstance(kind, Height):
        return pts @ np.asarray(kind.direction), None
    k = kind.k_for(n)
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    nbrs = np.argsort(d, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(d, nbrs, axis=1).mean(axis=1), nbrs


def _cliques(adj: np.ndarray, lower: np.ndarray, chunk: int = 200_000) -> np.ndarray:
    """Extend each sorted clique (row of ``lower``) by every larger common neighbour."""
    n = adj.shape[0]
    if len(lower) == 0:
        return np.empty((0, lower.shape[1] + 1), dtype=np.int64)
    out = []
    above = np.arange(n)[None, :]
    for start in range(0, len(lower), chunk):
        blk = lower[start:start + chunk]
        mask = adj[blk[:, 0]].copy()
        for c in range(1, blk.shape[1]):
            mask &= adj[blk[:, c]]
        mask &= above > blk[:, -1:]
        r, k = np.nonzero(mask)
        out.append(np.column_stack([blk[r], k]))
    return np.concatenate(out).astype(np.int64)


def encode_keys(verts: np.ndarray, n: int) -> np.ndarray:
    key = np.zeros(len(verts), dtype=np.int64)
    for c in range(verts.shape[1]):
        key = key * n + verts[:, c]
    return key


def build_complex(X: PointCloud, kind: FiltrationKind, max_dim: int = 2) -> FilteredComplex:
    """Clique complex of {(i, j): |x_i - x_j| <= max_edge} up to ``max_dim`` with
    filtration values of the given kind, sorted in the strict order."""
    if max_dim not in (1, 2, 3):
        raise ValueError("max_dim must be 1, 2 or 3")
    pts = X.points
    n = X.n
    dist = cdist(pts, pts)
    vval, knn = _vertex_values(pts, dist, kind)
    adj = dist <= kind.max_edge
    np.fill_diagonal(adj, False)
    iu, ju = np.nonzero(np.triu(adj, 1))
    edges = np.column_stack([iu, ju]).astype(np.int64)
    d_e = dist[iu, ju]
    if isinstance(kind, Rips):
        e_val = d_e
    elif isinstance(kind, DTM):
        e_val = vval[iu] + vval[ju] + d_e / 2
    else:
        e_val = np.maximum(vval[iu], vval[ju])

    layers = [np.arange(n, dtype=np.int64)[:, None], edges]
    layer_vals = [vval.copy(), e_val]
    layer_def = [None, None]
    ev = np.full((n, n), -np.inf)
    ev[iu, ju] = e_val
    ev[ju, iu] = e_val
    # edge order rank, used to break value ties in the defining-edge argmax
    erank = np.full((n, n), -1, dtype=np.int64)
    if len(edges):
        eorder = np.lexsort((ju, iu, e_val))
        r = np.empty(len(edges), dtype=np.int64)
        r[eorder] = np.arange(len(edges))
        erank[iu, ju] = r
        erank[ju, iu] = r
    vrank = np.empty(n, dtype=np.int64)
    vrank[np.lexsort((np.arange(n), vval))] = np.arange(n)

    for d in range(2, max_dim + 1):
        S = _cliques(adj, layers[-1])
        layers.append(S)
        if isinstance(kind, Height):
            ranks = vrank[S]
            arg = np.argmax(ranks, axis=1)
            top = S[np.arange(len(S)), arg]
            layer_vals.append(vval[top])
            layer_def.append(top)
        else:
            best_rank = np.full(len(S), -1, dtype=np.int64)
            best = np.zeros((len(S), 2), dtype=np.int64)
            for a in range(d + 1):
                for b in range(a + 1, d + 1):
                    rk = erank[S[:, a], S[:, b]]
                    upd = rk > best_rank
                    best_rank[upd] = rk[upd]
                    best[upd, 0] = S[upd, a]
                    best[upd, 1] = S[upd, b]
            layer_vals.append(ev[best[:, 0], best[:, 1]])
            layer_def.append(best)

    # strict order: value, then dimension, then vertex tuple
    width = max_dim + 1
    padded, vals, dims, defs = [], [], [], []
    for d, (S, v) in enumerate(zip(layers, layer_vals)):
        P = np.full((len(S), width), -1, dtype=np.int64)
        P[:, :d + 1] = S
        padded.append(P)
        vals.append(v)
        dims.append(np.full(len(S), d))
        D = np.full((len(S), 2), -1, dtype=np.int64)
        if d == 0:
            D[:, 0] = S[:, 0]
        elif d == 1:
            if isinstance(kind, Height):
                D[:, 0] = np.where(vrank[S[:, 0]] > vrank[S[:, 1]], S[:, 0], S[:, 1])
            else:
                D[:] = S
        elif isinstance(kind, Height):
            D[:, 0] = layer_def[d]
        else:
            D[:] = layer_def[d]
        defs.append(D)
    P = np.concatenate(padded)
    vals = np.concatenate(vals)
    dims = np.concatenate(dims)
    defs = np.concatenate(defs)
    keys = [P[:, c] for c in range(width - 1, -1, -1)] + [dims, vals]
    order = np.lexsort(keys)

    fc = FilteredComplex(verts=P[order], values=vals[order], dims=dims[order], max_dim=max_dim,
                         kind=kind, n_points=n, defining=defs[order], vertex_values=vval, knn=knn)
    fc.diagnostics = genericity_report(X, kind, dist=dist, vval=vval, edge_vals=e_val,
                                       edge_dists=d_e, edges=edges)
    return fc


def genericity_report(X: PointCloud, kind: FiltrationKind, dist=None, vval=None, edge_vals=None,
                      edge_dists=None, edges=None) -> dict:
    """Ties among the quantities the filtration order depends on, and edges whose
    length sits on the max_edge threshold."""
    pts = X.points
    if dist is None:
        dist = cdist(pts, pts)
    if vval is None:
        vval, _ = _vertex_values(pts, dist, kind)
    if edges is None:
        adj = dist <= kind.max_edge
        iu, ju = np.nonzero(np.triu(adj, 1))
        edges = np.column_stack([iu, ju])
        edge_dists = dist[iu, ju]
        if isinstance(kind, Rips):
            edge_vals = edge_dists
        elif isinstance(kind, DTM):
            edge_vals = vval[iu] + vval[ju] + edge_dists / 2
        else:
            edge_vals = np.maximum(vval[iu], vval[ju])

    def close_pairs(vals, items):
        if len(vals) < 2:
            return []
        o = np.argsort(vals, kind="stable")
        sv = vals[o]
        scale = np.maximum(np.abs(sv[1:]), 1.0)
        hit = np.flatnonzero(np.abs(np.diff(sv)) <= TIE_RTOL * scale)
        return [(items[o[h]], items[o[h + 1]]) for h in hit]

    report = {"ties": [], "near_threshold": [], "knn_ties": []}
    if isinstance(kind, Height):
        report["ties"] = [("vertex", a, b) for a, b in close_pairs(vval, list(range(X.n)))]
    else:
        items = [tuple(map(int, e)) for e in edges]
        report["ties"] = [("edge", a, b) for a, b in close_pairs(np.asarray(edge_vals), items)]
    iu, ju = np.triu_indices(X.n, 1)
    near = np.flatnonzero(np.abs(dist[iu, ju] - kind.max_edge) <= NEAR_THRESHOLD_TOL)
    report["near_threshold"] = [(int(iu[h]), int(ju[h])) for h in near]
    if isinstance(kind, DTM):
        k = kind.k_for(X.n)
        d = dist.copy()
        np.fill_diagonal(d, np.inf)
        sd = np.sort(d, axis=1)
        bad = np.flatnonzero(np.abs(sd[:, k] - sd[:, k - 1]) <= TIE_RTOL * np.maximum(sd[:, k], 1.0))
        report["knn_ties"] = [int(i) for i in bad]
    report["generic"] = not (report["ties"] or report["near_threshold"] or report["knn_ties"])
    return report


def _dtm_vertex_terms(pts: np.ndarray, knn: np.ndarray, i: int, coef: float, acc: dict):
    k = knn.shape[1]
    for j in knn[i]:
        u = pts[i] - pts[j]
        u = u / np.linalg.norm(u)
        acc[i] = acc.get(i, 0) + coef * u / k
        acc[int(j)] = acc.get(int(j), 0) - coef * u / k


def gradient_terms(X: PointCloud, complex: FilteredComplex, position: int) -> dict:
    """d phi(simplex at ``position``) / dX as {point index: D-vector}."""
    pts = X.points
    kind = complex.kind
    dim = complex.dims[position]
    p, q = (int(v) for v in complex.defining[position])
    acc: dict = {}
    if isinstance(kind, Height):
        acc[p] = np.asarray(kind.direction, float).copy()
        return acc
    if dim == 0:
        if isinstance(kind, DTM):
            _dtm_vertex_terms(pts, complex.knn, p, 1.0, acc)
        return acc
    u = pts[q] - pts[p]
    u = u / np.linalg.norm(u)
    if isinstance(kind, Rips):
        acc[q] = u.copy()
        acc[p] = -u
        return acc
    acc[q] = 0.5 * u
    acc[p] = -0.5 * u
    _dtm_vertex_terms(pts, complex.knn, p, 1.0, acc)
    _dtm_vertex_terms(pts, complex.knn, q, 1.0, acc)
    return acc


def filtration_gradient(X: PointCloud, complex: FilteredComplex, simplex: Simplex) -> sps.csr_array:
    """Sparse N x D matrix of d phi(simplex) / d x_i."""
    pos = complex.position(simplex)
    terms = gradient_terms(X, complex, pos)
    rows, cols, data = [], [], []
    for i, g in terms.items():
        for d in range(X.dim):
            if g[d] != 0:
                rows.append(i)
                cols.append(d)
                data.append(g[d])
    return sps.csr_array((data, (rows, cols)), shape=(X.n, X.dim))


def filtration_value(X: PointCloud, kind: FiltrationKind, simplex: Simplex) -> float:
    """Value of a single simplex computed from scratch (no complex needed)."""
    pts = X.points
    s = tuple(simplex)
    if isinstance(kind, Height):
        return float(max(pts[i] @ np.asarray(kind.direction) for i in s))
    if isinstance(kind, Rips):
        if len(s) == 1:
            return 0.0
        return float(max(np.linalg.norm(pts[a] - pts[b]) for ai, a in enumerate(s) for b in s[ai + 1:]))
    dist = cdist(pts, pts)
    vval, _ = _vertex_values(pts, dist, kind)
    if len(s) == 1:
        return float(vval[s[0]])
    return float(max(vval[a] + vval[b] + dist[a, b] / 2 for ai, a in enumerate(s) for b in s[ai + 1:]))
