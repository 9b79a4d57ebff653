"""Point clouds, the 2-Wasserstein distance between them, local
optimal-transport charts and rigid (ICP) registration."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist


class ChartValidityWarning(UserWarning):
    """Raised when a cloud lies outside the isometric chart radius of a base cloud."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N distinct points in R^D with a fixed canonical index order."""

    points: np.ndarray
    id: Optional[str] = None
    meta: Optional[tuple] = None  # per-point segment tags

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be an (N, D) array with N, D >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("points of a PointCloud must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.meta is not None:
            meta = tuple(self.meta)
            if len(meta) != len(pts):
                raise ValueError("meta must carry one tag per point")
            object.__setattr__(self, "meta", meta)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def flatten(self) -> np.ndarray:
        """Chart coordinates of the cloud at itself: row-major (N*D,) vector."""
        return self.points.reshape(-1).copy()

    def min_separation(self) -> float:
        if self.n < 2:
            return np.inf
        return float(pdist(self.points).min())

    def with_points(self, points, id=None) -> "PointCloud":
        return PointCloud(points, id=self.id if id is None else id, meta=self.meta)

    def __repr__(self):
        return f"PointCloud(n={self.n}, dim={self.dim}, id={self.id!r})"


@dataclass(frozen=True)
class Assignment:
    """Bijection i -> permutation[i] from the points of X to the points of Y."""

    permutation: np.ndarray
    cost: float


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "RigidTransform":
        return cls(np.eye(dim), np.zeros(dim))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation.T + self.translation

    def __call__(self, cloud: PointCloud) -> PointCloud:
        return cloud.with_points(self.apply(cloud.points))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


def _check_pair(X: PointCloud, Y: PointCloud):
    if X.dim != Y.dim:
        raise ValueError(f"ambient dimension mismatch: {X.dim} vs {Y.dim}")
    if X.n != Y.n:
        raise ValueError(f"cloud sizes differ: {X.n} vs {Y.n}")


def optimal_assignment(X: PointCloud, Y: PointCloud) -> Assignment:
    _check_pair(X, Y)
    cost = cdist(X.points, Y.points, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(X.n, dtype=int)
    perm[rows] = cols
    return Assignment(perm, float(cost[rows, cols].sum()))


def wasserstein_distance(X: PointCloud, Y: PointCloud) -> tuple[float, Assignment]:
    """Exact 2-Wasserstein distance between equal-size clouds.

    Returns the distance together with an optimal bijection attaining it.
    """
    a = optimal_assignment(X, Y)
    return float(np.sqrt(max(a.cost, 0.0))), a


def chart_coordinates(base: PointCloud, Y: PointCloud, warn: bool = True) -> np.ndarray:
    """Coordinates of Y in the local optimal-transport chart centred at ``base``.

    The points of Y are reordered to follow base's canonical index order via the
    optimal assignment, then flattened. Inside the chart radius (a Wasserstein
    ball of radius delta/8, delta the minimal separation of base) Euclidean
    distances of coordinates equal Wasserstein distances.
    """
    dist, a = wasserstein_distance(base, Y)
    if warn and base.n > 1 and 2.0 * dist >= base.min_separation() / 4.0:
        warnings.warn(
            f"cloud is at Wasserstein distance {dist:.3g} from the chart base, outside the "
            f"isometric radius {base.min_separation() / 8:.3g}",
            ChartValidityWarning, stacklevel=2)
    return Y.points[a.permutation].reshape(-1).copy()


def from_chart_coordinates(base: PointCloud, coords: np.ndarray) -> PointCloud:
    return base.with_points(np.asarray(coords, float).reshape(base.n, base.dim))


def kabsch(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid motion mapping source rows onto target rows."""
    cs, ct = source.mean(axis=0), target.mean(axis=0)
    H = (source - cs).T @ (target - ct)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0:
        d = 1.0
    S = np.eye(source.shape[1])
    S[-1, -1] = d
    R = Vt.T @ S @ U.T
    return RigidTransform(R, ct - R @ cs)


def icp_align(target: PointCloud, source: PointCloud, max_iters: int = 100,
              tol: float = 1e-12) -> tuple[RigidTransform, float]:
    """Point-to-point ICP registering ``source`` onto ``target``.

    Starts from centroid alignment with identity rotation. The error is the mean
    squared nearest-neighbour distance from the moved source to the target.
    """
    if target.dim != source.dim:
        raise ValueError("ambient dimension mismatch")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    tree = cKDTree(target.points)
    src = source.points
    D = source.dim
    T = RigidTransform(np.eye(D), target.points.mean(axis=0) - src.mean(axis=0))
    moved = T.apply(src)
    dist, idx = tree.query(moved)
    err = float(np.mean(dist ** 2))
    for _ in range(max_iters):
        T_new = kabsch(src, target.points[idx])
        moved = T_new.apply(src)
        dist, idx_new = tree.query(moved)
        new_err = float(np.mean(dist ** 2))
        if new_err > err:
            break
        improvement = err - new_err
        T, err, idx = T_new, new_err, idx_new
        if improvement < tol:
            break
    return T, err


def icp_discrepancy(X: PointCloud, Y: PointCloud, max_iters: int = 100, tol: float = 1e-12) -> float:
    """d_W(X, iota(Y)) with iota the ICP registration of Y onto X. Not symmetric."""
    _check_pair(X, Y)
    T, _ = icp_align(X, Y, max_iters, tol)
    return wasserstein_distance(X, T(Y))[0]


# --- file formats ---------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v)) if np.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


def write_cloud_csv(cloud: PointCloud, path) -> None:
    path = Path(path)
    header = [f"x{d}" for d in range(cloud.dim)]
    if cloud.meta is not None:
        header.append("segment")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(cloud.points):
            out = ["%.17g" % v for v in row]
            if cloud.meta is not None:
                out.append(str(cloud.meta[i]))
            w.writerow(out)


def read_cloud_csv(path, id: Optional[str] = None) -> PointCloud:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    coord_cols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    if not coord_cols:
        raise ValueError(f"{path}: header must name coordinate columns x0, x1, ...")
    coord_cols.sort(key=lambda i: int(header[i][1:]))
    seg_col = header.index("segment") if "segment" in header else None
    pts = np.array([[float(r[i]) for i in coord_cols] for r in rows[1:] if r], dtype=float)
    meta = tuple(r[seg_col] for r in rows[1:] if r) if seg_col is not None else None
    return PointCloud(pts, id=id if id is not None else path.stem, meta=meta)


def write_cloud_json(cloud: PointCloud, path) -> None:
    Path(path).write_text(json.dumps(cloud.points.tolist()))


def read_cloud_json(path, id: Optional[str] = None) -> PointCloud:
    path = Path(path)
    return PointCloud(np.array(json.loads(path.read_text()), dtype=float),
                      id=id if id is not None else path.stem)


def read_cloud(path, id: Optional[str] = None) -> PointCloud:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return read_cloud_json(path, id)
    return read_cloud_csv(path, id)


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.normal(size=(dim, dim)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def stack_flat(clouds: Sequence[PointCloud]) -> np.ndarray:
    return np.stack([c.flatten() for c in clouds])
