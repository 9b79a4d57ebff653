"""Perturbation families, perturbation fields read off through the optimal-transport
chart, and feature-gradient fields estimated from labelled datasets."""

from __future__ import annotations

from dataclasses import asdict, dataclass
import csv
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .geometry import PointCloud, chart_coordinates, icp_align, wasserstein_distance


@dataclass(frozen=True)
class Rotation:
    eps: float = 1e-3  # angle about the centroid (D = 2: plane; D > 2: first two axes)


@dataclass(frozen=True)
class Translation:
    eps: float = 1e-3
    direction: Optional[tuple] = None  # unit vector; default first axis


@dataclass(frozen=True)
class Dilation:
    eps: float = 1e-3


@dataclass(frozen=True)
class StretchX:
    eps: float = 1e-3


@dataclass(frozen=True)
class Shearing:
    eps: float = 1e-3


@dataclass(frozen=True)
class Noising:
    eps: float = 1e-3
    seed: int = 0
    segment: Optional[str] = None  # restrict to points with this meta tag


@dataclass(frozen=True)
class Wiggly:
    eps: float = 1e-3
    frequency: float = 8.0
    seed: int = 0  # draws the phase


@dataclass(frozen=True)
class Convex:
    t: float = 1e-3

    def __post_init__(self):
        if not 0 <= self.t <= 1:
            raise ValueError("convex interpolation t must lie in [0, 1]")


PerturbationKind = Union[Rotation, Translation, Dilation, StretchX, Shearing, Noising, Wiggly, Convex]

FAMILIES = {
    "rotation": Rotation, "translation": Translation, "dilation": Dilation,
    "stretch_x": StretchX, "shearing": Shearing, "noising": Noising,
    "wiggly": Wiggly, "convex": Convex,
}


def family_name(kind) -> str:
    for name, cls in FAMILIES.items():
        if isinstance(kind, cls):
            return name
    raise TypeError(f"unknown perturbation {kind!r}")


def make_perturbation(name: str, magnitude: float, **kw) -> PerturbationKind:
    cls = FAMILIES[name]
    if cls is Convex:
        return Convex(t=magnitude)
    return cls(eps=magnitude, **kw)


def default_magnitude(X: PointCloud, rel: float = 1e-3) -> float:
    """rel times the bounding-box diagonal of X."""
    return rel * float(np.linalg.norm(X.points.max(axis=0) - X.points.min(axis=0)))


def default_perturbation(name: str, X: PointCloud, rel: float = 1e-3, **kw) -> PerturbationKind:
    """Family member with magnitude ``rel`` times X's bounding-box diagonal."""
    return make_perturbation(name, default_magnitude(X, rel), **kw)


def perturbation_to_dict(kind) -> dict:
    return {"kind": family_name(kind), **asdict(kind)}


def perturbation_from_dict(d: dict) -> PerturbationKind:
    d = dict(d)
    cls = FAMILIES[d.pop("kind")]
    if "direction" in d and d["direction"] is not None:
        d["direction"] = tuple(d["direction"])
    return cls(**d)


def _outward_normals(pts: np.ndarray) -> np.ndarray:
    """Per point: perpendicular to the chord between its two nearest neighbours,
    oriented away from the centroid."""
    tree = cKDTree(pts)
    _, nb = tree.query(pts, k=3)
    tangent = pts[nb[:, 2]] - pts[nb[:, 1]]
    normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    out = pts - pts.mean(axis=0)
    flip = np.sum(normal * out, axis=1) < 0
    normal[flip] *= -1
    return normal


def hull_projection(pts: np.ndarray) -> np.ndarray:
    """Radial projection of each point from the centroid onto the convex-hull boundary."""
    c = pts.mean(axis=0)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        raise ValueError("convex hull is degenerate (points are not full-dimensional)") from None
    A, b = hull.equations[:, :-1], hull.equations[:, -1]  # inside: A x + b <= 0
    slack = A @ c + b
    if np.any(slack >= -1e-12):
        raise ValueError("centroid is not in the interior of the convex hull")
    u = pts - c
    proj = pts.copy()
    denom = u @ A.T  # (N, facets)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -slack[None, :] / denom
    s[denom <= 0] = np.inf
    smin = s.min(axis=1)
    moving = np.linalg.norm(u, axis=1) > 0
    proj[moving] = c + smin[moving, None] * u[moving]
    return proj


def _noise(shape, std, seed, mask=None):
    z = std * np.random.default_rng(seed).standard_normal(shape)
    if mask is not None:
        z[~mask] = 0.0
    return z


def apply_perturbation(X: PointCloud, kind: PerturbationKind, _attempt: int = 0) -> PointCloud:
    pts = X.points
    c = pts.mean(axis=0)
    D = X.dim
    if isinstance(kind, Rotation):
        if D < 2:
            raise ValueError("rotation needs D >= 2")
        R = np.eye(D)
        ca, sa = np.cos(kind.eps), np.sin(kind.eps)
        R[:2, :2] = [[ca, -sa], [sa, ca]]
        new = (pts - c) @ R.T + c
    elif isinstance(kind, Translation):
        u = np.zeros(D)
        u[0] = 1.0
        if kind.direction is not None:
            u = np.asarray(kind.direction, float)
            u = u / np.linalg.norm(u)
        new = pts + kind.eps * u
    elif isinstance(kind, Dilation):
        new = c + (1 + kind.eps) * (pts - c)
    elif isinstance(kind, StretchX):
        new = pts.copy()
        new[:, 0] = c[0] + (1 + kind.eps) * (pts[:, 0] - c[0])
    elif isinstance(kind, Shearing):
        if D < 2:
            raise ValueError("shearing needs D >= 2")
        new = pts.copy()
        new[:, 0] = pts[:, 0] + kind.eps * (pts[:, 1] - c[1])
    elif isinstance(kind, Noising):
        mask = None
        if kind.segment is not None:
            if X.meta is None:
                raise ValueError("segment-restricted noising needs per-point segment tags")
            mask = np.array([m == kind.segment for m in X.meta])
        new = pts + _noise(pts.shape, kind.eps, kind.seed + 7919 * _attempt,
                           None if mask is None else np.repeat(mask[:, None], D, axis=1))
    elif isinstance(kind, Wiggly):
        if D != 2:
            raise ValueError("wiggly perturbation is defined for planar clouds")
        phase = np.random.default_rng(kind.seed + 7919 * _attempt).uniform(0, 2 * np.pi)
        theta = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
        new = pts + kind.eps * np.sin(kind.frequency * theta + phase)[:, None] * _outward_normals(pts)
    elif isinstance(kind, Convex):
        new = (1 - kind.t) * pts + kind.t * hull_projection(pts)
    else:
        raise TypeError(f"unknown perturbation {kind!r}")
    try:
        return X.with_points(new)
    except ValueError:
        if isinstance(kind, (Noising, Wiggly)) and _attempt < 9:
            return apply_perturbation(X, kind, _attempt + 1)
        raise


@dataclass
class FieldSample:
    base: PointCloud
    vectors: np.ndarray  # (N, D), base cloud's index order

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, float).reshape(self.base.n, self.base.dim)

    def flat(self) -> np.ndarray:
        return self.vectors.reshape(-1)


def _negated(kind):
    from dataclasses import replace
    return replace(kind, eps=-kind.eps)


def perturbation_field(X: PointCloud, kind: PerturbationKind, normalize: bool = False,
                       warn: bool = True, scheme: str = "central") -> FieldSample:
    """Matched displacement xi_X(pi(X)) - xi_X(X).

    ``scheme="central"`` averages the +eps and -eps perturbations,
    (xi_X(pi_eps X) - xi_X(pi_-eps X)) / 2, which cancels the even-order terms of
    nonlinear families (rotation) and is identical for families linear in eps.
    Convex interpolation has no negative side and always uses the forward form.
    """
    if scheme not in ("central", "forward"):
        raise ValueError("scheme must be 'central' or 'forward'")
    v = chart_coordinates(X, apply_perturbation(X, kind), warn=warn) - X.flatten()
    if scheme == "central" and not isinstance(kind, Convex):
        back = chart_coordinates(X, apply_perturbation(X, _negated(kind)), warn=warn) - X.flatten()
        v = 0.5 * (v - back)
    if normalize:
        nv = np.linalg.norm(v)
        if nv > 0:
            v = v / nv
    return FieldSample(X, v)


def _opposite(dataset, X: PointCloud, index: Optional[int]):
    labels = dataset.labels
    if labels is None:
        raise ValueError("dataset has no labels")
    if index is None:
        index = next(i for i, c in enumerate(dataset.clouds) if c is X)
    cand = [i for i in range(len(dataset)) if labels[i] != labels[index]]
    if not cand:
        raise ValueError("no cloud with the opposite label")
    return cand


def gradient_field_fdm(dataset, X: PointCloud, index: Optional[int] = None,
                       normalize: bool = False, warn: bool = False) -> FieldSample:
    """X' - X in the chart at X, X' the nearest opposite-label cloud under d_W."""
    cand = _opposite(dataset, X, index)
    dists = [wasserstein_distance(X, dataset.clouds[i])[0] for i in cand]
    Xp = dataset.clouds[cand[int(np.argmin(dists))]]
    v = chart_coordinates(X, Xp, warn=warn) - X.flatten()
    if normalize and np.linalg.norm(v) > 0:
        v = v / np.linalg.norm(v)
    return FieldSample(X, v)


def gradient_field_fdm_general(dataset, X: PointCloud, index: Optional[int] = None,
                               warn: bool = False) -> FieldSample:
    """Real-valued feature: X' maximises |rho(Y) - rho(X)| / d_W(X, Y)."""
    labels = np.asarray(dataset.labels, float)
    if index is None:
        index = next(i for i, c in enumerate(dataset.clouds) if c is X)
    best, best_score = None, -np.inf
    for i, Y in enumerate(dataset.clouds):
        if i == index:
            continue
        d = wasserstein_distance(X, Y)[0]
        if d == 0:
            continue
        score = abs(labels[i] - labels[index]) / d
        if score > best_score:
            best, best_score = Y, score
    if best is None:
        raise ValueError("no other cloud to difference against")
    return FieldSample(X, chart_coordinates(X, best, warn=warn) - X.flatten())


def gradient_field_icp(dataset, X: PointCloud, index: Optional[int] = None,
                       normalize: bool = False, warn: bool = False) -> FieldSample:
    """As the FDM estimate, after rigidly registering each candidate onto X by ICP."""
    cand = _opposite(dataset, X, index)
    best, best_d = None, np.inf
    for i in cand:
        Y = dataset.clouds[i]
        T, _ = icp_align(X, Y)
        moved = T(Y)
        d = wasserstein_distance(X, moved)[0]
        if d < best_d:
            best, best_d = moved, d
    v = chart_coordinates(X, best, warn=warn) - X.flatten()
    if normalize and np.linalg.norm(v) > 0:
        v = v / np.linalg.norm(v)
    return FieldSample(X, v)


def write_field_csv(field: FieldSample, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"v{d}" for d in range(field.base.dim)])
        for i, row in enumerate(field.vectors):
            w.writerow([i] + ["%.17g" % v for v in row])
