"""Synthetic point-cloud generators and ingestion helpers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import PointCloud, read_cloud, write_cloud_csv


@dataclass
class Dataset:
    clouds: list
    labels: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.clouds = list(self.clouds)
        if not self.clouds:
            return
        n, d = self.clouds[0].n, self.clouds[0].dim
        if any(c.n != n or c.dim != d for c in self.clouds):
            raise ValueError("all clouds of a dataset must share N and D")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if len(self.labels) != len(self.clouds):
                raise ValueError("labels must have one entry per cloud")

    def __len__(self):
        return len(self.clouds)

    def __iter__(self):
        return iter(self.clouds)

    def __getitem__(self, i):
        return self.clouds[i]


def _scale_to_unit_box(pts: np.ndarray) -> np.ndarray:
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float((hi - lo).max())
    if span == 0:
        return pts - lo
    return (pts - lo) / span


def gen_rfp(a: float, w: int, n_points: int = 150, seed=None) -> PointCloud:
    """Radial frequency pattern rho(theta) = 1 + a cos(w theta), scaled into [0, 1]^2.

    Sampling is even in theta at theta_k = 2 pi k / n, k = 1..n. ``seed`` is
    accepted for interface symmetry; the output is deterministic.
    """
    if not 0 < a < 1:
        raise ValueError("need 0 < a < 1 (a >= 1 makes the radius change sign)")
    if w < 1 or n_points < 3:
        raise ValueError("need w >= 1 and n_points >= 3")
    theta = 2 * np.pi * np.arange(1, n_points + 1) / n_points
    r = 1 + a * np.cos(w * theta)
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return PointCloud(_scale_to_unit_box(pts), id=f"rfp_a{a:.4f}_w{w}")


def rfp_dataset(ws: Sequence[int] = range(3, 11), n_a: int = 10, a_range=(0.5, 0.9),
                n_points: int = 150, jitter: float = 0.0, seed: int = 0) -> Dataset:
    """The standard RFP grid: w in 3..10 times n_a values of a evenly spaced on a_range."""
    rng = np.random.default_rng(seed)
    clouds, labels = [], []
    for w in ws:
        for a in np.linspace(*a_range, n_a):
            c = gen_rfp(float(a), int(w), n_points)
            if jitter > 0:
                c = jittered(c, jitter, rng)
            clouds.append(c)
            labels.append(int(w))
    return Dataset(clouds, np.array(labels),
                   dict(generator="rfp", ws=list(map(int, ws)), n_a=n_a, a_range=list(a_range),
                        n_points=n_points, jitter=jitter, seed=seed))


def jittered(cloud: PointCloud, std: float, rng: np.random.Generator, max_tries: int = 10) -> PointCloud:
    for _ in range(max_tries):
        try:
            return cloud.with_points(cloud.points + rng.normal(scale=std, size=cloud.points.shape))
        except ValueError:
            continue
    raise RuntimeError("could not draw a collision-free jitter")


def gen_ellipse(width: float, height: float, n_points: int = 100, seed=None) -> PointCloud:
    """Axis-aligned ellipse of the given width and height centred at the origin.

    Points are evenly spaced in the angular parameter when ``seed`` is None,
    otherwise drawn uniformly at random in it.
    """
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    if seed is None:
        t = 2 * np.pi * np.arange(n_points) / n_points
    else:
        t = np.sort(np.random.default_rng(seed).uniform(0, 2 * np.pi, n_points))
    pts = np.column_stack([0.5 * width * np.cos(t), 0.5 * height * np.sin(t)])
    return PointCloud(pts, id=f"ellipse_w{width:.4f}_h{height:.4f}")


def gen_circle(n_points: int, jitter: float = 0.0, seed=None) -> PointCloud:
    if n_points < 3 or jitter < 0:
        raise ValueError("need n_points >= 3 and jitter >= 0")
    t = 2 * np.pi * np.arange(n_points) / n_points
    base = PointCloud(np.column_stack([np.cos(t), np.sin(t)]), id=f"circle_{n_points}")
    if jitter == 0:
        return base
    return jittered(base, jitter, np.random.default_rng(seed))


def ellipse_grid(n_grid: int = 5, lo: float = 1.0, hi: float = 2.0, n_points: int = 100,
                 seed: Optional[int] = 0) -> Dataset:
    """n_grid x n_grid ellipses with (w, h) on an even grid over [lo, hi]^2; labels are min(w, h)."""
    clouds, labels, wh = [], [], []
    vals = np.linspace(lo, hi, n_grid)
    for i, w in enumerate(vals):
        for j, h in enumerate(vals):
            s = None if seed is None else seed + i * n_grid + j
            clouds.append(gen_ellipse(float(w), float(h), n_points, s))
            labels.append(min(w, h))
            wh.append((float(w), float(h)))
    return Dataset(clouds, np.array(labels),
                   dict(generator="ellipse", n_grid=n_grid, lo=lo, hi=hi, n_points=n_points,
                        seed=seed, wh=wh))


def dilated_circles(n_per_class: int = 10, n_points: int = 40, dilation: float = 1.1,
                    radius_range=(0.2, 0.3), jitter: float = 0.005, seed: int = 0) -> Dataset:
    """Binary-labelled circles centred in the unit square: class 1 is class 0 dilated.

    Each class-0 cloud has a random radius in ``radius_range`` and its own noise;
    its class-1 partner is the same cloud scaled about the centre by ``dilation``.
    """
    rng = np.random.default_rng(seed)
    zeros, ones = [], []
    t = 2 * np.pi * np.arange(n_points) / n_points
    for i in range(n_per_class):
        r = rng.uniform(*radius_range)
        base = PointCloud(0.5 + r * np.column_stack([np.cos(t), np.sin(t)]), id=f"circle0_{i:03d}")
        c0 = jittered(base, jitter, rng) if jitter > 0 else base
        zeros.append(c0)
        ones.append(PointCloud(0.5 + dilation * (c0.points - 0.5), id=f"circle1_{i:03d}"))
    return Dataset(zeros + ones, np.array([0] * n_per_class + [1] * n_per_class),
                   dict(generator="circles", n_per_class=n_per_class, n_points=n_points,
                        dilation=dilation, radius_range=list(radius_range), jitter=jitter, seed=seed))


def subsample(X: PointCloud, n: int, seed=None) -> PointCloud:
    if n > X.n or n < 1:
        raise ValueError(f"cannot draw {n} points without replacement from {X.n}")
    idx = np.random.default_rng(seed).choice(X.n, size=n, replace=False)
    meta = None if X.meta is None else tuple(X.meta[i] for i in idx)
    return PointCloud(X.points[idx], id=X.id, meta=meta)


def normalize_unit_cube(X: PointCloud) -> PointCloud:
    """Uniform scale plus translation taking the bounding box into [0, 1]^D."""
    return X.with_points(_scale_to_unit_box(X.points))


SIDECARS = ("manifest.json", "perturbation.json", "results.json", "diagnostics.json")


def load_directory(path, labels: Optional[dict] = None) -> Dataset:
    """Read every CSV/JSON cloud in a directory (sorted by name).

    Labels come from ``manifest.json`` when present, else from ``labels``.
    """
    path = Path(path)
    manifest = {}
    if (path / "manifest.json").exists():
        manifest = json.loads((path / "manifest.json").read_text())
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".csv", ".json")
                   and p.name not in SIDECARS)
    clouds = [read_cloud(p) for p in files]
    lab = manifest.get("labels") or labels
    if isinstance(lab, dict):
        lab = [lab[c.id] for c in clouds]
    return Dataset(clouds, None if lab is None else np.asarray(lab), manifest.get("params", {}))


def write_directory(ds: Dataset, path, generator: str, seed=None) -> list:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    written = []
    width = max(3, len(str(len(ds))))
    names = []
    for i, c in enumerate(ds.clouds):
        name = f"cloud_{i:0{width}d}"
        p = path / f"{name}.csv"
        write_cloud_csv(c, p)
        written.append(p)
        names.append(name)
    manifest = dict(generator=generator, params=ds.params, seed=seed,
                    labels=None if ds.labels is None else {n: _jsonable(l) for n, l in zip(names, ds.labels)})
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    written.append(path / "manifest.json")
    return written


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    return v
