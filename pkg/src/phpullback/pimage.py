"""Persistence images: birth-lifespan transform, Gaussian kernel, weighting and
lower-left-corner pixel quadrature, with closed-form derivatives in (b, l)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import gammaln

from .persistence import Diagram

TRUNCATE_SIGMAS = 8.0


@dataclass(frozen=True)
class Linear:
    """alpha(b, l) = l / l_max."""

    l_max: float = 1.0

    def __post_init__(self):
        if not self.l_max > 0:
            raise ValueError("l_max must be positive")

    def __call__(self, b, l):
        return np.asarray(l) / self.l_max

    def dl(self, b, l):
        return np.full(np.shape(l), 1.0 / self.l_max)


@dataclass(frozen=True)
class Beta:
    """Beta-density weighting in kappa * l with mean ``k_mean`` and variance ``s2``."""

    k_mean: float
    s2: float
    kappa: float = 1.0

    def __post_init__(self):
        if not 0 < self.k_mean < 1:
            raise ValueError("k_mean must lie in (0, 1)")
        if not 0 < self.s2 < self.k_mean * (1 - self.k_mean):
            raise ValueError("need 0 < s2 < k_mean (1 - k_mean) for positive beta shapes")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @property
    def shapes(self) -> tuple[float, float]:
        c = self.k_mean * (1 - self.k_mean) / self.s2 - 1
        return self.k_mean * c, (1 - self.k_mean) * c

    def _log_norm(self):
        a, b = self.shapes
        return gammaln(a + b) - gammaln(a) - gammaln(b)

    def __call__(self, b, l):
        a, bb = self.shapes
        t = self.kappa * np.asarray(l)
        out = np.zeros_like(t)
        inside = (t > 0) & (t < 1)
        ti = t[inside]
        out[inside] = np.exp(self._log_norm() + (a - 1) * np.log(ti) + (bb - 1) * np.log1p(-ti))
        # closed support endpoints: finite only where the exponent allows
        for edge, expo in ((0.0, a - 1), (1.0, bb - 1)):
            at = t == edge
            if np.any(at):
                out[at] = np.exp(self._log_norm()) if expo == 0 else (0.0 if expo > 0 else np.inf)
        return out

    def dl(self, b, l):
        a, bb = self.shapes
        t = self.kappa * np.asarray(l)
        out = np.zeros_like(t)
        inside = (t > 0) & (t < 1)
        ti = t[inside]
        pdf = self(b, l)[inside]
        out[inside] = self.kappa * pdf * ((a - 1) / ti - (bb - 1) / (1 - ti))
        return out


Weighting = Union[Linear, Beta]


def weight(w: Weighting, b: float, l: float) -> float:
    return float(w(np.asarray([b], float), np.asarray([l], float))[0])


@dataclass(frozen=True)
class PIParams:
    resolution: int = 20
    variance: float = 1e-4
    x_range: tuple = (0.0, 1.0)
    y_range: tuple = (0.0, 1.0)
    weighting: Weighting = Linear(1.0)
    quad: str = "corner"  # or "center"

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise ValueError("image range must have positive extent")
        if self.quad not in ("corner", "center"):
            raise ValueError("quad must be 'corner' or 'center'")
        object.__setattr__(self, "x_range", tuple(map(float, self.x_range)))
        object.__setattr__(self, "y_range", tuple(map(float, self.y_range)))

    @property
    def steps(self) -> tuple[float, float]:
        P = self.resolution
        return ((self.x_range[1] - self.x_range[0]) / P, (self.y_range[1] - self.y_range[0]) / P)

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Evaluation nodes: pixel lower-left corners (or centres)."""
        dx, dy = self.steps
        off = 0.5 if self.quad == "center" else 0.0
        i = np.arange(self.resolution) + off
        return self.x_range[0] + i * dx, self.y_range[0] + i * dy


@dataclass
class PersistenceImage:
    pixels: np.ndarray  # (P, P); row = birth index, column = lifespan index
    params: PIParams


@dataclass
class DiagramJacobian:
    """d PI / d b_p and d PI / d l_p for every diagram point p, each (n_pts, P, P)."""

    d_birth: np.ndarray
    d_lifespan: np.ndarray


def to_birth_lifespan(diagram: Diagram) -> np.ndarray:
    if not diagram.capped:
        raise ValueError("diagram has infinite deaths; cap it first")
    bd = diagram.as_array()
    return np.column_stack([bd[:, 0], bd[:, 1] - bd[:, 0]]) if len(bd) else np.zeros((0, 2))


def _kernel_terms(bl: np.ndarray, params: PIParams, dtype=float):
    xs, ys = (np.asarray(a, dtype) for a in params.grid())
    bl = np.asarray(bl, dtype)
    g2 = dtype(params.variance)
    ex = xs[None, :] - bl[:, :1]  # (n, P)
    ey = ys[None, :] - bl[:, 1:2]
    r2 = ex[:, :, None] ** 2 + ey[:, None, :] ** 2
    g = np.exp(-r2 / (2 * g2)) / (2 * dtype(np.pi) * g2)
    g[r2 > (TRUNCATE_SIGMAS ** 2) * g2] = 0.0
    return ex, ey, g


def pi_from_points(bl: np.ndarray, params: PIParams, dtype=float) -> np.ndarray:
    """Pixel values for birth-lifespan points ``bl``; ``dtype`` sets the working
    precision (np.longdouble gives reference-quality values)."""
    P = params.resolution
    if len(bl) == 0:
        return np.zeros((P, P), dtype=dtype)
    dx, dy = (dtype(v) for v in params.steps)
    if dtype is float:
        alpha = params.weighting(bl[:, 0], bl[:, 1])
    else:
        alpha = np.asarray(params.weighting(bl[:, 0].astype(dtype), bl[:, 1].astype(dtype)), dtype)
    alpha = np.where(bl[:, 1] > 0, alpha, 0)
    _, _, g = _kernel_terms(bl, params, dtype)
    return dx * dy * np.einsum("n,nij->ij", alpha, g)


def compute_pi(diagram: Diagram, params: PIParams) -> PersistenceImage:
    """PI_ij = dx dy sum_p alpha(b_p, l_p) g_p(x_i, y_j), g an isotropic Gaussian
    density of variance ``params.variance``."""
    return PersistenceImage(pi_from_points(to_birth_lifespan(diagram), params), params)


def derivatives_from_points(bl: np.ndarray, params: PIParams) -> DiagramJacobian:
    P = params.resolution
    if len(bl) == 0:
        z = np.zeros((0, P, P))
        return DiagramJacobian(z, z.copy())
    dx, dy = params.steps
    live = bl[:, 1] > 0
    alpha = np.where(live, params.weighting(bl[:, 0], bl[:, 1]), 0.0)
    dalpha = np.where(live, params.weighting.dl(bl[:, 0], bl[:, 1]), 0.0)
    ex, ey, g = _kernel_terms(bl, params)
    g2 = params.variance
    # d g / d b = g (x - b) / gamma^2, likewise for l
    dg_db = g * ex[:, :, None] / g2
    dg_dl = g * ey[:, None, :] / g2
    s = dx * dy
    d_b = s * alpha[:, None, None] * dg_db
    d_l = s * (dalpha[:, None, None] * g + alpha[:, None, None] * dg_dl)
    return DiagramJacobian(d_b, d_l)


def pi_derivatives(diagram: Diagram, params: PIParams) -> DiagramJacobian:
    """Closed-form pixel derivatives; zero-lifespan points contribute nothing."""
    return derivatives_from_points(to_birth_lifespan(diagram), params)


def write_pi_csv(image: PersistenceImage, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        for row in image.pixels:
            w.writerow(["%.17g" % v for v in row])


def read_pi_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


def weighting_from_dict(d: dict) -> Weighting:
    d = dict(d)
    kind = d.pop("kind", "linear")
    if kind == "linear":
        return Linear(**d)
    if kind == "beta":
        return Beta(**d)
    raise ValueError(f"unknown weighting {kind!r}")


def weighting_to_dict(w: Weighting) -> dict:
    if isinstance(w, Linear):
        return {"kind": "linear", "l_max": w.l_max}
    return {"kind": "beta", "k_mean": w.k_mean, "s2": w.s2, "kappa": w.kappa}
