"""Dataset-level experiments shared by the CLI, the scripts and the tests."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import ChartValidityWarning
from .pullback import (EncodingSpec, average_pullback_norm, bures_wasserstein, gram_matrix,
                       jacobians, svd_spectrum)
from .vectorfields import (default_perturbation, gradient_field_fdm, gradient_field_icp,
                           perturbation_field)


DEFAULT_FAMILIES = ("rotation", "translation", "dilation", "stretch_x", "shearing",
                    "noising", "wiggly", "convex")


@dataclass
class FieldSet:
    """Per-cloud flat tangent vectors for each named field."""

    fields: dict
    chart_warnings: dict = field(default_factory=dict)


def perturbation_fields(dataset, names: Sequence[str], rel: float = 1e-3, seed: int = 0,
                        normalize: bool = True) -> FieldSet:
    out, warned = {}, {}
    for name in names:
        vecs, count = [], 0
        for i, X in enumerate(dataset):
            kw = {"seed": seed + i} if name in ("noising", "wiggly") else {}
            kind = default_perturbation(name, X, rel, **kw)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ChartValidityWarning)
                f = perturbation_field(X, kind, normalize=normalize)
            count += sum(issubclass(w.category, ChartValidityWarning) for w in caught)
            vecs.append(f.flat())
        out[name] = vecs
        warned[name] = count
    return FieldSet(out, warned)


def gradient_fields(dataset, method: str = "fdm", normalize: bool = False) -> list:
    fn = {"fdm": gradient_field_fdm, "icp": gradient_field_icp}[method]
    return [fn(dataset, X, index=i, normalize=normalize).flat() for i, X in enumerate(dataset)]


def norms_table(dataset, fields: dict, spec: EncodingSpec, normalized: bool = True,
                jacs: Optional[Sequence] = None) -> list:
    """Rows (name, mean, std_error) of average pull-back norms."""
    if jacs is None:
        jacs = jacobians(list(dataset), spec)
    return [(name, *average_pullback_norm(dataset, vecs, spec, normalized, jacs=jacs))
            for name, vecs in fields.items()]


@dataclass
class SpectrumSummary:
    ranks: np.ndarray
    decay_indices: np.ndarray
    spectra: list

    @property
    def mean_rank(self) -> float:
        return float(self.ranks.mean())

    @property
    def mean_decay_index(self) -> float:
        return float(self.decay_indices.mean())


def spectrum_summary(jacs: Sequence, rank_rtol: float = 1e-10, threshold: float = 1e-5) -> SpectrumSummary:
    spectra = [svd_spectrum(J, rank_rtol) for J in jacs]
    return SpectrumSummary(np.array([s.rank for s in spectra]),
                           np.array([s.decay_index(threshold) for s in spectra]), spectra)


def sweep_cell(dataset, spec: EncodingSpec, field_vectors: Sequence, workers: int = 1,
               rank_rtol: float = 1e-10) -> dict:
    """Mean Jacobian rank and mean normalized pull-back norm of one field for one spec."""
    clouds = list(dataset)
    jacs = jacobians(clouds, spec, workers)
    summ = spectrum_summary(jacs, rank_rtol)
    mean, se = average_pullback_norm(dataset, field_vectors, spec, normalized=True, jacs=jacs)
    return {"mean_rank": summ.mean_rank, "mean_norm": mean, "stderr_norm": se,
            "non_generic": [c.id for c, J in zip(clouds, jacs) if not J.generic]}


def bures_matrix(dataset, specs: Sequence[EncodingSpec], normalize: bool = True,
                 ridge: Optional[float] = None, workers: int = 1) -> np.ndarray:
    """Dataset-averaged Bures-Wasserstein distances between the encodings' Gram matrices.

    With ``normalize`` each Jacobian is divided by its top singular value first.
    """
    clouds = list(dataset)
    per_spec = [jacobians(clouds, s, workers) for s in specs]
    E = len(specs)
    acc = np.zeros((E, E))
    for c in range(len(clouds)):
        grams = []
        for e in range(E):
            M = per_spec[e][c].matrix
            if normalize:
                top = np.linalg.norm(M, 2) if M.any() else 0.0
                M = M / top if top > 0 else M
            grams.append(gram_matrix(M))
        for a in range(E):
            for b in range(a + 1, E):
                d = bures_wasserstein(grams[a], grams[b], ridge)
                acc[a, b] += d
                acc[b, a] += d
    return acc / max(len(clouds), 1)


def ellipse_tangents(width: float, height: float, n_points: int, seed, delta: float = 1e-5) -> np.ndarray:
    """Flat tangent vectors d/dw and d/dh of the ellipse cloud, as columns (central differences
    in the chart at the base cloud, with the sampling angles held fixed)."""
    from .datagen import gen_ellipse
    from .geometry import chart_coordinates
    X = gen_ellipse(width, height, n_points, seed)
    cols = []
    for dw, dh in ((delta, 0.0), (0.0, delta)):
        up = gen_ellipse(width + dw, height + dh, n_points, seed)
        dn = gen_ellipse(width - dw, height - dh, n_points, seed)
        cols.append((chart_coordinates(X, up, warn=False) - chart_coordinates(X, dn, warn=False)) / (2 * delta))
    return np.column_stack(cols)


def min_increase_direction(width: float, height: float, rtol: float = 1e-9) -> np.ndarray:
    """Unit (w, h) direction in which min(w, h) grows fastest; the diagonal when w = h."""
    if abs(width - height) <= rtol * max(width, height):
        return np.array([1.0, 1.0]) / np.sqrt(2)
    return np.array([1.0, 0.0]) if width < height else np.array([0.0, 1.0])


@dataclass
class ChartAlignment:
    wh: tuple
    top_direction: np.ndarray  # top right singular vector of the chart Jacobian
    cosine: float  # |cos| with the min(w, h)-increase direction
    singular_values: np.ndarray


def ellipse_chart_alignment(width: float, height: float, spec: EncodingSpec, n_points: int = 100,
                            seed=None, delta: float = 1e-5) -> ChartAlignment:
    """Pull-back metric of the encoding restricted to the (w, h) chart of ellipse clouds."""
    from .datagen import gen_ellipse
    from .pullback import encoding_jacobian
    X = gen_ellipse(width, height, n_points, seed)
    J2 = encoding_jacobian(X, spec).matrix @ ellipse_tangents(width, height, n_points, seed, delta)
    _, s, Vt = np.linalg.svd(J2, full_matrices=False)
    top = Vt[0] if s[0] > 0 else np.zeros(2)
    cos = float(abs(top @ min_increase_direction(width, height)))
    return ChartAlignment((width, height), top, cos, s)
