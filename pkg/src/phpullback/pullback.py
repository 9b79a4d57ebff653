"""Encoding Jacobians and the pull-back geometry they induce on point-cloud space."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .filtration import FiltrationKind, Rips, build_complex, gradient_terms
from .geometry import PointCloud
from .persistence import Diagram, cap_infinite, default_cap, reduce
from .pimage import PIParams, PersistenceImage, compute_pi, pi_derivatives, pi_from_points


@dataclass(frozen=True)
class EncodingSpec:
    """Point cloud -> filtration -> degree-k diagram -> persistence image."""

    filtration: FiltrationKind = Rips(1.0)
    k: int = 1
    pi: PIParams = PIParams()
    max_dim: Optional[int] = None
    cap: Optional[float] = None  # essential-class death; None -> filtration default

    def __post_init__(self):
        if self.max_dim is None:
            object.__setattr__(self, "max_dim", self.k + 1)
        if self.max_dim < self.k + 1:
            raise ValueError("max_dim must be at least k + 1")


@dataclass
class EncodingJacobian:
    matrix: np.ndarray  # (P^2, N*D); columns follow the base cloud's index order
    base: PointCloud
    spec: EncodingSpec
    generic: bool = True
    image: Optional[PersistenceImage] = None
    diagram: Optional[Diagram] = None
    diagnostics: dict = field(default_factory=dict, repr=False)


@dataclass
class Spectrum:
    singular_values: np.ndarray
    right_vectors: np.ndarray  # rows are q_i
    left_vectors: np.ndarray  # columns are the image-space singular vectors
    rank: int

    @property
    def normalized(self) -> np.ndarray:
        if self.rank == 0:
            return np.zeros(0)
        return self.singular_values / self.singular_values[0]

    def decay_index(self, threshold: float = 1e-5) -> int:
        """1-based index of the first normalized singular value below ``threshold``."""
        if self.rank == 0:
            return 0
        below = np.flatnonzero(self.normalized < threshold)
        return int(below[0]) + 1 if len(below) else len(self.singular_values) + 1


def persistence_diagram(X: PointCloud, spec: EncodingSpec):
    cx = build_complex(X, spec.filtration, spec.max_dim)
    dgm = reduce(cx, spec.k)
    cap = spec.cap if spec.cap is not None else default_cap(cx)
    return cx, cap_infinite(dgm, cap)


def _image(dgm: Diagram, spec: EncodingSpec, dtype=float) -> np.ndarray:
    if dtype is float:
        return compute_pi(dgm, spec.pi).pixels
    bd = dgm.as_array().astype(dtype)
    return pi_from_points(np.column_stack([bd[:, 0], bd[:, 1] - bd[:, 0]]), spec.pi, dtype)


def _template(dgm: Diagram) -> list:
    return sorted((tuple(p.birth_simplex), None if p.essential else tuple(p.death_simplex))
                  for p in dgm.pairs)


def encode(X: PointCloud, spec: EncodingSpec, dtype=float) -> np.ndarray:
    """The persistence image f(X) as a (P, P) array."""
    return _image(persistence_diagram(X, spec)[1], spec, dtype)


def encoding_jacobian(X: PointCloud, spec: EncodingSpec) -> EncodingJacobian:
    """Analytic Jacobian of ``encode`` at X by the chain rule through the barcode
    template: each diagram point moves with the filtration values of its birth
    and death simplices, and l = d - b."""
    cx, dgm = persistence_diagram(X, spec)
    P, D = spec.pi.resolution, X.dim
    J = np.zeros((P * P, X.n * D))
    dj = pi_derivatives(dgm, spec.pi)
    for p, pair in enumerate(dgm.pairs):
        d_b = dj.d_birth[p].ravel()
        d_l = dj.d_lifespan[p].ravel()
        if not (d_b.any() or d_l.any()):
            continue
        for i, g in gradient_terms(X, cx, pair.birth_pos).items():
            J[:, i * D:(i + 1) * D] += np.outer(d_b - d_l, g)
        if not pair.essential:
            for i, g in gradient_terms(X, cx, pair.death_pos).items():
                J[:, i * D:(i + 1) * D] += np.outer(d_l, g)
    return EncodingJacobian(J, X, spec, generic=cx.generic, image=compute_pi(dgm, spec.pi),
                            diagram=dgm, diagnostics=cx.diagnostics)


def _as_matrix(J) -> np.ndarray:
    return J.matrix if isinstance(J, EncodingJacobian) else np.asarray(J, float)


def _sign_normalize(V: np.ndarray, U: np.ndarray):
    for r in range(V.shape[0]):
        row = V[r]
        nz = np.flatnonzero(np.abs(row) > 1e-12 * max(np.abs(row).max(), 1e-300))
        if len(nz) and row[nz[0]] < 0:
            V[r] = -row
            U[:, r] = -U[:, r]
    return V, U


def svd_spectrum(J, rank_rtol: float = 1e-10) -> Spectrum:
    """Full SVD J = U diag(s) V^T with sign-normalized right singular vectors."""
    M = _as_matrix(J)
    if not np.all(np.isfinite(M)):
        raise ValueError("Jacobian has non-finite entries")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    Vt, U = _sign_normalize(Vt.copy(), U.copy())
    rank = 0 if s.size == 0 or s[0] == 0 else int(np.sum(s > rank_rtol * s[0]))
    return Spectrum(s, Vt, U, rank)


def gram_matrix(J) -> np.ndarray:
    M = _as_matrix(J)
    G = M.T @ M
    return 0.5 * (G + G.T)


def pullback_norm(J, v, normalized: bool = False, spectrum: Optional[Spectrum] = None) -> float:
    """||J v||, divided by the top singular value when ``normalized``."""
    M = _as_matrix(J)
    v = np.asarray(v, float).ravel()
    if v.shape[0] != M.shape[1]:
        raise ValueError(f"tangent vector has length {v.shape[0]}, expected {M.shape[1]}")
    val = float(np.linalg.norm(M @ v))
    if normalized:
        lam1 = (spectrum.singular_values[0] if spectrum is not None and spectrum.singular_values.size
                else (np.linalg.norm(M, 2) if M.size else 0.0))
        if lam1 == 0:
            raise ZeroDivisionError("normalized pull-back norm undefined: Jacobian is zero")
        val /= lam1
    return val


def jacobians(clouds: Sequence[PointCloud], spec: EncodingSpec, workers: int = 1) -> list:
    from .parallel import ordered_map
    return ordered_map(encoding_jacobian, clouds, workers, spec=spec)


def average_pullback_norm(dataset, fields, spec: EncodingSpec, normalized: bool = True,
                          jacs: Optional[Sequence] = None) -> tuple[float, float]:
    """Mean and standard error over the dataset of ||J_X V(X)|| (over lambda_1 if normalized)."""
    clouds = list(dataset)
    if not clouds:
        raise ValueError("empty dataset")
    if len(fields) != len(clouds):
        raise ValueError("need one tangent vector per cloud")
    if jacs is None:
        jacs = jacobians(clouds, spec)
    vals = []
    for J, v in zip(jacs, fields):
        M = _as_matrix(J)
        v = np.asarray(v, float).ravel()
        if normalized:
            lam1 = np.linalg.norm(M, 2) if M.any() else 0.0
            vals.append(0.0 if lam1 == 0 else np.linalg.norm(M @ v) / lam1)
        else:
            vals.append(np.linalg.norm(M @ v))
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se


def alignment_table(dataset, fields: dict, spec: EncodingSpec, top_k: int = 4,
                    jacs: Optional[Sequence] = None, spectra: Optional[Sequence] = None):
    """Average |<V(X)/||V(X)||, q_i(X)>| per field and eigenvector index i = 1..top_k.

    Returns (names, table) with table of shape (len(fields), top_k).
    """
    clouds = list(dataset)
    if spectra is None:
        if jacs is None:
            jacs = jacobians(clouds, spec)
        spectra = [svd_spectrum(J) for J in jacs]
    names = list(fields)
    table = np.zeros((len(names), top_k))
    for r, name in enumerate(names):
        acc, count = np.zeros(top_k), 0
        for X, S, v in zip(clouds, spectra, fields[name]):
            v = np.asarray(v, float).ravel()
            nv = np.linalg.norm(v)
            if nv == 0:
                warnings.warn(f"field {name!r} vanishes on cloud {X.id!r}; skipped")
                continue
            q = S.right_vectors[:top_k]
            a = np.zeros(top_k)
            a[:len(q)] = np.abs(q @ (v / nv))
            acc += a
            count += 1
        table[r] = acc / count if count else np.nan
    return names, table


def _check_psd(A: np.ndarray, name: str, tol: float = 1e-10) -> np.ndarray:
    A = np.asarray(A, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0)
    if np.abs(A - A.T).max(initial=0) > 1e-12 * scale:
        raise ValueError(f"{name} is not symmetric")
    A = 0.5 * (A + A.T)
    w = np.linalg.eigvalsh(A)
    if w.size and w.min() < -tol * scale:
        raise ValueError(f"{name} has a negative eigenvalue {w.min():.3g}")
    return A


def _psd_sqrt(A: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def bures_wasserstein(A, B, ridge: Optional[float] = None) -> float:
    """[tr A + tr B - 2 tr (A^1/2 B A^1/2)^1/2]^1/2 after adding ridge * I to both."""
    A = _check_psd(A, "A")
    B = _check_psd(B, "B")
    if A.shape != B.shape:
        raise ValueError("matrices must have the same shape")
    if ridge is None:
        ridge = 1e-10 * max(np.trace(A), np.trace(B), 1.0)
    I = np.eye(A.shape[0])
    A = A + ridge * I
    B = B + ridge * I
    # tr (A^1/2 B A^1/2)^1/2 is the nuclear norm of A^1/2 B^1/2
    cross = np.linalg.svd(_psd_sqrt(A) @ _psd_sqrt(B), compute_uv=False).sum()
    d2 = np.trace(A) + np.trace(B) - 2 * cross
    return float(np.sqrt(max(d2, 0.0)))


def saliency(X: PointCloud, spec: EncodingSpec, jac: Optional[EncodingJacobian] = None) -> np.ndarray:
    """Per-point Frobenius norm of the Jacobian column block belonging to that point."""
    M = (jac if jac is not None else encoding_jacobian(X, spec)).matrix
    blocks = M.reshape(M.shape[0], X.n, X.dim)
    return np.sqrt((blocks ** 2).sum(axis=(0, 2)))


def unit_ball_axes(J, rank_rtol: float = 1e-10) -> list:
    """Semi-axes (q_i, 1 / lambda_i) of {v : ||J v|| = 1} for nonzero lambda_i."""
    S = svd_spectrum(J, rank_rtol)
    if S.rank < 1:
        raise ValueError("Jacobian has rank 0; the pull-back unit ball is unbounded")
    return [(S.right_vectors[i].copy(), 1.0 / S.singular_values[i]) for i in range(S.rank)]


def barcode_template(X: PointCloud, spec: EncodingSpec) -> list:
    """Sorted (birth simplex, death simplex or None) for the diagram's nonzero pairs."""
    return _template(persistence_diagram(X, spec)[1])


@dataclass
class FDReport:
    max_rel_error: float
    n_checked: int  # entries with |FD| above the floor
    worst: tuple  # (pixel row, column) of the worst entry, or ()
    template_changes: list  # columns whose +-h evaluations change the barcode template
    analytic: np.ndarray = field(repr=False, default=None)
    fd: np.ndarray = field(repr=False, default=None)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def validate_jacobian(X: PointCloud, spec: EncodingSpec, h: float = 1e-6, floor: float = 1e-8,
                      check_templates: bool = True) -> FDReport:
    """Central differences of the end-to-end encoding against the analytic Jacobian.

    The essential-class cap is frozen at its value at X, matching the Jacobian's
    convention; images are accumulated in extended precision so that round-off
    stays well below the tested tolerance.
    """
    if spec.cap is None:
        cx, _ = persistence_diagram(X, spec)
        spec = EncodingSpec(spec.filtration, spec.k, spec.pi, spec.max_dim, default_cap(cx))
    J = encoding_jacobian(X, spec).matrix
    base_t = barcode_template(X, spec) if check_templates else None
    x0 = X.flatten()
    FD = np.zeros_like(J)
    changed = []
    for c in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[c] += h
        xm[c] -= h
        _, dp = persistence_diagram(X.with_points(xp.reshape(X.n, X.dim)), spec)
        _, dm = persistence_diagram(X.with_points(xm.reshape(X.n, X.dim)), spec)
        diff = _image(dp, spec, np.longdouble) - _image(dm, spec, np.longdouble)
        FD[:, c] = (diff / (2 * h)).astype(float).ravel()
        if check_templates and (_template(dp) != base_t or _template(dm) != base_t):
            changed.append(c)
    mask = np.abs(FD) > floor
    if not mask.any():
        return FDReport(0.0, 0, (), changed, J, FD)
    rel = np.zeros_like(FD)
    rel[mask] = np.abs(J - FD)[mask] / np.abs(FD)[mask]
    worst = np.unravel_index(int(rel.argmax()), rel.shape)
    return FDReport(float(rel.max()), int(mask.sum()), tuple(int(w) for w in worst), changed, J, FD)
