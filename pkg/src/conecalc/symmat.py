"""Spectral core: symmetric matrices, ordered eigenvalues, and the
eigenvalue functionals consumed by every cone predicate.

Conventions fixed here and relied on everywhere else:

* eigenvalues are reported in ascending order;
* eigenvector signs are normalized so the largest-magnitude component of
  each column is positive (deterministic output for identical input);
* the complex structure ``J`` pairs coordinates as (x1, y1, ..., xm, ym);
* tolerances scale by ``1 + max|A_ij|`` so pass/fail is invariant under
  matrix scaling.

All values are immutable after construction and all operations are pure
functions, so everything here is safe to call concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    DimensionMismatchError,
    DomainError,
    EigenSolveError,
    InternalConsistencyError,
    ResourceLimitError,
)

PFOLD_CAP = 10**6


def _as_array(values, dtype=float):
    arr = np.asarray(values, dtype=dtype)
    return arr


def scale_of(entries) -> float:
    """Tolerance scale ``1 + max|A_ij|`` of a matrix or stack of matrices."""
    entries = np.asarray(entries, dtype=float)
    if entries.size == 0:
        return 1.0
    return 1.0 + float(np.max(np.abs(entries)))


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Dense real symmetric matrix.

    Construction symmetrizes the input as ``(M + M^T) / 2`` and rejects
    non-finite or non-square data.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_array(self.entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DomainError(f"matrix must be square, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise DomainError("matrix dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise DomainError("matrix entries must be finite")
        sym = 0.5 * (arr + arr.T)
        sym.flags.writeable = False
        object.__setattr__(self, "entries", sym)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def scale(self) -> float:
        return scale_of(self.entries)

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self.entries + as_matrix(other).entries)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self.entries - as_matrix(other).entries)

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(-self.entries)

    def __mul__(self, t: float) -> "SymMatrix":
        return SymMatrix(self.entries * float(t))

    __rmul__ = __mul__

    def __repr__(self):
        return f"SymMatrix(n={self.n})"


def as_matrix(A) -> SymMatrix:
    """Coerce an array-like or SymMatrix to a SymMatrix."""
    if isinstance(A, SymMatrix):
        return A
    return SymMatrix(A)


def identity(n: int) -> SymMatrix:
    return SymMatrix(np.eye(n))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        vals = _as_array(self.eigenvalues)
        vecs = _as_array(self.eigenvectors)
        vals.flags.writeable = False
        vecs.flags.writeable = False
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T

    def to_json(self) -> str:
        return json.dumps(
            {
                "eigenvalues": self.eigenvalues.tolist(),
                "eigenvectors": self.eigenvectors.tolist(),
            },
            sort_keys=True,
        )


@dataclass(frozen=True, eq=False)
class Frame:
    """Orthonormal vectors spanning a k-plane, stored as rows of shape (k, n)."""

    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.atleast_2d(_as_array(self.vectors))
        if vecs.ndim != 2:
            raise DomainError("frame vectors must form a 2-D array")
        k, n = vecs.shape
        if not 1 <= k <= n:
            raise DomainError(f"frame must have 1..n vectors, got {k} in dim {n}")
        gram = vecs @ vecs.T
        if np.max(np.abs(gram - np.eye(k))) > 1e-12:
            raise DomainError("frame vectors are not orthonormal to 1e-12")
        vecs.flags.writeable = False
        object.__setattr__(self, "vectors", vecs)

    @property
    def plane_dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.vectors.shape[1]

    def projector_matrix(self) -> np.ndarray:
        return self.vectors.T @ self.vectors


def orthonormal_frame(vectors) -> Frame:
    """Build a Frame from possibly non-orthonormal spanning vectors via QR."""
    vecs = np.atleast_2d(_as_array(vectors))
    q, r = np.linalg.qr(vecs.T)
    if np.min(np.abs(np.diag(r))) < 1e-12 * max(1.0, np.max(np.abs(vecs))):
        raise DomainError("frame vectors are linearly dependent")
    # fix signs so the result is deterministic
    signs = np.sign(np.diag(r))
    return Frame((q * signs).T)


def random_frame(n: int, k: int, rng: np.random.Generator) -> Frame:
    """Haar-ish random k-frame in R^n (QR of a Gaussian matrix)."""
    if not 1 <= k <= n:
        raise DomainError(f"frame dimension {k} out of range for n={n}")
    return orthonormal_frame(rng.standard_normal((k, n)))


@dataclass(frozen=True, eq=False)
class Jet2:
    """2-jet (value, gradient, Hessian) of a C^2 function at a point."""

    value: float
    gradient: np.ndarray
    hessian: SymMatrix

    def __post_init__(self):
        grad = _as_array(self.gradient)
        if not np.isfinite(self.value):
            raise DomainError("jet value must be finite (poles carry no jets)")
        if not np.all(np.isfinite(grad)):
            raise DomainError("jet gradient must be finite")
        grad.flags.writeable = False
        object.__setattr__(self, "gradient", grad)
        object.__setattr__(self, "hessian", as_matrix(self.hessian))

    @property
    def n(self) -> int:
        return self.gradient.shape[0]

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "gradient": self.gradient.tolist(),
            "hessian": self.hessian.entries.tolist(),
        }


# ---------------------------------------------------------------------------
# eigendecomposition


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # flip each column so its largest-magnitude component is positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def eigh(A) -> Spectrum:
    """Eigendecomposition with ascending eigenvalues and fixed vector signs.

    Backed by LAPACK through numpy; deterministic for identical input.
    Raises EigenSolveError (naming the matrix norm) on non-convergence.
    """
    A = as_matrix(A)
    try:
        vals, vecs = np.linalg.eigh(A.entries)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(
            f"eigensolver failed to converge for matrix with max-norm "
            f"{np.max(np.abs(A.entries)):.6g}: {exc}"
        ) from exc
    return Spectrum(vals, _fix_signs(vecs))


def eigenvalues_of(A) -> np.ndarray:
    """Ascending eigenvalues of a SymMatrix, matrix, or stack of matrices."""
    if isinstance(A, SymMatrix):
        return np.linalg.eigvalsh(A.entries)
    arr = np.asarray(A, dtype=float)
    return np.linalg.eigvalsh(arr)


# ---------------------------------------------------------------------------
# eigenvalue functionals


def _check_p(p: float, n: int):
    if not np.isfinite(p) or p < 1.0 or p > n:
        raise DomainError(f"p={p} out of range [1, {n}]")


def _split_p(p: float):
    # integer/fraction split, tolerant of float noise around integers
    if abs(p - round(p)) < 1e-9:
        return int(round(p)), 0.0
    return int(math.floor(p)), p - math.floor(p)


def partial_sum_eigs(lam: np.ndarray, p: float) -> np.ndarray:
    """Bottom partial sum of ascending eigenvalues along the last axis.

    Returns lam_1 + ... + lam_floor(p) + (p - floor(p)) * lam_{floor(p)+1};
    the fractional term is absent when p is an integer.  Vectorized over
    leading axes.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    _check_p(p, n)
    k, frac = _split_p(p)
    out = lam[..., :k].sum(axis=-1)
    if frac > 0.0:
        out = out + frac * lam[..., k]
    return out


def top_partial_sum_eigs(lam: np.ndarray, p: float) -> np.ndarray:
    """Top partial sum: the same functional applied to the largest eigenvalues.

    Equal to ``-partial_sum_eigs(-lam reversed, p)``; for integer p this is
    lam_{n-p+1} + ... + lam_n.
    """
    lam = np.asarray(lam, dtype=float)
    return -partial_sum_eigs(-lam[..., ::-1], p)


def partial_sum(A, p: float) -> float:
    """Sum of the p smallest eigenvalues, with fractional interpolation."""
    lam = eigenvalues_of(as_matrix(A))
    return float(partial_sum_eigs(lam, p))


def projector(e) -> SymMatrix:
    """Orthogonal projection ``e e^T`` onto the line through a unit vector.

    Inputs whose norm deviates from 1 by more than 1e-12 are normalized
    first; the zero vector is rejected.
    """
    e = _as_array(e).ravel()
    norm = float(np.linalg.norm(e))
    if norm < 1e-300:
        raise DomainError("cannot project onto the zero vector")
    if abs(norm - 1.0) > 1e-12:
        e = e / norm
    return SymMatrix(np.outer(e, e))


def complex_structure(n: int) -> np.ndarray:
    """The fixed complex structure J on R^n with coordinates paired
    (x1, y1, ..., xm, ym): J e_{2i} = e_{2i+1}, J e_{2i+1} = -e_{2i}."""
    if n % 2 != 0:
        raise DomainError(f"complex structure needs even dimension, got n={n}")
    J = np.zeros((n, n))
    for i in range(0, n, 2):
        J[i + 1, i] = 1.0
        J[i, i + 1] = -1.0
    return J


def hermitian_part(A) -> SymMatrix:
    """J-invariant (hermitian symmetric) component ``(A - J A J) / 2``."""
    A = as_matrix(A)
    J = complex_structure(A.n)
    return SymMatrix(0.5 * (A.entries - J @ A.entries @ J))


def hermitian_eigenvalues(A) -> np.ndarray:
    """Ascending hermitian eigenvalues of A, one representative per pair.

    The real eigenvalues of the hermitian part occur in equal pairs; the
    k-th returned value is the 2k-th ascending real eigenvalue.  A pair
    mismatch beyond ``1e-8 * (1 + max|A_C|)`` raises
    InternalConsistencyError.
    """
    A = as_matrix(A)
    AC = hermitian_part(A)
    vals = eigenvalues_of(AC)
    tol = 1e-8 * AC.scale
    gaps = np.abs(vals[0::2] - vals[1::2])
    if np.max(gaps) > tol:
        raise InternalConsistencyError(
            f"hermitian eigenvalues failed to pair within {tol:.3g} "
            f"(worst gap {np.max(gaps):.3g})"
        )
    return vals[1::2].copy()


def elementary_symmetric_all(lam: np.ndarray) -> np.ndarray:
    """All elementary symmetric polynomials e_0..e_n of the entries of lam."""
    lam = np.asarray(lam, dtype=float).ravel()
    e = np.zeros(lam.size + 1)
    e[0] = 1.0
    for x in lam:
        e[1:] = e[1:] + x * e[:-1]
    return e


def sigma_elementary(A, k: int) -> float:
    """k-th elementary symmetric polynomial of the eigenvalues."""
    A = as_matrix(A)
    if not 1 <= k <= A.n:
        raise DomainError(f"k={k} out of range [1, {A.n}]")
    lam = eigenvalues_of(A)
    return float(elementary_symmetric_all(lam)[k])


def trace_over_frame(A, W: Frame) -> float:
    """Trace of the quadratic form A restricted to the plane spanned by W."""
    A = as_matrix(A)
    if W.ambient_dim != A.n:
        raise DimensionMismatchError(
            f"frame lives in dim {W.ambient_dim}, matrix in dim {A.n}"
        )
    V = W.vectors
    return float(np.einsum("ki,ij,kj->", V, A.entries, V))


def pfold_index_sets(n: int, p: int) -> np.ndarray:
    """Index subsets of size p as an array of shape (C(n,p), p)."""
    count = math.comb(n, p)
    if count > PFOLD_CAP:
        raise ResourceLimitError(
            f"C({n},{p}) = {count} exceeds the configured cap {PFOLD_CAP}"
        )
    return np.array(list(combinations(range(n), p)), dtype=np.intp)


def pfold_sums_eigs(lam: np.ndarray, p: int) -> np.ndarray:
    """Ascending p-fold eigenvalue sums along the last axis, vectorized."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not (isinstance(p, (int, np.integer)) and 1 <= p <= n):
        raise DomainError(f"p={p} must be an integer in [1, {n}]")
    idx = pfold_index_sets(n, int(p))
    sums = lam[..., idx].sum(axis=-1)
    return np.sort(sums, axis=-1)


def pfold_sums(A, p: int) -> np.ndarray:
    """All sums of p distinct eigenvalues, sorted ascending.

    The first entry equals partial_sum(A, p); the last equals the top
    partial sum.  Raises ResourceLimitError when C(n,p) exceeds the cap.
    """
    A = as_matrix(A)
    return pfold_sums_eigs(eigenvalues_of(A), p)


# ---------------------------------------------------------------------------
# file formats


def _parse_float_row(line: str, path, lineno: int) -> list[float]:
    try:
        return [float(tok) for tok in line.split(",")]
    except ValueError as exc:
        raise DomainError(f"{path}:{lineno}: {exc}") from exc


def read_matrix_csv(path) -> SymMatrix:
    """Read a matrix stored as n lines of n comma-separated floats."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rows.append(_parse_float_row(line, path, lineno))
    if not rows:
        raise DomainError(f"empty matrix file: {path}")
    return SymMatrix(np.array(rows))


def write_matrix_csv(path, A) -> None:
    A = as_matrix(A)
    with open(path, "w", encoding="utf-8") as fh:
        for row in A.entries:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_vectors_csv(path) -> np.ndarray:
    """Read points or vectors, one per line, comma-separated."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rows.append(_parse_float_row(line, path, lineno))
    if not rows:
        raise DomainError(f"empty vector file: {path}")
    return np.array(rows)


def read_frames_csv(path) -> list[Frame]:
    """Read frames from CSV: vectors as rows, blank lines separate frames."""
    frames = []
    block: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                if block:
                    frames.append(Frame(np.array(block)))
                    block = []
                continue
            block.append(_parse_float_row(line, path, lineno))
    if block:
        frames.append(Frame(np.array(block)))
    if not frames:
        raise DomainError(f"no frames found in {path}")
    return frames
