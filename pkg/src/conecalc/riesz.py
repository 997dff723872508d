"""Radial potential kernels, their exact 2-jets, discrete-measure
potentials, and smooth polar functions for finite singular sets.

The kernel with exponent p on R^n is pinned to

    k_p(x) = |x|^(2-p)        for 1 <= p < 2,
    k_2(x) = log|x|,
    k_p(x) = -|x|^(2-p)       for p > 2,

whose gradient is ``c_p |x|^(1-p) e`` and whose Hessian is
``c_p |x|^(-p) (I - p P_e)`` with ``e = x/|x|`` and ``c_p = |p - 2|``
(``c_2 = 1``).  The Hessian eigenvalues are ``(1-p) c_p |x|^(-p)`` once
and ``c_p |x|^(-p)`` with multiplicity n-1, so the bottom partial sum of
order p vanishes identically off the pole.

-inf propagates through sums (``-inf + finite = -inf``), matching the
semantics of upper semicontinuous potentials.  Atom sums use numpy's
pairwise reduction, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, DomainError, PoleError, UnsupportedPolarError
from .symmat import Jet2, SymMatrix

NEAR_POLE = 1e-12


@dataclass(frozen=True)
class RieszKernelSpec:
    """Kernel exponent p on R^n with the derived Hessian constant c_p."""

    p: float
    n: int

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise DomainError(f"ambient dimension must be >= 1, got {self.n}")
        if not (1.0 <= self.p <= self.n):
            raise DomainError(f"p={self.p} out of range [1, {self.n}]")

    @property
    def c_p(self) -> float:
        return 1.0 if self.p == 2.0 else abs(self.p - 2.0)

    def pole_value(self) -> float:
        """Limiting kernel value at the pole: 0 below p=2, -inf at and above."""
        return 0.0 if self.p < 2.0 else float("-inf")


def kernel_value(spec: RieszKernelSpec, r) -> np.ndarray:
    """Kernel value at radius r (vectorized; r=0 maps to the pole value)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        if spec.p < 2.0:
            out = np.where(r > 0.0, r ** (2.0 - spec.p), 0.0)
        elif spec.p == 2.0:
            out = np.where(r > 0.0, np.log(np.where(r > 0.0, r, 1.0)), -np.inf)
        else:
            out = np.where(r > 0.0, -(r ** (2.0 - spec.p)), -np.inf)
    return out


def kernel_jet(spec: RieszKernelSpec, x) -> Jet2:
    """Exact 2-jet of the kernel at x != 0.

    Raises PoleError at (or within 1e-12 of) the origin; the error carries
    the limiting value (-inf for p >= 2, 0 for p < 2).
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != spec.n:
        raise DimensionMismatchError(f"point dim {x.shape[0]} != kernel dim {spec.n}")
    r = float(np.linalg.norm(x))
    if r <= NEAR_POLE:
        raise PoleError(
            f"kernel jet requested at the pole (|x| = {r:.3g})",
            limit_value=spec.pole_value(),
        )
    e = x / r
    c = spec.c_p
    value = float(kernel_value(spec, r))
    grad = c * r ** (1.0 - spec.p) * e
    hess = c * r ** (-spec.p) * (np.eye(spec.n) - spec.p * np.outer(e, e))
    return Jet2(value, grad, SymMatrix(hess))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative weighted point atoms."""

    points: np.ndarray  # (m, n)
    weights: np.ndarray  # (m,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] == 0:
            raise DomainError("measure needs at least one atom")
        if w.shape[0] != pts.shape[0]:
            raise DomainError("one weight per atom required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and >= 0")
        if not np.all(np.isfinite(pts)):
            raise DomainError("atom coordinates must be finite")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def nearest_atom(self, x) -> tuple[int, float]:
        d = np.linalg.norm(self.points - np.asarray(x, dtype=float), axis=1)
        i = int(np.argmin(d))
        return i, float(d[i])


def uniform_measure(points) -> DiscreteMeasure:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return DiscreteMeasure(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))


def potential_value(spec: RieszKernelSpec, mu: DiscreteMeasure, x) -> float:
    """Potential value at x; -inf when x sits on an atom and p >= 2."""
    x = np.asarray(x, dtype=float).ravel()
    if mu.n != spec.n:
        raise DimensionMismatchError(f"measure dim {mu.n} != kernel dim {spec.n}")
    r = np.linalg.norm(mu.points - x, axis=1)
    vals = kernel_value(spec, np.where(r <= NEAR_POLE, 0.0, r))
    neg = np.isneginf(vals) & (mu.weights > 0)
    if np.any(neg):
        return float("-inf")
    return float(np.add.reduce(mu.weights * np.where(np.isneginf(vals), 0.0, vals)))


def potential_values(spec: RieszKernelSpec, mu: DiscreteMeasure, xs) -> np.ndarray:
    """Vectorized potential values at a batch of points, shape (N,)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    r = np.linalg.norm(xs[:, None, :] - mu.points[None, :, :], axis=-1)
    vals = kernel_value(spec, np.where(r <= NEAR_POLE, 0.0, r))
    neg = np.isneginf(vals)
    out = np.add.reduce(mu.weights * np.where(neg, 0.0, vals), axis=1)
    out[np.any(neg & (mu.weights > 0)[None, :], axis=1)] = -np.inf
    return out


def potential_jet(spec: RieszKernelSpec, mu: DiscreteMeasure, x):
    """Termwise 2-jet of the potential at x.

    Returns the float ``-inf`` marker when x coincides with an atom and
    p >= 2.  For p < 2 the value at an atom is finite but the jet is
    undefined, so a PoleError (carrying that finite value) is raised.
    """
    x = np.asarray(x, dtype=float).ravel()
    if mu.n != spec.n:
        raise DimensionMismatchError(f"measure dim {mu.n} != kernel dim {spec.n}")
    _, dist = mu.nearest_atom(x)
    if dist <= NEAR_POLE:
        if spec.p >= 2.0:
            return float("-inf")
        raise PoleError(
            "potential jet undefined on an atom for p < 2 "
            f"(value is finite: {potential_value(spec, mu, x):.6g})",
            limit_value=potential_value(spec, mu, x),
        )
    diffs = x[None, :] - mu.points
    r = np.linalg.norm(diffs, axis=1)
    e = diffs / r[:, None]
    c = spec.c_p
    w = mu.weights
    value = float(np.add.reduce(w * kernel_value(spec, r)))
    grad = np.add.reduce(w[:, None] * c * r[:, None] ** (1.0 - spec.p) * e, axis=0)
    outer = np.einsum("mi,mj->mij", e, e)
    hs = c * r[:, None, None] ** (-spec.p) * (
        np.eye(spec.n)[None, :, :] - spec.p * outer
    )
    hess = np.add.reduce(w[:, None, None] * hs, axis=0)
    return Jet2(value, grad, SymMatrix(hess))


def truncated_potential_value(
    spec: RieszKernelSpec, mu: DiscreteMeasure, x, alpha: float
) -> float:
    """Potential of the kernel truncated below at -alpha (continuous).

    These values decrease to the potential value as alpha grows; the
    limit device behind upper semicontinuity of potentials.
    """
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    x = np.asarray(x, dtype=float).ravel()
    r = np.linalg.norm(mu.points - x, axis=1)
    vals = np.maximum(kernel_value(spec, r), -alpha)
    return float(np.add.reduce(mu.weights * vals))


@dataclass(frozen=True)
class PolarFunction:
    """Smooth off its atoms, -inf exactly on them; built from a potential."""

    spec: RieszKernelSpec
    measure: DiscreteMeasure

    def value(self, x) -> float:
        return potential_value(self.spec, self.measure, x)

    def values(self, xs) -> np.ndarray:
        return potential_values(self.spec, self.measure, xs)

    def jet(self, x):
        return potential_jet(self.spec, self.measure, x)

    @property
    def atoms(self) -> np.ndarray:
        return self.measure.points


def build_polar(points, p: float) -> PolarFunction:
    """Uniform-weight polar function of a finite point set, p >= 2 only.

    Below p = 2 the kernels are finite, so no function can be -inf exactly
    on the points; such requests raise UnsupportedPolarError.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise DomainError("polar construction needs a non-empty point list")
    if p < 2.0:
        raise UnsupportedPolarError(
            f"polar functions need p >= 2 (kernels with p = {p} are finite, "
            "so no finite point set is polar for them)"
        )
    spec = RieszKernelSpec(p=float(p), n=pts.shape[1])
    return PolarFunction(spec, uniform_measure(pts))


# -- box-counting diagnostic --------------------------------------------------


def box_counts(points, scales) -> np.ndarray:
    """Occupied-box counts of a point cloud at each scale (anchored grid)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = pts.min(axis=0)
    counts = []
    for s in scales:
        if not s > 0:
            raise DomainError(f"scales must be > 0, got {s}")
        idx = np.floor((pts - lo) / s).astype(np.int64)
        counts.append(np.unique(idx, axis=0).shape[0])
    return np.array(counts, dtype=float)


def box_dimension(points, scales) -> float:
    """Least-squares slope of log(box count) against log(1/scale).

    Advisory only: a sampled diagnostic, not a measure computation.  A
    degenerate cloud (all points identical) returns 0.
    """
    scales = np.asarray(list(scales), dtype=float)
    if scales.size < 2:
        raise DomainError("box dimension needs at least two scales")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.allclose(pts, pts[0], atol=0.0, rtol=0.0):
        return 0.0
    counts = box_counts(pts, scales)
    slope = np.polyfit(np.log(1.0 / scales), np.log(counts), 1)[0]
    return float(slope)


# -- file formats -------------------------------------------------------------


def read_measure_csv(path) -> DiscreteMeasure:
    """Read atoms from CSV rows ``x1,...,xn,weight``."""
    rows = np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
    if rows.shape[1] < 2:
        raise DomainError("measure rows need coordinates plus a weight column")
    return DiscreteMeasure(rows[:, :-1], rows[:, -1])


def write_measure_csv(path, mu: DiscreteMeasure) -> None:
    data = np.column_stack([mu.points, mu.weights])
    with open(path, "w", encoding="utf-8") as fh:
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
