"""Wide-stencil monotone Dirichlet solver for partial-eigenvalue-sum and
eigenvalue-branch operators on 2-D and 3-D lattices, plus the
removable-singularity experiment built on it.

Operators
---------
``("pp", p)``      bottom partial eigenvalue sum of D^2 u equals zero;
                   p in [1, 2] in 2-D and [1, 3] in 3-D (the ranges with a
                   min-over-frames representation); p = ndim reduces to the
                   exact trace scheme.
``("branch", k)``  k-th smallest eigenvalue of D^2 u equals zero.

The discretization takes second differences along coprime lattice
directions, normalized by (h |v|)^2, and combines them over orthogonal
frames snapped to the stencil:

* pp, 1 <= p <= 2:   min over ordered orthogonal pairs of D_v + (p-1) D_w
* pp, 2 <  p <= 3:   min over ordered orthogonal triples of
                     D_v + D_w + (p-2) D_z   (3-D)
* pp, p = ndim:      first admissible frame, i.e. the classical
                     (2 ndim + 1)-point Laplacian away from punctures
* branch 1 / ndim:   min / max over directions
* branch 2 in 3-D:   min over orthogonal pairs of max(D_v, D_w)

Increasing any neighbor value never decreases a residual, so the scheme
is monotone.  Punctured cells carry no boundary condition: they are
excluded from the unknown set and every stencil direction touching them
is dropped, with a minimum-frame guarantee checked up front.

Solution methods: exact policy (Howard) iteration over the frozen frame
choices, which converges in a handful of sparse linear solves, and the
damped Jacobi fixed-point iteration ``u <- u + tau R(u)`` with
``tau = h^2 / (2 w)`` (w the total frame weight), kept as a reference
method and used for the min-max form.  Both are deterministic and
independent of worker count; outputs are bitwise reproducible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import cones, grids, riesz
from .cones import ConeSpec, SampleConfig
from .errors import (
    DiscretizationError,
    DomainError,
    StencilError,
    UnsupportedPolarError,
)
from .grids import GridFunction

# -- stencils -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StencilSet:
    """Coprime lattice directions (one per line) with their orthogonal
    frame combinations."""

    directions: np.ndarray  # (D, ndim) int
    lengths: np.ndarray  # (D,)
    ortho_pairs: tuple  # index pairs (i, j), v_i dot v_j = 0
    ortho_triples: tuple  # index triples, mutually orthogonal (3-D)

    @property
    def ndim(self) -> int:
        return self.directions.shape[1]

    @property
    def count(self) -> int:
        return self.directions.shape[0]


def _coprime_directions(ndim: int, reach: int) -> np.ndarray:
    dirs = []
    for v in itertools.product(range(-reach, reach + 1), repeat=ndim):
        if not any(v):
            continue
        first = next(c for c in v if c != 0)
        if first < 0:
            continue  # one representative per line
        if reduce(math.gcd, (abs(c) for c in v)) != 1:
            continue
        dirs.append(v)
    dirs.sort(key=lambda v: (max(abs(c) for c in v), sum(c * c for c in v), v))
    return np.array(dirs, dtype=np.intp)


@lru_cache(maxsize=None)
def make_stencil(ndim: int, reach: int = 3) -> StencilSet:
    """All coprime directions with max-norm <= reach plus their frames.

    The default reach 3 yields 16 line directions in 2-D.  Frames are
    ordered so the coordinate-axis frame comes first.
    """
    if ndim not in (2, 3):
        raise DomainError(f"stencils support 2-D and 3-D grids, got ndim={ndim}")
    if reach < 1:
        raise DomainError(f"stencil reach must be >= 1, got {reach}")
    dirs = _coprime_directions(ndim, reach)
    dots = dirs @ dirs.T
    D = dirs.shape[0]
    pairs = [(i, j) for i in range(D) for j in range(i + 1, D) if dots[i, j] == 0]
    pairs.sort(key=lambda ij: (max(np.abs(dirs[list(ij)]).max(axis=1)), ij))
    triples = []
    if ndim == 3:
        for i, j in pairs:
            for k in range(D):
                if k > j and dots[i, k] == 0 and dots[j, k] == 0:
                    triples.append((i, j, k))
        triples.sort(key=lambda t: (max(np.abs(dirs[list(t)]).max(axis=1)), t))
    lengths = np.linalg.norm(dirs.astype(float), axis=1)
    return StencilSet(dirs, lengths, tuple(pairs), tuple(triples))


# -- operators ----------------------------------------------------------------


def _normalize_op(op) -> tuple:
    if isinstance(op, tuple) and len(op) == 2 and op[0] in ("pp", "branch"):
        return (op[0], float(op[1]) if op[0] == "pp" else int(op[1]))
    raise DomainError(f"operator must be ('pp', p) or ('branch', k), got {op!r}")


def _check_op(op: tuple, ndim: int):
    kind, val = op
    if kind == "pp":
        if not 1.0 <= val <= ndim:
            raise DomainError(f"pp exponent {val} out of range [1, {ndim}]")
    else:
        if not 1 <= val <= ndim:
            raise DomainError(f"branch index {val} out of range [1, {ndim}]")


def operator_cone(op, ndim: int) -> ConeSpec:
    """Cone whose subharmonics are the operator's subsolutions."""
    kind, val = _normalize_op(op)
    if kind == "pp":
        return cones.pp_cone(val, ndim)
    return cones.branch_cone(val, ndim)


def _combos(op: tuple, stencil: StencilSet):
    """Frame combinations and the reduction form of an operator.

    Returns (form, combo list) where each combo is (direction indices,
    weights).  Forms: ``min``, ``max``, ``trace`` (first admissible
    combo), ``minmax`` (min over pairs of the pair max).
    """
    kind, val = op
    nd = stencil.ndim
    if kind == "pp":
        if abs(val - nd) < 1e-12:
            if nd == 2:
                combos = [((i, j), (1.0, 1.0)) for i, j in stencil.ortho_pairs]
            else:
                combos = [((i, j, k), (1.0, 1.0, 1.0)) for i, j, k in stencil.ortho_triples]
            return "trace", combos
        if val <= 2.0:
            combos = []
            for i, j in stencil.ortho_pairs:
                combos.append(((i, j), (1.0, val - 1.0)))
                combos.append(((j, i), (1.0, val - 1.0)))
            return "min", combos
        # 2 < p < 3 in 3-D: distinguished third slot
        combos = []
        for t in stencil.ortho_triples:
            for z in range(3):
                rest = tuple(t[m] for m in range(3) if m != z)
                combos.append(((rest[0], rest[1], t[z]), (1.0, 1.0, val - 2.0)))
        if not combos:
            raise DomainError("stencil has no orthogonal triples; increase reach")
        return "min", combos
    # branch
    k = int(val)
    if k == 1:
        return "min", [((i,), (1.0,)) for i in range(stencil.count)]
    if k == nd:
        return "max", [((i,), (1.0,)) for i in range(stencil.count)]
    # k = 2 in 3-D
    return "minmax", [((i, j), (1.0, 1.0)) for i, j in stencil.ortho_pairs]


# -- problems -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """Lattice Dirichlet problem with optional hole region and punctures.

    ``boundary_values`` holds finite data on the whole lattice; it is read
    at every non-unknown cell (the outermost ring, the hole region, and
    wherever wide stencil arms land outside the unknown set).  Punctured
    cells carry no data at all.
    """

    shape: tuple
    origin: np.ndarray
    h: float
    operator: tuple
    boundary_values: np.ndarray
    hole: Optional[np.ndarray] = None
    punctures: tuple = ()

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        origin = np.asarray(self.origin, dtype=float).ravel()
        nd = len(shape)
        if nd not in (2, 3):
            raise DomainError(f"solver supports 2-D and 3-D grids, got {nd}-D")
        if origin.shape[0] != nd:
            raise DomainError("origin dimension does not match the shape")
        if any(s < 5 for s in shape):
            raise DomainError("grids need at least 5 points per axis")
        if not self.h > 0:
            raise DomainError(f"grid spacing must be > 0, got {self.h}")
        op = _normalize_op(self.operator)
        _check_op(op, nd)
        g = np.asarray(self.boundary_values, dtype=float)
        if g.shape != shape:
            raise DomainError("boundary value array must cover the whole grid")
        hole = self.hole
        if hole is not None:
            hole = np.asarray(hole, dtype=bool)
            if hole.shape != shape:
                raise DomainError("hole mask shape must match the grid")
            hole.flags.writeable = False
        punctures = tuple(tuple(int(c) for c in pt) for pt in self.punctures)
        for pt in punctures:
            if len(pt) != nd:
                raise DomainError(f"puncture {pt} has wrong dimension")
            if any(c <= 0 or c >= s - 1 for c, s in zip(pt, shape)):
                raise DomainError(f"puncture {pt} must be strictly interior")
            if hole is not None and hole[pt]:
                raise DomainError(f"puncture {pt} lies in the hole region")
        if not np.all(np.isfinite(np.delete(g.reshape(-1), [np.ravel_multi_index(p, shape) for p in punctures]) if punctures else g)):
            raise DomainError("boundary values must be finite")
        g = np.array(g)
        g.flags.writeable = False
        origin.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "operator", op)
        object.__setattr__(self, "boundary_values", g)
        object.__setattr__(self, "hole", hole)
        object.__setattr__(self, "punctures", punctures)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def unknown_mask(self) -> np.ndarray:
        m = np.ones(self.shape, dtype=bool)
        for axis in range(self.ndim):
            sl = [slice(None)] * self.ndim
            sl[axis] = 0
            m[tuple(sl)] = False
            sl[axis] = -1
            m[tuple(sl)] = False
        if self.hole is not None:
            m &= ~self.hole
        for pt in self.punctures:
            m[pt] = False
        return m

    def puncture_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for pt in self.punctures:
            m[pt] = True
        return m

    def with_punctures(self, punctures) -> "DirichletProblem":
        return DirichletProblem(
            self.shape,
            self.origin,
            self.h,
            self.operator,
            self.boundary_values,
            self.hole,
            tuple(punctures),
        )


# -- scheme assembly -----------------------------------------------------------


class _Scheme:
    """Precomputed stencil admissibility and frame combos for one problem."""

    def __init__(self, problem: DirichletProblem, stencil: StencilSet):
        if stencil.ndim != problem.ndim:
            raise DomainError("stencil dimension does not match the problem")
        self.problem = problem
        self.stencil = stencil
        shape = problem.shape
        nd = problem.ndim
        self.h = problem.h
        unknown = problem.unknown_mask()
        if not unknown.any():
            raise DomainError("problem has no unknown cells")
        punct = problem.puncture_mask()
        self.unknown_idx = np.argwhere(unknown)
        self.unknown_flat = np.ravel_multi_index(self.unknown_idx.T, shape)
        N = self.unknown_flat.shape[0]
        self.rank = -np.ones(int(np.prod(shape)), dtype=np.intp)
        self.rank[self.unknown_flat] = np.arange(N)

        D = stencil.count
        self.plus = np.zeros((D, N), dtype=np.intp)
        self.minus = np.zeros((D, N), dtype=np.intp)
        self.valid = np.zeros((D, N), dtype=bool)
        self.coeff = 1.0 / (self.h * stencil.lengths) ** 2
        dims = np.array(shape)
        punct_flat = punct.reshape(-1)
        for d in range(D):
            v = stencil.directions[d]
            pp = self.unknown_idx + v
            mm = self.unknown_idx - v
            ok = np.all((pp >= 0) & (pp < dims), axis=1) & np.all(
                (mm >= 0) & (mm < dims), axis=1
            )
            pf = np.zeros(N, dtype=np.intp)
            mf = np.zeros(N, dtype=np.intp)
            pf[ok] = np.ravel_multi_index(pp[ok].T, shape)
            mf[ok] = np.ravel_multi_index(mm[ok].T, shape)
            ok[ok] &= ~punct_flat[pf[ok]] & ~punct_flat[mf[ok]]
            self.plus[d], self.minus[d], self.valid[d] = pf, mf, ok

        self.form, combos = _combos(problem.operator, stencil)
        self.combo_dirs = [np.array(c[0], dtype=np.intp) for c in combos]
        self.combo_weights = [np.array(c[1]) for c in combos]
        self.combo_valid = np.stack(
            [np.all(self.valid[ds], axis=0) for ds in self.combo_dirs]
        )
        covered = self.combo_valid.any(axis=0)
        if not covered.all():
            bad = tuple(int(i) for i in self.unknown_idx[np.argmin(covered)])
            raise DiscretizationError(
                f"no admissible stencil frame at {bad}; refine the grid or "
                "shrink the puncture set"
            )
        self.weight_total = max(float(w.sum()) for w in self.combo_weights)
        if self.form == "trace":
            # fixed first-admissible frame per point; the operator is linear
            self.fixed_choice = np.argmax(self.combo_valid, axis=0)

    # second differences along every direction, NaN where inadmissible
    def _second_differences(self, u_flat: np.ndarray) -> np.ndarray:
        uc = u_flat[self.unknown_flat]
        out = np.full((self.stencil.count, uc.shape[0]), np.nan)
        for d in range(self.stencil.count):
            ok = self.valid[d]
            out[d, ok] = (
                u_flat[self.plus[d, ok]] + u_flat[self.minus[d, ok]] - 2.0 * uc[ok]
            ) * self.coeff[d]
        return out

    def combo_values(self, u_flat: np.ndarray) -> np.ndarray:
        dv = self._second_differences(u_flat)
        vals = np.full((len(self.combo_dirs), self.unknown_flat.shape[0]), np.nan)
        for c, (ds, ws) in enumerate(zip(self.combo_dirs, self.combo_weights)):
            if self.form == "minmax":
                vals[c] = np.max(dv[ds], axis=0)
            else:
                vals[c] = np.einsum("i,ij->j", ws, dv[ds])
        vals[~self.combo_valid] = np.nan
        return vals

    def residuals(self, u_flat: np.ndarray) -> np.ndarray:
        vals = self.combo_values(u_flat)
        if self.form == "max":
            return np.fmax.reduce(vals, axis=0)
        if self.form == "trace":
            return vals[self.fixed_choice, np.arange(vals.shape[1])]
        return np.fmin.reduce(vals, axis=0)

    def select(self, u_flat: np.ndarray) -> np.ndarray:
        vals = self.combo_values(u_flat)
        if self.form == "trace":
            return self.fixed_choice
        if self.form == "max":
            return np.nanargmax(vals, axis=0)
        return np.nanargmin(vals, axis=0)

    def assemble(self, selection: np.ndarray):
        """Sparse linear system of the frozen-frame scheme, L u = rhs."""
        N = self.unknown_flat.shape[0]
        g = self.problem.boundary_values.reshape(-1)
        rows, cols, data = [], [], []
        rhs = np.zeros(N)
        diag = np.zeros(N)
        for c, (ds, ws) in enumerate(zip(self.combo_dirs, self.combo_weights)):
            pts = np.nonzero(selection == c)[0]
            if pts.size == 0:
                continue
            for d, w in zip(ds, ws):
                if w == 0.0:
                    continue
                coef = w * self.coeff[d]
                diag[pts] -= 2.0 * coef
                for nbr in (self.plus[d, pts], self.minus[d, pts]):
                    r = self.rank[nbr]
                    inner = r >= 0
                    rows.append(pts[inner])
                    cols.append(r[inner])
                    data.append(np.full(inner.sum(), coef))
                    rhs[pts[~inner]] -= coef * g[nbr[~inner]]
        rows.append(np.arange(N))
        cols.append(np.arange(N))
        data.append(diag)
        L = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, N),
        )
        return L, rhs


def residual(u: GridFunction, index, op, stencil: Optional[StencilSet] = None) -> float:
    """Scheme residual of one operator at one interior point.

    The full stencil must fit inside the grid at the point and the values
    it reads must be finite; otherwise StencilError is raised.
    """
    op = _normalize_op(op)
    _check_op(op, u.ndim)
    if stencil is None:
        stencil = make_stencil(u.ndim)
    idx = np.asarray(index, dtype=np.intp)
    reach = int(np.max(np.abs(stencil.directions)))
    if np.any(idx < reach) or np.any(idx > np.array(u.shape) - 1 - reach):
        raise StencilError(f"stencil is clipped by the grid boundary at {tuple(idx)}")
    uvals = u.values
    dv = np.empty(stencil.count)
    center = uvals[tuple(idx)]
    for d in range(stencil.count):
        v = stencil.directions[d]
        a = uvals[tuple(idx + v)]
        b = uvals[tuple(idx - v)]
        if not (np.isfinite(a) and np.isfinite(b) and np.isfinite(center)):
            raise StencilError(f"stencil at {tuple(idx)} reads a non-finite value")
        dv[d] = (a + b - 2.0 * center) / (u.h * stencil.lengths[d]) ** 2
    form, combos = _combos(op, stencil)
    vals = []
    for ds, ws in combos:
        block = dv[list(ds)]
        vals.append(np.max(block) if form == "minmax" else float(np.dot(ws, block)))
    if form == "max":
        return float(np.max(vals))
    if form == "trace":
        return float(vals[0])
    return float(np.min(vals))


# -- solving -------------------------------------------------------------------


@dataclass(frozen=True)
class SolveReport:
    solution: GridFunction
    residual_sup: float
    iterations: int
    converged: bool
    method: str
    history: tuple  # (iteration, residual_sup) pairs

    def to_dict(self) -> dict:
        return {
            "residual_sup": float(self.residual_sup),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "method": self.method,
        }


def _solution_grid(problem: DirichletProblem, u_flat: np.ndarray) -> GridFunction:
    vals = u_flat.reshape(problem.shape).copy()
    mask = None
    if problem.punctures:
        mask = problem.puncture_mask()
        vals[mask] = -np.inf
    return GridFunction(vals, problem.origin, problem.h, mask)


def solve(
    problem: DirichletProblem,
    stencil: Optional[StencilSet] = None,
    tol: float = 1e-8,
    max_iter: int = 200_000,
    method: str = "auto",
) -> SolveReport:
    """Solve the Dirichlet problem to ``residual_sup <= tol``.

    ``method="policy"`` freezes the optimal frame choice and solves the
    resulting sparse linear system, repeating until the residual settles
    (exact for the linear trace form in one solve).  ``method="jacobi"``
    runs the damped fixed-point iteration; it is unconditionally monotone
    but slow, and remains the only method for the 3-D second-branch
    min-max form.  ``"auto"`` picks policy whenever applicable.
    """
    if stencil is None:
        stencil = make_stencil(problem.ndim)
    scheme = _Scheme(problem, stencil)
    if method == "auto":
        method = "jacobi" if scheme.form == "minmax" else "policy"
    if method not in ("policy", "jacobi"):
        raise DomainError(f"unknown method {method!r}")
    if method == "policy" and scheme.form == "minmax":
        raise DomainError("policy iteration does not apply to the min-max form")

    u = problem.boundary_values.reshape(-1).astype(float).copy()
    if problem.punctures:
        u[np.ravel_multi_index(np.array(problem.punctures).T, problem.shape)] = 0.0
    history = []
    if method == "policy":
        prev_sel = None
        res_sup = float(np.max(np.abs(scheme.residuals(u))))
        history.append((0, res_sup))
        converged = res_sup <= tol
        it = 0
        while not converged and it < 60:
            it += 1
            sel = scheme.select(u)
            if prev_sel is not None and np.array_equal(sel, prev_sel):
                break
            L, rhs = scheme.assemble(sel)
            u_new = u.copy()
            u_new[scheme.unknown_flat] = spla.spsolve(L.tocsc(), rhs)
            u = u_new
            prev_sel = sel
            res_sup = float(np.max(np.abs(scheme.residuals(u))))
            history.append((it, res_sup))
            converged = res_sup <= tol
        return SolveReport(
            _solution_grid(problem, u), res_sup, it, converged, "policy", tuple(history)
        )

    tau = problem.h**2 / (2.0 * scheme.weight_total)
    res_sup = np.inf
    it = 0
    while it < max_iter:
        r = scheme.residuals(u)
        res_sup = float(np.max(np.abs(r)))
        if it % 25 == 0 or res_sup <= tol:
            history.append((it, res_sup))
        if res_sup <= tol:
            break
        u[scheme.unknown_flat] += tau * r
        it += 1
    converged = res_sup <= tol
    return SolveReport(
        _solution_grid(problem, u), res_sup, it, converged, "jacobi", tuple(history)
    )


# -- verification and experiments -----------------------------------------------


@dataclass(frozen=True)
class HarmonicReport:
    subharmonic: grids.SubharmonicReport
    dual_subharmonic: grids.SubharmonicReport
    harmonic: bool

    def to_dict(self) -> dict:
        return {
            "harmonic": bool(self.harmonic),
            "subharmonic": self.subharmonic.to_dict(),
            "dual_subharmonic": self.dual_subharmonic.to_dict(),
        }


def _negated(u: GridFunction) -> GridFunction:
    neg = np.isneginf(u.values)
    vals = np.where(neg, -np.inf, -u.values)
    mask = None
    if u.mask is not None or neg.any():
        mask = u.masked() | neg
    return GridFunction(vals, u.origin, u.h, mask)


def harmonic_verify(
    u: GridFunction,
    spec: ConeSpec,
    c_tol: Optional[float] = None,
    region: Optional[np.ndarray] = None,
) -> HarmonicReport:
    """Check u against the cone and -u against its dual at grid scale.

    ``region`` restricts the checked points, e.g. to the unknown set of a
    solve so that Dirichlet data cells are not probed.
    """
    if c_tol is None:
        c_tol = grids.third_difference_kappa(u) * u.h
    sub = grids.subharmonic_verify(u, spec, c_tol, region=region)
    dual = grids.subharmonic_verify(
        _negated(u), cones.dual_cone(spec), c_tol, region=region
    )
    return HarmonicReport(sub, dual, sub.passed and dual.passed)


@dataclass(frozen=True)
class RemovabilityReport:
    """Full-vs-punctured comparison with the perturbation verification.

    ``sup_gap`` compares the extension with the unpunctured solution over
    unmasked cells; the shell-sup value at the punctures themselves
    carries an intrinsic O(h |grad u|) bias and is reported separately as
    ``masked_gap``.
    """

    sup_gap: float
    masked_gap: float
    gap_threshold: float
    perturbation_checks: dict  # eps -> violation count
    passed: bool
    full: SolveReport
    punctured: SolveReport
    extension_changed: int

    def to_dict(self) -> dict:
        return {
            "sup_gap": float(self.sup_gap),
            "masked_gap": float(self.masked_gap),
            "gap_threshold": float(self.gap_threshold),
            "perturbation_checks": {
                repr(k): int(v) for k, v in self.perturbation_checks.items()
            },
            "passed": bool(self.passed),
            "full": self.full.to_dict(),
            "punctured": self.punctured.to_dict(),
            "extension_changed": int(self.extension_changed),
        }


def removability_experiment(
    problem: DirichletProblem,
    punctures,
    polar_p: Optional[float] = None,
    stencil: Optional[StencilSet] = None,
    tol: float = 1e-9,
    eps_values=(1e-2, 1e-3),
    gap_constant: float = 5.0,
    certification: Optional[SampleConfig] = None,
) -> RemovabilityReport:
    """Solve, puncture, extend, and verify the perturbation by a polar.

    Steps: (i) solve the full problem; (ii) solve with the punctures
    excluded; (iii) extend the punctured solution across them; (iv) build
    the polar function of the punctures and verify that the punctured
    solution plus eps times the polar stays subharmonic off the punctures
    for each eps; (v) compare extension with the full solution.  Passing
    needs the off-puncture sup gap below ``gap_constant * (h + tol)`` and
    every perturbation check clean.

    The partial-sum operator needs ``p >= 2`` (no finite point set is
    polar below that); branch operators additionally need a randomized
    monotonicity certification against the requested polar exponent.
    """
    if problem.punctures:
        raise DomainError("pass the puncture set separately, not in the problem")
    punctures = list(punctures)
    if not punctures:
        raise DomainError("the experiment needs at least one puncture point")
    kind, val = problem.operator
    nd = problem.ndim
    if polar_p is None:
        if kind != "pp":
            raise DomainError("branch operators need an explicit polar exponent")
        polar_p = float(val)
    if polar_p < 2.0:
        raise UnsupportedPolarError(
            f"removability experiments need a polar exponent >= 2, got {polar_p} "
            "(no finite point set is polar below 2)"
        )
    if kind == "branch":
        cfg = certification or SampleConfig(seed=0, count=2000)
        rep = cones.check_relation(
            cones.branch_cone(int(val), nd), cones.pp_cone(polar_p, nd), cfg
        )
        if not rep.passed:
            raise DomainError(
                f"branch:{int(val)} is not certified monotone for pp:{polar_p}; "
                f"counterexample at sample {rep.failure_index}"
            )

    idx_pts = []
    for pt in punctures:
        pt = np.asarray(pt, dtype=float)
        idx_pts.append(tuple(int(round(c)) for c in (pt - problem.origin) / problem.h))
    full = solve(problem, stencil=stencil, tol=tol)
    punctured_problem = problem.with_punctures(idx_pts)
    punct = solve(punctured_problem, stencil=stencil, tol=tol)

    ext = grids.canonical_extension(punct.solution)
    off = ~punctured_problem.puncture_mask()
    sup_gap = float(
        np.max(np.abs(ext.extended.values[off] - full.solution.values[off]))
    )
    masked_gap = float(
        np.max(np.abs(ext.extended.values[~off] - full.solution.values[~off]))
    )

    polar = riesz.build_polar(
        [problem.origin + problem.h * np.asarray(pt) for pt in idx_pts], polar_p
    )
    coords = grids.grid_coordinates(problem.shape, problem.origin, problem.h)
    pts = np.stack([c.reshape(-1) for c in coords], axis=1)
    psi_vals = polar.values(pts).reshape(problem.shape)
    psi = GridFunction(
        psi_vals, problem.origin, problem.h, punctured_problem.puncture_mask()
    )
    cone = operator_cone(problem.operator, nd)
    region = punctured_problem.unknown_mask()
    checks = {}
    ok = True
    for eps in eps_values:
        rep = grids.subharmonic_verify(
            grids.perturb(punct.solution, psi, eps), cone, region=region
        )
        checks[float(eps)] = len(rep.violations)
        ok = ok and rep.passed

    threshold = gap_constant * (problem.h + tol)
    passed = ok and sup_gap <= threshold
    return RemovabilityReport(
        sup_gap=sup_gap,
        masked_gap=masked_gap,
        gap_threshold=threshold,
        perturbation_checks=checks,
        passed=passed,
        full=full,
        punctured=punct,
        extension_changed=ext.changed_points,
    )


# -- problem files ---------------------------------------------------------------

_EXPR_NAMES = {
    "sqrt": np.sqrt,
    "log": np.log,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
    "hypot": np.hypot,
    "arctan2": np.arctan2,
    "pi": np.pi,
    "e": np.e,
}


def evaluate_expression(expr: str, coords) -> np.ndarray:
    """Evaluate a boundary expression over coordinate arrays.

    The namespace exposes x, y, z (as available), r (distance to the
    coordinate origin), and a whitelist of numpy functions.
    """
    ns = dict(_EXPR_NAMES)
    for name, arr in zip("xyz", coords):
        ns[name] = arr
    ns["r"] = np.sqrt(sum(c * c for c in coords))
    try:
        vals = eval(expr, {"__builtins__": {}}, ns)  # noqa: S307 - whitelisted
    except Exception as exc:
        raise DomainError(f"boundary expression failed: {exc}") from exc
    return np.broadcast_to(np.asarray(vals, dtype=float), coords[0].shape).copy()


def problem_from_config(cfg: dict) -> DirichletProblem:
    """Build a problem from its JSON dict form.

    Keys: ``operator`` ("pp"/"branch") with ``p`` or ``k``; ``grid`` with
    shape/origin/h; ``boundary`` with ``expr`` or ``grid_file``; optional
    ``hole`` box {min, max} and ``puncture`` point list.
    """
    try:
        grid = cfg["grid"]
        shape = tuple(int(s) for s in grid["shape"])
        origin = np.asarray(grid["origin"], dtype=float)
        h = float(grid["h"])
        op_kind = cfg["operator"]
        op = (op_kind, cfg["p"] if op_kind == "pp" else cfg["k"])
        boundary = cfg["boundary"]
    except KeyError as exc:
        raise DomainError(f"problem config is missing key {exc}") from exc
    coords = grids.grid_coordinates(shape, origin, h)
    if "expr" in boundary:
        g = evaluate_expression(boundary["expr"], coords)
    elif "grid_file" in boundary:
        gf = grids.read_grid(boundary["grid_file"])
        if gf.shape != shape:
            raise DomainError("boundary grid file does not match the problem grid")
        g = np.array(gf.values)
    else:
        raise DomainError("boundary needs 'expr' or 'grid_file'")
    hole = None
    if cfg.get("hole"):
        lo = np.asarray(cfg["hole"]["min"], dtype=float)
        hi = np.asarray(cfg["hole"]["max"], dtype=float)
        hole = np.ones(shape, dtype=bool)
        for d in range(len(shape)):
            hole &= (coords[d] >= lo[d] - 1e-12) & (coords[d] <= hi[d] + 1e-12)
    punctures = []
    for pt in cfg.get("puncture", []) or []:
        pt = np.asarray(pt, dtype=float)
        punctures.append(tuple(int(round(c)) for c in (pt - origin) / h))
    return DirichletProblem(shape, origin, h, op, g, hole, tuple(punctures))
