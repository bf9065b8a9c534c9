"""Convex constraint sets and the projected second-order solver.

Sets expose Euclidean projection, interior/boundary location (relative to the
affine hull for sets with empty ambient interior, such as probability
simplices), and the tangent-space projection of update directions.  The
projected solver takes stabilized second-order steps in the interior and, on
the boundary, moves along the component of the update parallel to the
pseudo-gradient before re-projecting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import classify as _classify
from .dynamics import (
    MODE_DND,
    MODE_INIT,
    STATUS_CONVERGED,
    STATUS_DIVERGED,
    STATUS_EVAL_ERROR,
    STATUS_MAX_ITERS,
    IterateTrace,
    SolverConfig,
    _dnd_direction,
    _norm,
    _step_record,
)
from .errors import EvaluationError, NumericError, SetError
from .game import GameOracle, JointPoint, _as_vector, eval_jacobian, eval_omega

LOCATION_INTERIOR = "Interior"
LOCATION_BOUNDARY = "Boundary"
LOCATION_EXTERIOR = "Exterior"

MODE_BOUNDARY = "BOUNDARY"

DEFAULT_BOUNDARY_TOL = 1e-9

DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_SWEEPS = 1000


class ConvexSet:
    """Base class: a closed convex set with projection and location queries."""

    dim: int
    full_dimensional: bool = True
    boundary_tol: float = DEFAULT_BOUNDARY_TOL

    def project(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def locate(self, p: np.ndarray) -> str:
        raise NotImplementedError

    def tangent_project(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Project a direction onto the tangent space of the affine hull."""
        return v

    def _tol_at(self, p: np.ndarray) -> float:
        return self.boundary_tol * (1.0 + float(np.linalg.norm(p)))


def _vec(p, dim: int | None = None) -> np.ndarray:
    v = np.asarray(p, dtype=float).reshape(-1)
    if dim is not None and v.size != dim:
        raise ValueError(f"point has {v.size} coordinates, set expects {dim}")
    return v


class Box(ConvexSet):
    def __init__(self, lo, hi, boundary_tol: float = DEFAULT_BOUNDARY_TOL):
        self.lo = _vec(lo)
        self.hi = _vec(hi, self.lo.size)
        if np.any(self.lo >= self.hi):
            raise ValueError("box requires lo < hi componentwise")
        self.dim = self.lo.size
        self.boundary_tol = boundary_tol

    def project(self, p):
        return np.clip(_vec(p, self.dim), self.lo, self.hi)

    def locate(self, p):
        p = _vec(p, self.dim)
        tol = self._tol_at(p)
        if np.any(p < self.lo - tol) or np.any(p > self.hi + tol):
            return LOCATION_EXTERIOR
        gap = min(float(np.min(p - self.lo)), float(np.min(self.hi - p)))
        return LOCATION_BOUNDARY if gap <= tol else LOCATION_INTERIOR


class Ball(ConvexSet):
    def __init__(self, center, radius: float, boundary_tol: float = DEFAULT_BOUNDARY_TOL):
        self.center = _vec(center)
        if radius <= 0.0:
            raise ValueError("ball radius must be > 0")
        self.radius = float(radius)
        self.dim = self.center.size
        self.boundary_tol = boundary_tol

    def project(self, p):
        p = _vec(p, self.dim)
        d = p - self.center
        dist = float(np.linalg.norm(d))
        if dist <= self.radius:
            return p.copy()
        return self.center + (self.radius / dist) * d

    def locate(self, p):
        p = _vec(p, self.dim)
        tol = self._tol_at(p)
        dist = float(np.linalg.norm(p - self.center))
        if dist > self.radius + tol:
            return LOCATION_EXTERIOR
        return LOCATION_BOUNDARY if dist >= self.radius - tol else LOCATION_INTERIOR


class Halfspace(ConvexSet):
    """{p : a.p <= b} with a nonzero."""

    def __init__(self, a, b: float, boundary_tol: float = DEFAULT_BOUNDARY_TOL):
        self.a = _vec(a)
        norm_sq = float(self.a @ self.a)
        if norm_sq == 0.0:
            raise ValueError("halfspace normal must be nonzero")
        self._norm_sq = norm_sq
        self._norm = math.sqrt(norm_sq)
        self.b = float(b)
        self.dim = self.a.size
        self.boundary_tol = boundary_tol

    def project(self, p):
        p = _vec(p, self.dim)
        excess = float(self.a @ p) - self.b
        if excess <= 0.0:
            return p.copy()
        return p - (excess / self._norm_sq) * self.a

    def locate(self, p):
        p = _vec(p, self.dim)
        tol = self._tol_at(p)
        signed = (float(self.a @ p) - self.b) / self._norm
        if signed > tol:
            return LOCATION_EXTERIOR
        return LOCATION_BOUNDARY if signed >= -tol else LOCATION_INTERIOR


class Simplex(ConvexSet):
    """Probability simplex {v >= 0, sum v = 1}; empty ambient interior."""

    full_dimensional = False

    def __init__(self, dim: int, boundary_tol: float = DEFAULT_BOUNDARY_TOL):
        if dim < 1:
            raise ValueError("simplex dimension must be >= 1")
        self.dim = int(dim)
        self.boundary_tol = boundary_tol

    def project(self, p):
        # sort-based projection (Held et al. / Wang & Carreira-Perpinan)
        p = _vec(p, self.dim)
        u = np.sort(p)[::-1]
        css = np.cumsum(u)
        idx = np.arange(1, self.dim + 1)
        cond = u + (1.0 - css) / idx > 0.0
        rho = int(np.nonzero(cond)[0][-1])
        theta = (1.0 - css[rho]) / (rho + 1.0)
        return np.maximum(p + theta, 0.0)

    def locate(self, p):
        p = _vec(p, self.dim)
        tol = self._tol_at(p)
        if abs(float(np.sum(p)) - 1.0) > tol * self.dim or np.any(p < -tol):
            return LOCATION_EXTERIOR
        # relative location in the affine hull: facets are the zero coordinates
        return LOCATION_BOUNDARY if float(np.min(p)) <= tol else LOCATION_INTERIOR

    def tangent_project(self, p, v):
        v = _vec(v, self.dim)
        return v - np.mean(v)


class ProductSet(ConvexSet):
    """Cartesian product of per-player (or per-block) sets."""

    def __init__(self, factors):
        self.factors = list(factors)
        if not self.factors:
            raise ValueError("product of zero sets")
        self.dim = sum(f.dim for f in self.factors)
        self.full_dimensional = all(f.full_dimensional for f in self.factors)
        self._offsets = np.cumsum([0] + [f.dim for f in self.factors])

    def _blocks(self, p):
        p = _vec(p, self.dim)
        return [p[self._offsets[i] : self._offsets[i + 1]] for i in range(len(self.factors))]

    def project(self, p):
        return np.concatenate([f.project(b) for f, b in zip(self.factors, self._blocks(p))])

    def locate(self, p):
        locs = [f.locate(b) for f, b in zip(self.factors, self._blocks(p))]
        if LOCATION_EXTERIOR in locs:
            return LOCATION_EXTERIOR
        return LOCATION_INTERIOR if all(l == LOCATION_INTERIOR for l in locs) else LOCATION_BOUNDARY

    def tangent_project(self, p, v):
        v_blocks = [
            f.tangent_project(pb, vb)
            for f, pb, vb in zip(self.factors, self._blocks(p), self._blocks(v))
        ]
        return np.concatenate(v_blocks)


class IntersectionSet(ConvexSet):
    """Intersection handled by Dykstra's alternating projections."""

    def __init__(self, members):
        self.members = list(members)
        if not self.members:
            raise ValueError("intersection of zero sets")
        self.dim = self.members[0].dim
        if any(m.dim != self.dim for m in self.members):
            raise ValueError("intersection members must share the ambient dimension")
        self.full_dimensional = all(m.full_dimensional for m in self.members)

    def project(self, p):
        x = _vec(p, self.dim).copy()
        corrections = [np.zeros(self.dim) for _ in self.members]
        for _ in range(DYKSTRA_MAX_SWEEPS):
            x_old = x.copy()
            for i, member in enumerate(self.members):
                y = member.project(x + corrections[i])
                corrections[i] = x + corrections[i] - y
                x = y
            if float(np.linalg.norm(x - x_old)) <= DYKSTRA_TOL * (1.0 + float(np.linalg.norm(x))):
                # on disjoint members the cycle still settles; reject limits
                # that are not actually feasible for every member
                gap = max(float(np.linalg.norm(m.project(x) - x)) for m in self.members)
                if gap > 1e3 * DYKSTRA_TOL * (1.0 + float(np.linalg.norm(x))):
                    raise SetError(
                        f"Dykstra limit lies {gap:.3e} outside a member; intersection may be empty"
                    )
                return x
        raise SetError("Dykstra projection did not converge; intersection may be empty")

    def locate(self, p):
        locs = [m.locate(p) for m in self.members]
        if LOCATION_EXTERIOR in locs:
            return LOCATION_EXTERIOR
        return LOCATION_INTERIOR if all(l == LOCATION_INTERIOR for l in locs) else LOCATION_BOUNDARY


def project(cset: ConvexSet, p) -> np.ndarray:
    """Euclidean projection of p onto the set."""
    return cset.project(np.asarray(p, dtype=float).reshape(-1))


def locate(cset: ConvexSet, p) -> str:
    """Interior/Boundary/Exterior location of p, relative for empty-interior sets."""
    return cset.locate(np.asarray(p, dtype=float).reshape(-1))


def project_onto_vector(a, b) -> np.ndarray:
    """Projection of b onto the line spanned by a: (a.b / ||a||^2) a."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"vectors have mismatched sizes {a.size} and {b.size}")
    norm_sq = float(a @ a)
    if norm_sq == 0.0:
        raise ValueError("cannot project onto the zero vector")
    return (float(a @ b) / norm_sq) * a


def make_set(spec: dict) -> ConvexSet:
    """Build a constraint set from its configuration record."""
    kind = spec.get("kind")
    if kind == "box":
        return Box(spec["lo"], spec["hi"])
    if kind == "ball":
        return Ball(spec["center"], spec["radius"])
    if kind == "halfspace":
        return Halfspace(spec["a"], spec["b"])
    if kind == "simplex":
        return Simplex(spec["dim"])
    if kind == "product":
        return ProductSet([make_set(s) for s in spec["factors"]])
    if kind == "intersection":
        return IntersectionSet([make_set(s) for s in spec["sets"]])
    raise ValueError(f"unknown constraint kind {kind!r}")


def run_second(problem: GameOracle, cset: ConvexSet, z0, config: SolverConfig) -> IterateTrace:
    """Projected second-order solver for local generalized Nash equilibria.

    Interior iterates take the stabilized second-order step followed by the
    set projection (for sets with empty ambient interior the step is first
    projected onto the affine hull's tangent space); boundary iterates move
    along the component of the update direction parallel to the
    pseudo-gradient, then re-project.  Terminates when the displacement drops
    below ``tol * alpha``, or at interior points when ``||omega|| <= tol``;
    the terminal point's classification is attached to the trace.
    """
    if cset.dim != problem.size:
        raise ValueError(f"set dimension {cset.dim} does not match problem size {problem.size}")
    dims = problem.dims
    flags: list[str] = []

    z = cset.project(_as_vector(z0, problem))
    omega = eval_omega(problem, z)
    omega_norm = _norm(omega)
    rows = [_step_record(0, z, omega_norm, 0.0, MODE_INIT)]
    status = STATUS_MAX_ITERS

    k = 0
    try:
        while True:
            loc = cset.locate(z)
            if loc == LOCATION_INTERIOR and omega_norm <= config.tol:
                status = STATUS_CONVERGED
                break
            if _norm(z) > config.diverge_norm:
                status = STATUS_DIVERGED
                break
            if k >= config.max_iters:
                status = STATUS_MAX_ITERS
                break

            if loc == LOCATION_BOUNDARY and omega_norm == 0.0:
                # projection direction undefined; terminate and classify
                flags.append(f"boundary_critical@{k}")
                status = STATUS_CONVERGED
                break

            J = eval_jacobian(problem, z)
            d = _dnd_direction(J, omega, omega_norm, dims, config.reg)
            if loc == LOCATION_BOUNDARY:
                m_dir = project_onto_vector(omega, d)
                z_next = cset.project(z - config.alpha * m_dir)
                mode = MODE_BOUNDARY
            else:
                step = -config.alpha * d
                if not cset.full_dimensional:
                    step = cset.tangent_project(z, step)
                z_next = cset.project(z + step)
                mode = MODE_DND

            displacement = _norm(z_next - z)
            z = z_next
            omega = eval_omega(problem, z)
            omega_norm = _norm(omega)
            k += 1
            rows.append(_step_record(k, z, omega_norm, config.alpha, mode))
            if displacement <= config.tol * config.alpha:
                status = STATUS_CONVERGED
                break
    except (EvaluationError, NumericError) as exc:
        status = STATUS_EVAL_ERROR
        flags.append(str(exc))

    final = JointPoint(rows[-1].z.copy(), *dims)
    report = None
    if status == STATUS_CONVERGED:
        loc = cset.locate(final.values)
        try:
            if loc == LOCATION_BOUNDARY or not cset.full_dimensional:
                report = _classify.check_boundary_gne(problem, cset, final.values, tol=config.tol)
            else:
                report = _classify.classify_unconstrained(
                    problem, final.values, tol=config.tol, config=config
                )
        except (EvaluationError, NumericError, ValueError) as exc:
            flags.append(f"terminal_classification_failed: {exc}")

    return IterateTrace(rows, status, final, flags, terminal_report=report)
