"""Fixed-point classification and empirical convergence-rate estimation.

Verdicts: a candidate point is a strict local Nash equilibrium when the
pseudo-gradient vanishes and the player Hessian blocks are definite with the
right signs (H_xx positive, H_yy negative); a critical point failing the
curvature test is non-Nash; boundary points of a constraint set are certified
through a projected-step normal-cone test.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import NumericError
from .game import GameOracle, JointPoint, _as_vector, eval_jacobian, eval_omega
from .spectral import BlockEigs, beta_diagonal, extreme_block_eigs, spectral_radius

if TYPE_CHECKING:  # pragma: no cover - type hints only, no runtime import
    from .dynamics import IterateTrace, SolverConfig

STRICT_LOCAL_NASH = "StrictLocalNash"
NON_NASH_CRITICAL = "NonNashCritical"
NOT_CRITICAL = "NotCritical"
BOUNDARY_GNE = "BoundaryGNE"
BOUNDARY_NON_GNE = "BoundaryNonGNE"

RATE_LINEAR = "linear"
RATE_QUADRATIC = "superlinear/quadratic"
RATE_INCONCLUSIVE = "inconclusive"

DEFAULT_CRITICAL_TOL = 1e-5
DEFAULT_EIG_MARGIN = 1e-8


@dataclass
class FixedPointReport:
    """Classification of a candidate point with its stability spectra."""

    point: JointPoint
    omega_norm: float
    verdict: str
    lambda_x: float
    lambda_y: float
    gda_jac_spectrum: np.ndarray
    dnd_map_radius: float  # NaN when the point is not critical

    def to_json_dict(self) -> dict:
        return {
            "point": [float(v) for v in self.point.values],
            "omega_norm": self.omega_norm,
            "verdict": self.verdict,
            "lambda_x": self.lambda_x,
            "lambda_y": self.lambda_y,
            "gda_jac_spectrum": [[float(ev.real), float(ev.imag)] for ev in self.gda_jac_spectrum],
            "dnd_map_radius": None if np.isnan(self.dnd_map_radius) else float(self.dnd_map_radius),
        }


@dataclass
class RateEstimate:
    """Empirical convergence order fitted from a trace tail."""

    order: str
    factor: float
    tail_len: int
    measured_L: float | None = None
    measured_mu: float | None = None
    measured_LJ: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "order": self.order,
            "factor": self.factor,
            "tail_len": self.tail_len,
            "measured_L": self.measured_L,
            "measured_mu": self.measured_mu,
            "measured_LJ": self.measured_LJ,
        }


@dataclass
class SmoothnessConstants:
    """Empirical smoothness/curvature estimates over a sample of points.

    ``L`` bounds the merit gradient's change (including exact per-segment
    descent-lemma curvatures over consecutive samples), ``mu`` lower-bounds
    the singular values of J at the samples, ``L_J`` bounds J's change.
    """

    L: float
    mu: float
    L_J: float


def satisfies_nash_sufficiency(
    omega_norm: float, eigs: BlockEigs, tol: float, margin: float
) -> bool:
    """Second-order sufficiency test: critical with definite player blocks."""
    return omega_norm <= tol and eigs.lambda_x > margin and eigs.lambda_y < -margin


def dnd_map_radius(problem: GameOracle, z, config: "SolverConfig") -> float:
    """Spectral radius of the discrete dynamics' differential at a critical point.

    Valid only where ``||omega(z)|| <= config.tol``: there all diagonal shifts
    vanish and the differential reduces to ``I - alpha (J + J^T + beta)^{-1}``.
    """
    vec = _as_vector(z, problem)
    omega = eval_omega(problem, vec)
    omega_norm = float(np.linalg.norm(omega))
    if omega_norm > config.tol:
        raise ValueError(
            f"point is not critical (||omega|| = {omega_norm:.3e} > tol = {config.tol:.3e})"
        )
    J = eval_jacobian(problem, vec)
    eigs = extreme_block_eigs(J, problem.dims)
    beta = beta_diagonal(eigs, config.reg, problem.dims)
    core = J + J.T + np.diag(beta)
    try:
        inv = np.linalg.inv(core)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"J + J^T + beta is singular at the candidate point: {exc}") from exc
    return spectral_radius(np.eye(problem.size) - config.alpha * inv)


def classify_unconstrained(
    problem: GameOracle,
    z,
    tol: float = DEFAULT_CRITICAL_TOL,
    margin: float = DEFAULT_EIG_MARGIN,
    config: "SolverConfig | None" = None,
) -> FixedPointReport:
    """Classify a candidate point of the unconstrained game.

    ``NotCritical`` when ``||omega|| > tol``; otherwise ``StrictLocalNash``
    iff ``lambda_x > margin`` and ``lambda_y < -margin``, else
    ``NonNashCritical``.  Spectra are always filled; the discrete-map radius
    is filled at critical points when a solver config is supplied.
    """
    if tol <= 0.0 or margin <= 0.0:
        raise ValueError("tol and margin must be > 0")
    vec = _as_vector(z, problem)
    omega = eval_omega(problem, vec)
    omega_norm = float(np.linalg.norm(omega))
    J = eval_jacobian(problem, vec)
    eigs = extreme_block_eigs(J, problem.dims)
    spectrum = np.linalg.eigvals(J)

    if omega_norm > tol:
        verdict = NOT_CRITICAL
    elif eigs.lambda_x > margin and eigs.lambda_y < -margin:
        verdict = STRICT_LOCAL_NASH
    else:
        verdict = NON_NASH_CRITICAL

    radius = float("nan")
    if omega_norm <= tol and config is not None:
        try:
            radius = dnd_map_radius(problem, vec, config)
        except NumericError:
            radius = float("nan")

    return FixedPointReport(
        point=JointPoint(vec.copy(), *problem.dims),
        omega_norm=omega_norm,
        verdict=verdict,
        lambda_x=eigs.lambda_x,
        lambda_y=eigs.lambda_y,
        gda_jac_spectrum=spectrum,
        dnd_map_radius=radius,
    )


def check_boundary_gne(
    problem: GameOracle,
    cset,
    z,
    tol: float = DEFAULT_CRITICAL_TOL,
    eta: float = 1e-6,
) -> FixedPointReport:
    """Normal-cone test at a boundary point of a convex constraint set.

    The point passes (``BoundaryGNE``) when the projected small step
    ``Pi(z - eta * omega)`` does not move it by more than ``eta * tol``,
    i.e. ``-omega`` lies in the normal cone up to tolerance.  Points in the
    ambient interior of a full-dimensional set are rejected; sets with empty
    ambient interior (simplices) are boundary everywhere, so any feasible
    point is accepted there.
    """
    from .constrained import LOCATION_EXTERIOR, LOCATION_INTERIOR, locate

    vec = _as_vector(z, problem)
    loc = locate(cset, vec)
    if loc == LOCATION_EXTERIOR:
        raise ValueError("point lies outside the constraint set")
    if loc == LOCATION_INTERIOR and getattr(cset, "full_dimensional", True):
        raise ValueError("point lies in the ambient interior; use classify_unconstrained")

    omega = eval_omega(problem, vec)
    omega_norm = float(np.linalg.norm(omega))
    moved = float(np.linalg.norm(cset.project(vec - eta * omega) - vec))
    verdict = BOUNDARY_GNE if moved <= eta * tol else BOUNDARY_NON_GNE

    J = eval_jacobian(problem, vec)
    eigs = extreme_block_eigs(J, problem.dims)
    return FixedPointReport(
        point=JointPoint(vec.copy(), *problem.dims),
        omega_norm=omega_norm,
        verdict=verdict,
        lambda_x=eigs.lambda_x,
        lambda_y=eigs.lambda_y,
        gda_jac_spectrum=np.linalg.eigvals(J),
        dnd_map_radius=float("nan"),
    )


def estimate_rate(trace: "IterateTrace", z_star, tail_len: int = 20) -> RateEstimate:
    """Fit the convergence order of ``e_k = ||z_k - z*||`` over a trace tail.

    Linear when the ratios ``e_{k+1}/e_k`` stabilize (stddev below 5% of the
    mean) with mean < 1; quadratic when the log-log regression slope of
    ``e_{k+1}`` against ``e_k`` falls in [1.8, 2.2]; inconclusive otherwise.
    The error sequence is truncated at the first exact zero.
    """
    target = np.asarray(
        z_star.values if isinstance(z_star, JointPoint) else z_star, dtype=float
    ).reshape(-1)
    zs = [np.asarray(s.z, dtype=float) for s in trace.steps]
    errs = np.array([float(np.linalg.norm(zv - target)) for zv in zs])

    zero_hits = np.flatnonzero(errs == 0.0)
    if zero_hits.size:
        errs = errs[: int(zero_hits[0])]
    errs = errs[-(tail_len + 1) :]

    if errs.size < 3:
        return RateEstimate(order=RATE_INCONCLUSIVE, factor=float("nan"), tail_len=int(errs.size))

    ratios = errs[1:] / errs[:-1]
    mean_r = float(np.mean(ratios))
    if 0.0 < mean_r < 1.0 and float(np.std(ratios)) < 0.05 * mean_r:
        return RateEstimate(order=RATE_LINEAR, factor=mean_r, tail_len=int(errs.size - 1))

    logs = np.log(errs)
    slope, intercept = np.polyfit(logs[:-1], logs[1:], 1)
    if 1.8 <= slope <= 2.2:
        return RateEstimate(
            order=RATE_QUADRATIC, factor=float(np.exp(intercept)), tail_len=int(errs.size - 1)
        )
    return RateEstimate(order=RATE_INCONCLUSIVE, factor=float("nan"), tail_len=int(errs.size - 1))


def measure_constants(problem: GameOracle, points: Sequence[np.ndarray]) -> SmoothnessConstants:
    """Empirical smoothness constants over a sample of points.

    Pairwise gradient-difference quotients of the merit gradient J^T omega
    are combined with the exact descent-lemma curvature of consecutive
    segments, so the measured L certifies the smoothness inequality along the
    sampled trajectory itself.
    """
    pts = [np.asarray(p, dtype=float).reshape(-1) for p in points]
    if len(pts) < 2:
        raise ValueError("need at least two sample points")

    omegas = [eval_omega(problem, p) for p in pts]
    jacs = [eval_jacobian(problem, p) for p in pts]
    grads = [Jk.T @ wk for Jk, wk in zip(jacs, omegas)]
    merits = [0.5 * float(wk @ wk) for wk in omegas]

    L = 0.0
    L_J = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            gap = float(np.linalg.norm(pts[i] - pts[j]))
            if gap == 0.0:
                continue
            L = max(L, float(np.linalg.norm(grads[i] - grads[j])) / gap)
            L_J = max(L_J, float(np.linalg.norm(jacs[i] - jacs[j], ord=2)) / gap)
    for i in range(len(pts) - 1):
        step = pts[i + 1] - pts[i]
        gap_sq = float(step @ step)
        if gap_sq == 0.0:
            continue
        curv = 2.0 * (merits[i + 1] - merits[i] - float(grads[i] @ step)) / gap_sq
        L = max(L, curv)

    mu = min(float(np.sqrt(max(np.linalg.eigvalsh(Jk.T @ Jk)[0], 0.0))) for Jk in jacs)
    return SmoothnessConstants(L=L, mu=mu, L_J=L_J)
