"""Two-player zero-sum game oracles.

A game ``min_x max_y f(x, y)`` with ``x in R^n``, ``y in R^m`` is bundled as a
:class:`GameOracle` exposing the objective ``f``, the stacked pseudo-gradient

    omega(z) = (grad_x f(z), -grad_y f(z)),      z = (x, y),

and its Jacobian ``J(z) = d omega / d z``, whose block layout is

    [[  H_xx,  H_xy ],
     [ -H_yx, -H_yy ]]

with ``H_ab`` the second-derivative blocks of ``f``.  Built-in problems ship
closed-form derivatives; :func:`fd_check` validates any oracle against central
finite differences of ``f`` and ``omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EvaluationError

# central-difference base step: truncation/rounding balance for C^3 objectives
FD_BASE_STEP = float(np.finfo(float).eps) ** (1.0 / 3.0)

# entropy terms are undefined below this floor (see qre builtin)
QRE_LOG_FLOOR = 1e-12


@dataclass
class JointPoint:
    """A strategy pair z = (x, y) with the player dimension split (n, m)."""

    values: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.n < 1 or self.m < 1:
            raise ValueError(f"player dimensions must be >= 1, got ({self.n}, {self.m})")
        if self.values.size != self.n + self.m:
            raise ValueError(
                f"joint point has {self.values.size} coordinates, expected n+m={self.n + self.m}"
            )
        if not np.all(np.isfinite(self.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.values))[0])
            raise ValueError(f"non-finite coordinate z[{bad}]")

    @property
    def x(self) -> np.ndarray:
        return self.values[: self.n]

    @property
    def y(self) -> np.ndarray:
        return self.values[self.n :]


@dataclass
class GameOracle:
    """Callable bundle (f, omega, jac) for one game.

    The callables act on raw vectors of length ``n + m``.  User-supplied
    oracles are trusted; run :func:`fd_check` to validate them.
    """

    dims: tuple[int, int]
    f: Callable[[np.ndarray], float]
    omega: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    @property
    def size(self) -> int:
        return self.dims[0] + self.dims[1]


def _as_vector(z, problem: GameOracle | None = None) -> np.ndarray:
    vec = z.values if isinstance(z, JointPoint) else np.asarray(z, dtype=float).reshape(-1)
    if problem is not None and vec.size != problem.size:
        raise ValueError(
            f"point has {vec.size} coordinates, problem {problem.name!r} expects {problem.size}"
        )
    return vec


def _check_finite_vector(out: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(np.asarray(out).ravel()))[0])
        raise EvaluationError(f"{what} produced a non-finite value at coordinate {bad}")
    return out


def eval_omega(problem: GameOracle, z) -> np.ndarray:
    """Evaluate the pseudo-gradient omega(z), checking dimensions and finiteness."""
    vec = _as_vector(z, problem)
    out = np.asarray(problem.omega(vec), dtype=float).reshape(-1)
    if out.size != problem.size:
        raise ValueError(f"omega returned {out.size} entries, expected {problem.size}")
    return _check_finite_vector(out, "omega")


def eval_jacobian(problem: GameOracle, z) -> np.ndarray:
    """Evaluate J(z) = d omega / dz, checking dimensions and finiteness."""
    vec = _as_vector(z, problem)
    out = np.asarray(problem.jac(vec), dtype=float)
    if out.shape != (problem.size, problem.size):
        raise ValueError(f"jac returned shape {out.shape}, expected square of {problem.size}")
    if not np.all(np.isfinite(out)):
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise EvaluationError(f"jac produced a non-finite value at entry ({int(i)}, {int(j)})")
    return out


def eval_value(problem: GameOracle, z) -> float:
    """Evaluate the game value f(z)."""
    vec = _as_vector(z, problem)
    out = float(problem.f(vec))
    if not math.isfinite(out):
        raise EvaluationError("f produced a non-finite value")
    return out


# ---------------------------------------------------------------------------
# built-in problems
# ---------------------------------------------------------------------------


def _toy2d() -> GameOracle:
    # f(x, y) = exp(-0.01 (x^2+y^2)) * ((0.3 y^2 + x)^2 + (0.5 x^2 + y)^2);
    # the minimizer controls the variable entering the quartic terms linearly.
    # This orientation gives the game three strict local Nash equilibria and
    # the first-order dynamics a fourth, non-Nash attractor.
    def parts(z):
        x, y = float(z[0]), float(z[1])
        u = 0.3 * y * y + x
        v = 0.5 * x * x + y
        g = u * u + v * v
        env = math.exp(-0.01 * (x * x + y * y))
        return x, y, u, v, g, env

    def f(z):
        _, _, _, _, g, env = parts(z)
        return env * g

    def omega(z):
        x, y, u, v, g, env = parts(z)
        gx = 2.0 * u + 2.0 * x * v
        gy = 1.2 * y * u + 2.0 * v
        fx = env * (gx - 0.02 * x * g)
        fy = env * (gy - 0.02 * y * g)
        return np.array([fx, -fy])

    def jac(z):
        x, y, u, v, g, env = parts(z)
        gx = 2.0 * u + 2.0 * x * v
        gy = 1.2 * y * u + 2.0 * v
        gxx = 2.0 + 2.0 * v + 2.0 * x * x
        gxy = 1.2 * y + 2.0 * x
        gyy = 1.2 * u + 0.72 * y * y + 2.0
        fxx = env * (gxx - 0.04 * x * gx + (4e-4 * x * x - 0.02) * g)
        fxy = env * (gxy - 0.02 * x * gy - 0.02 * y * gx + 4e-4 * x * y * g)
        fyy = env * (gyy - 0.04 * y * gy + (4e-4 * y * y - 0.02) * g)
        return np.array([[fxx, fxy], [-fxy, -fyy]])

    return GameOracle(dims=(1, 1), f=f, omega=omega, jac=jac, name="toy2d")


def _bilinear(A: np.ndarray) -> GameOracle:
    # f(x, y) = x^T A y with A square and invertible
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"bilinear coupling matrix must be square, got shape {A.shape}")
    n = A.shape[0]
    if np.linalg.matrix_rank(A) < n:
        raise ValueError("bilinear coupling matrix must be invertible")
    J = np.block([[np.zeros((n, n)), A], [-A.T, np.zeros((n, n))]])

    def f(z):
        return float(z[:n] @ A @ z[n:])

    def omega(z):
        return np.concatenate([A @ z[n:], -(A.T @ z[:n])])

    def jac(z):
        return J.copy()

    return GameOracle(dims=(n, n), f=f, omega=omega, jac=jac, name="bilinear")


def _quadratic(P: np.ndarray, Q: np.ndarray, B: np.ndarray | None) -> GameOracle:
    # f(x, y) = x^T P x / 2 + x^T B y - y^T Q y / 2, P and Q symmetric
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or not np.allclose(P, P.T, atol=0.0):
        raise ValueError("quadratic P must be square symmetric")
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, atol=0.0):
        raise ValueError("quadratic Q must be square symmetric")
    n, m = P.shape[0], Q.shape[0]
    B = np.zeros((n, m)) if B is None else np.asarray(B, dtype=float)
    if B.shape != (n, m):
        raise ValueError(f"quadratic B must have shape ({n}, {m}), got {B.shape}")
    J = np.block([[P, B], [-B.T, Q]])

    def f(z):
        x, y = z[:n], z[n:]
        return float(0.5 * x @ P @ x + x @ B @ y - 0.5 * y @ Q @ y)

    def omega(z):
        x, y = z[:n], z[n:]
        return np.concatenate([P @ x + B @ y, Q @ y - B.T @ x])

    def jac(z):
        return J.copy()

    return GameOracle(dims=(n, m), f=f, omega=omega, jac=jac, name="quadratic")


def _qre(A: np.ndarray) -> GameOracle:
    # f(x, y) = x^T A y + sum x_i log x_i - sum y_j log y_j on positive coordinates
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"qre payoff matrix must be 2-d, got shape {A.shape}")
    n, m = A.shape

    def checked_logs(v, offset):
        small = np.flatnonzero(v < QRE_LOG_FLOOR)
        if small.size:
            raise EvaluationError(
                f"entropy log underflow at coordinate {int(small[0]) + offset} "
                f"(value {v[small[0]]:.3e} < {QRE_LOG_FLOOR:g})"
            )
        return np.log(v)

    def f(z):
        x, y = z[:n], z[n:]
        lx = checked_logs(x, 0)
        ly = checked_logs(y, n)
        return float(x @ A @ y + x @ lx - y @ ly)

    def omega(z):
        x, y = z[:n], z[n:]
        lx = checked_logs(x, 0)
        ly = checked_logs(y, n)
        return np.concatenate([A @ y + lx + 1.0, -(A.T @ x) + ly + 1.0])

    def jac(z):
        x, y = z[:n], z[n:]
        checked_logs(x, 0)
        checked_logs(y, n)
        return np.block(
            [[np.diag(1.0 / x), A], [-A.T, np.diag(1.0 / y)]]
        )

    return GameOracle(dims=(n, m), f=f, omega=omega, jac=jac, name="qre")


BUILTIN_KINDS = ("toy2d", "bilinear", "quadratic", "qre")


def make_builtin(kind: str, params: dict | None = None) -> GameOracle:
    """Construct a built-in problem.

    Parameters
    ----------
    kind : one of ``toy2d``, ``bilinear``, ``quadratic``, ``qre``.
    params : parameter record; ``bilinear``/``qre`` take ``A``, ``quadratic``
        takes ``P``, ``Q`` and optional ``B``.
    """
    params = dict(params or {})
    if kind == "toy2d":
        return _toy2d()
    if kind == "bilinear":
        if "A" not in params:
            raise ValueError("bilinear problem requires parameter A")
        return _bilinear(params["A"])
    if kind == "quadratic":
        if "P" not in params or "Q" not in params:
            raise ValueError("quadratic problem requires parameters P and Q")
        return _quadratic(params["P"], params["Q"], params.get("B"))
    if kind == "qre":
        if "A" not in params:
            raise ValueError("qre problem requires parameter A")
        return _qre(params["A"])
    raise ValueError(f"unknown problem kind {kind!r}; expected one of {BUILTIN_KINDS}")


# ---------------------------------------------------------------------------
# finite-difference validation
# ---------------------------------------------------------------------------


@dataclass
class FdReport:
    """Worst relative errors of analytic derivatives against central differences."""

    omega_err: float
    omega_arg: int
    jac_err: float
    jac_arg: tuple[int, int]

    @property
    def max_err(self) -> float:
        return max(self.omega_err, self.jac_err)


def fd_check(problem: GameOracle, z, h: float | None = None) -> FdReport:
    """Compare analytic omega/J against central finite differences.

    The per-coordinate step is ``h * max(1, |z_i|)`` with ``h`` defaulting to
    ``eps**(1/3)``.  Relative errors use the comparison scale
    ``max(1, |analytic|)``.  Oracle evaluation errors propagate.
    """
    vec = _as_vector(z, problem)
    base = FD_BASE_STEP if h is None else float(h)
    if base <= 0.0:
        raise ValueError("finite-difference step must be > 0")
    d = problem.size
    n = problem.dims[0]
    steps = base * np.maximum(1.0, np.abs(vec))

    omega0 = eval_omega(problem, vec)
    jac0 = eval_jacobian(problem, vec)

    omega_err, omega_arg = 0.0, 0
    jac_err, jac_arg = 0.0, (0, 0)
    for i in range(d):
        e = np.zeros(d)
        e[i] = steps[i]
        f_diff = (eval_value(problem, vec + e) - eval_value(problem, vec - e)) / (2.0 * steps[i])
        grad_i = f_diff if i < n else -f_diff  # omega flips the y-block sign
        err = abs(grad_i - omega0[i]) / max(1.0, abs(omega0[i]))
        if err > omega_err:
            omega_err, omega_arg = err, i

        col = (eval_omega(problem, vec + e) - eval_omega(problem, vec - e)) / (2.0 * steps[i])
        errs = np.abs(col - jac0[:, i]) / np.maximum(1.0, np.abs(jac0[:, i]))
        r = int(np.argmax(errs))
        if errs[r] > jac_err:
            jac_err, jac_arg = float(errs[r]), (r, i)

    return FdReport(omega_err=omega_err, omega_arg=omega_arg, jac_err=jac_err, jac_arg=jac_arg)
