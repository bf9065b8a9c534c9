import numpy as np
import pytest

import nashdyn as nd

# strict local Nash equilibria of the built-in 2-d toy problem, found by
# exhaustive sign-change scanning of omega plus Newton polish (verified
# ||omega|| < 1e-12 in test_game)
TOY_NASH = (
    np.array([-8.677925595946029, -12.476604033044492]),
    np.array([-6.372831318444235, 12.395007146418772]),
    np.array([8.004295345248243, -11.426652020836208]),
)
# the fourth attractor of the first-order dynamics; not a Nash point
TOY_GDA_TRAP = np.array([-1.2242747225581982, -1.3165279824134077])


@pytest.fixture(scope="session")
def toy2d():
    return nd.make_builtin("toy2d")


@pytest.fixture(scope="session")
def bilinear1():
    return nd.make_builtin("bilinear", {"A": [[1.0]]})


@pytest.fixture(scope="session")
def saddle():
    # f = x^2/2 - y^2/2, the simplest strict-Nash quadratic
    return nd.make_builtin("quadratic", {"P": [[1.0]], "Q": [[1.0]]})


@pytest.fixture(scope="session")
def qre2():
    return nd.make_builtin("qre", {"A": np.eye(2)})


def quartic_cc_game(n: int, m: int, B: np.ndarray) -> nd.GameOracle:
    """Non-quadratic convex-concave game with J + J^T >= 2I everywhere.

    f = sum(x^2/2 + x^4/12) + x.B.y - sum(y^2/2 + y^4/12); the diagonal
    Hessian blocks are 1 + x^2 and -(1 + y^2), so every singular value of J
    is at least 1.
    """
    B = np.asarray(B, dtype=float)

    def f(z):
        x, y = z[:n], z[n:]
        return float(np.sum(x**2 / 2 + x**4 / 12) + x @ B @ y - np.sum(y**2 / 2 + y**4 / 12))

    def omega(z):
        x, y = z[:n], z[n:]
        return np.concatenate([x + x**3 / 3 + B @ y, y + y**3 / 3 - B.T @ x])

    def jac(z):
        x, y = z[:n], z[n:]
        return np.block([[np.diag(1 + x**2), B], [-B.T, np.diag(1 + y**2)]])

    return nd.GameOracle(dims=(n, m), f=f, omega=omega, jac=jac, name="quartic_cc")


def newton_polish(problem: nd.GameOracle, z0, iters: int = 60) -> np.ndarray:
    """Newton's method on omega = 0; independent limit-point oracle for rate tests."""
    z = np.array(z0, dtype=float)
    for _ in range(iters):
        step = np.linalg.solve(problem.jac(z), problem.omega(z))
        z = z - step
        if np.linalg.norm(step) < 1e-14:
            break
    return z
