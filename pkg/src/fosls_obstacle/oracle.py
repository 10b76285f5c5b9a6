"""Independent verification tools: a projected-SOR solver for 1D obstacle
problems on a uniform grid, and a central-finite-difference gradient checker.
"""

from dataclasses import dataclass

import numpy as np

from . import backend


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on (a, b) with n interior nodes; zero Dirichlet ends."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need n >= 3 interior nodes")
        if not self.a < self.b:
            raise ValueError("need a < b")

    @property
    def h(self):
        return (self.b - self.a) / (self.n + 1)

    def nodes(self):
        return self.a + self.h * np.arange(1, self.n + 1)


@dataclass
class PsorResult:
    u: np.ndarray
    sweeps: int
    last_change: float
    energies: np.ndarray


def psor_1d(grid, f, g, omega=1.5, tol=1e-10, max_iter=1_000_000):
    """Projected SOR for -u'' >= f, u >= g, complementarity, u(a)=u(b)=0.

    f and g are callables on node arrays (or plain arrays).  Stops when the
    max-norm change of one sweep drops to tol; raises on non-convergence.
    The discrete Dirichlet energy is recorded every 100 sweeps.
    """
    if not 0.0 < omega < 2.0:
        raise ValueError("relaxation omega must lie in (0, 2)")
    x = grid.nodes()
    fv = np.asarray(f(x) if callable(f) else f, dtype=np.float64)
    gv = np.asarray(g(x) if callable(g) else g, dtype=np.float64)
    if fv.shape != (grid.n,) or gv.shape != (grid.n,):
        raise ValueError("f and g must produce one value per interior node")
    h = grid.h
    # feasible start: obstacle clipped against the zero boundary data
    u = np.maximum(gv, 0.0)
    rhs = h * h * fv
    sweeps, last, energies, n_e = backend.kernels().psor_sweeps(
        u, gv, rhs, omega, tol, max_iter, 100, h)
    if last > tol:
        raise RuntimeError(f"PSOR did not converge in {max_iter} sweeps "
                           f"(last change {last:.3e} > tol {tol:.3e})")
    return PsorResult(u=u, sweeps=int(sweeps), last_change=float(last),
                      energies=energies[:n_e])


def psor_complementarity(grid, result, f, g, tol=1e-10):
    """Discrete complementarity residuals (feasibility, residual, product).

    Returns the triple (min(u - g), min(residual), max |residual * (u-g)|)
    with residual_i = (-u_{i-1} + 2 u_i - u_{i+1})/h^2 - f_i.
    """
    x = grid.nodes()
    fv = np.asarray(f(x) if callable(f) else f, dtype=np.float64)
    gv = np.asarray(g(x) if callable(g) else g, dtype=np.float64)
    u = result.u
    h2 = grid.h ** 2
    up = np.concatenate([[0.0], u, [0.0]])
    resid = (-up[:-2] + 2.0 * up[1:-1] - up[2:]) / h2 - fv
    slack = u - gv
    return float(slack.min()), float(resid.min()), float(np.max(np.abs(resid * slack)))


def fd_gradient(loss, theta, step=1e-5):
    """Componentwise central finite differences of a scalar loss at theta."""
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    work = theta.copy()
    for i in range(theta.size):
        orig = work[i]
        work[i] = orig + step
        up = loss(work)
        work[i] = orig - step
        down = loss(work)
        work[i] = orig
        grad[i] = (up - down) / (2.0 * step)
    return grad
