"""Benchmark obstacle problems with exact data where available.

The radial family poses the problem on a ball: the obstacle is a radial
quartic Q(r) = qa r^4 + qb r^2 + qc glued C^1 at the contact radius r0 to
the (shifted) radial harmonic that vanishes at R0, so the exact solution,
flux and multiplier are all closed-form.  The slit benchmark has no exact
solution; only loss values and contact sets are compared there.
"""

from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from . import geometry
from .geometry import Ball, UnitDiskSlit


@dataclass
class Problem:
    """Domain plus data fields; all callables act on (N, dim) arrays."""

    name: str
    domain: object
    f: object
    g: object
    grad_g: object
    exact_u: object = None
    exact_grad_u: object = None
    exact_lambda: object = None


@dataclass
class FieldTriple:
    """Admissible (u, phi, gamma) triple given by closed-form fields.

    gamma is represented as div_phi + lam with lam >= 0, so membership in
    the admissible set is explicit.  Used for exact minimizers and for
    hand-built perturbations in verification.
    """

    u: object
    grad_u: object
    phi: object
    div_phi: object
    lam: object

    def gamma(self, X):
        return self.div_phi(X) + self.lam(X)


def fundamental_solution(d, r):
    """Radial profile of the free-space Laplace kernel and its derivative.

    d=1: -r/2; d=2: -ln(r)/(2 pi); d>=3: r^(2-d) / ((d-2) sigma_{d-1})
    with sigma_{d-1} = 2 pi^(d/2) / Gamma(d/2) the unit-sphere area.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0):
        raise ValueError("fundamental_solution needs r > 0")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if d == 1:
        return -r / 2.0, np.full_like(r, -0.5)
    if d == 2:
        return -np.log(r) / (2.0 * pi), -1.0 / (2.0 * pi * r)
    sigma = 2.0 * pi ** (d / 2.0) / gamma(d / 2.0)
    val = r ** (2.0 - d) / ((d - 2.0) * sigma)
    der = -(r ** (1.0 - d)) / sigma
    return val, der


def solve_radial_coeffs(d, r0, R0):
    """Quartic coefficients (qa, qb, qc) for the radial benchmark.

    Determined by Q(r0) = F(r0) - F(R0), Q'(r0) = F'(r0), Q(R0) = 0 where
    F is the radial fundamental-solution profile.  Residuals are checked
    to 1e-12 relative to the data scale.
    """
    if not 0 < r0 < R0:
        raise ValueError("need 0 < r0 < R0")
    f_r0, df_r0 = fundamental_solution(d, r0)
    f_R0, _ = fundamental_solution(d, R0)
    A = np.array([
        [r0 ** 4, r0 ** 2, 1.0],
        [4.0 * r0 ** 3, 2.0 * r0, 0.0],
        [R0 ** 4, R0 ** 2, 1.0],
    ])
    rhs = np.array([f_r0 - f_R0, df_r0, 0.0])
    coeffs = np.linalg.solve(A, rhs)
    resid = np.max(np.abs(A @ coeffs - rhs))
    scale = max(1.0, np.max(np.abs(rhs)))
    if resid > 1e-12 * scale:
        raise AssertionError(f"coefficient solve residual {resid:.3e}")
    return float(coeffs[0]), float(coeffs[1]), float(coeffs[2])


@dataclass(frozen=True)
class RadialBenchmark:
    """Radial obstacle benchmark on the ball B_R0(0) in R^d, f == 0."""

    d: int
    r0: float
    R0: float
    qa: float
    qb: float
    qc: float

    @classmethod
    def create(cls, d, r0, R0):
        qa, qb, qc = solve_radial_coeffs(d, r0, R0)
        return cls(d=d, r0=r0, R0=R0, qa=qa, qb=qb, qc=qc)

    def q(self, r):
        return self.qa * r ** 4 + self.qb * r ** 2 + self.qc

    def dq(self, r):
        return 4.0 * self.qa * r ** 3 + 2.0 * self.qb * r

    def multiplier(self, r):
        """-Laplacian of Q(|x|): -(Q'' + (d-1) Q'/r), valid for any r >= 0."""
        r = np.asarray(r, dtype=np.float64)
        return -(4.0 * self.qa * (self.d + 2.0) * r ** 2 + 2.0 * self.qb * self.d)


def radial_exact(bench, x):
    """Exact (u, grad_u, lambda) of the radial benchmark at points x.

    u = Q(|x|) on the contact set |x| <= r0 and the shifted harmonic
    outside; C^1 across r0 by construction of the coefficients.
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    single = np.asarray(x).ndim == 1
    r = np.sqrt(np.einsum("ij,ij->i", X, X))
    if np.any(r > bench.R0 * (1.0 + 1e-12)):
        raise ValueError("point outside the ball")
    inside = r <= bench.r0
    u = np.empty_like(r)
    dudr = np.empty_like(r)
    lam = np.zeros_like(r)
    u[inside] = bench.q(r[inside])
    dudr[inside] = bench.dq(r[inside])
    lam[inside] = bench.multiplier(r[inside])
    out = ~inside
    if out.any():
        f_r, df_r = fundamental_solution(bench.d, r[out])
        f_R0, _ = fundamental_solution(bench.d, bench.R0)
        u[out] = f_r - f_R0
        dudr[out] = df_r
    grad = np.zeros_like(X)
    pos = r > 0.0
    grad[pos] = (dudr[pos] / r[pos])[:, None] * X[pos]
    if single:
        return float(u[0]), grad[0], float(lam[0])
    return u, grad, lam


def radial_problem(d, r0, R0):
    bench = RadialBenchmark.create(d, r0, R0)
    dom = Ball(dim=d, R0=R0)

    def g(X):
        r = np.sqrt(np.einsum("ij,ij->i", X, X))
        return bench.q(r)

    def grad_g(X):
        # Q'(r)/r = 4 qa r^2 + 2 qb is smooth through the origin
        r2 = np.einsum("ij,ij->i", X, X)
        return (4.0 * bench.qa * r2 + 2.0 * bench.qb)[:, None] * X

    def f(X):
        return np.zeros(X.shape[0])

    def exact_u(X):
        return radial_exact(bench, X)[0]

    def exact_grad_u(X):
        return radial_exact(bench, X)[1]

    def exact_lambda(X):
        return radial_exact(bench, X)[2]

    prob = Problem(name=f"radial-d{d}", domain=dom, f=f, g=g, grad_g=grad_g,
                   exact_u=exact_u, exact_grad_u=exact_grad_u,
                   exact_lambda=exact_lambda)
    prob.bench = bench
    return prob


def exact_triple(problem):
    """FieldTriple for the exact minimizer (u0, grad u0, -f) of a radial problem."""
    if problem.exact_u is None:
        raise ValueError("problem has no exact solution")

    def div_phi(X):
        # Laplacian of u0: -lambda on the contact set, 0 off it (harmonic)
        return -problem.exact_lambda(X)

    return FieldTriple(u=problem.exact_u, grad_u=problem.exact_grad_u,
                       phi=problem.exact_grad_u, div_phi=div_phi,
                       lam=problem.exact_lambda)


_PEAKS = (
    (10.0, np.array([-0.4, -0.5])),
    (15.0, np.array([-0.4, 0.5])),
)


def slit_obstacle(x):
    """Two-peak obstacle of the slit-domain benchmark: (g, grad_g) at x."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    single = np.asarray(x).ndim == 1
    g = np.zeros(X.shape[0])
    grad = np.zeros_like(X)
    for amp, center in _PEAKS:
        delta = X - center
        expo = np.exp(-30.0 * np.einsum("ij,ij->i", delta, delta))
        term = amp * expo - 1.0
        active = term >= 0.0
        g += np.where(active, term, 0.0)
        grad[active] += (-60.0 * amp * expo[active])[:, None] * delta[active]
    if single:
        return float(g[0]), grad[0]
    return g, grad


def slit_problem():
    dom = UnitDiskSlit()

    def f(X):
        return np.zeros(X.shape[0])

    def g(X):
        return slit_obstacle(X)[0]

    def grad_g(X):
        return slit_obstacle(X)[1]

    return Problem(name="slit-2peaks", domain=dom, f=f, g=g, grad_g=grad_g)


_BENCHMARKS = {
    "radial-d1": lambda: radial_problem(1, 0.5, 1.0),
    "radial-d2": lambda: radial_problem(2, 0.5, 1.0),
    "radial-d10": lambda: radial_problem(10, 0.7, 2.0),
    "radial-d20": lambda: radial_problem(20, 0.9, 2.0),
    "slit-2peaks": slit_problem,
}


def benchmark_names():
    return sorted(_BENCHMARKS)


def get_benchmark(name):
    try:
        factory = _BENCHMARKS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; known: {', '.join(benchmark_names())}")
    return factory()


def l2_error_mc(problem, lift, nets, n, seed):
    """Monte-Carlo L2 distance between the lifted solution and the exact one."""
    from . import admissible

    if problem.exact_u is None:
        raise ValueError("problem has no exact solution")
    rng = np.random.default_rng(seed)
    X = geometry.sample_uniform(problem.domain, rng, n)
    ev = admissible.eval_triple(problem, lift, nets, X)
    diff = ev.u - problem.exact_u(X)
    vol = geometry.volume(problem.domain)
    return float(np.sqrt(vol / n * np.sum(diff * diff)))


def triple_error_mc(problem, lift, nets, n, seed, parts=False):
    """Monte-Carlo product-norm error of the full admissible triple.

    sqrt(||grad(u - u0)||^2 + ||phi - grad u0||^2 + ||gamma + f||^2); with
    parts=True also returns the three squared components.
    """
    from . import admissible

    if problem.exact_u is None:
        raise ValueError("problem has no exact solution")
    rng = np.random.default_rng(seed)
    X = geometry.sample_uniform(problem.domain, rng, n)
    ev = admissible.eval_triple(problem, lift, nets, X)
    grad_u0 = problem.exact_grad_u(X)
    vol = geometry.volume(problem.domain)
    e_grad = vol / n * np.sum((ev.grad_u - grad_u0) ** 2)
    e_phi = vol / n * np.sum((ev.phi - grad_u0) ** 2)
    e_gamma = vol / n * np.sum((ev.gamma + problem.f(X)) ** 2)
    total = float(np.sqrt(e_grad + e_phi + e_gamma))
    if parts:
        return total, {"grad_u": float(e_grad), "phi": float(e_phi),
                       "gamma": float(e_gamma)}
    return total
