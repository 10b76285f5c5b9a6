"""Shared test utilities: small nets, synthetic problems, and admissible
perturbations of the exact radial triple with complementarity preserved."""

import numpy as np

from fosls_obstacle import admissible as adm
from fosls_obstacle import geometry as geo
from fosls_obstacle import netcore as nc
from fosls_obstacle.problems import FieldTriple, exact_triple


def make_nets(d, widths=(6,), beta=2.0, seed=0, jitter=0.1, out_psi=None):
    """Small softplus TripleNets with parameters jittered off the zero-bias
    init (generic check points for derivative tests)."""
    rng = np.random.default_rng(seed + 1000)
    out_psi = d if out_psi is None else out_psi

    def build(out_dim, s):
        spec = nc.NetworkSpec(d, tuple((w, nc.softplus(beta)) for w in widths), out_dim)
        theta = nc.init_params(spec, s)
        if jitter:
            theta = theta + jitter * rng.standard_normal(theta.size)
        return spec, theta

    return adm.TripleNets(v=build(1, seed), psi=build(out_psi, seed + 1),
                          eta=build(1, seed + 2))


def zero_nets(d, widths=(4,)):
    """All-zero-parameter nets: the lift collapses to (g, 0, 0)."""
    def build(out_dim):
        spec = nc.NetworkSpec(d, tuple((w, nc.softplus(2.0)) for w in widths), out_dim)
        return spec, np.zeros(nc.param_count(spec))

    return adm.TripleNets(v=build(1), psi=build(d), eta=build(1))


def synthetic_problem(d, R0=1.5):
    """Ball problem with a smooth paraboloid obstacle and constant source;
    no exact solution (for derivative and sampling tests only)."""
    from fosls_obstacle.problems import Problem

    dom = geo.Ball(dim=d, R0=R0)

    def g(X):
        return 0.25 - 0.2 * np.einsum("ij,ij->i", X, X)

    def grad_g(X):
        return -0.4 * X

    def f(X):
        return np.ones(X.shape[0])

    return Problem(name=f"synthetic-d{d}", domain=dom, f=f, g=g, grad_g=grad_g)


def linear_interval_problem(slope=0.75):
    """Interval problem with linear obstacle and constant source: with zero
    nets every pointwise loss term is constant (zero MC variance)."""
    from fosls_obstacle.problems import Problem

    dom = geo.Interval(a=-1.0, b=1.0)

    def g(X):
        return slope * X[:, 0]

    def grad_g(X):
        out = np.zeros_like(X)
        out[:, 0] = slope
        return out

    def f(X):
        return np.full(X.shape[0], 2.0)

    return Problem(name="linear-interval", domain=dom, f=f, g=g, grad_g=grad_g)


class RadialPerturbation:
    """One admissible perturbation direction around the exact radial triple.

    The solution bump lives strictly off the contact set and vanishes at the
    outer boundary; the multiplier bump lives inside the contact set.  Both
    amplitudes are calibrated so the triple stays admissible for all
    eps <= eps_max, and complementarity lam * (u - g) = 0 is preserved
    exactly, so the continuous loss is exactly quadratic in eps.
    """

    def __init__(self, problem, coeffs, eps_max=0.1):
        bench = problem.bench
        self.problem = problem
        self.bench = bench
        self.c_u, self.c_lam, self.c_e1, self.c_x, self.c_sin = coeffs
        self.eps_max = eps_max
        r0, R0, d = bench.r0, bench.R0, bench.d
        # calibrate the solution bump against the obstacle gap
        r = np.linspace(r0 + 1e-4, R0 - 1e-4, 4001)
        shell = np.zeros((r.size, d))
        shell[:, 0] = r
        gap = problem.exact_u(shell) - problem.g(shell)
        bump = self._bump(r)
        self.s_u = 0.9 * float(np.min(gap / bump)) / eps_max
        # calibrate the multiplier bump against the multiplier floor
        rc = np.linspace(0.0, r0, 2001)
        lam_min = float(np.min(bench.multiplier(rc)))
        assert lam_min > 0.0
        self.s_lam = 0.9 * lam_min / (eps_max * r0 ** 2)

    def _bump(self, r):
        r0, R0 = self.bench.r0, self.bench.R0
        w = np.clip(r - r0, 0.0, None)
        return (w * (R0 - r)) ** 2

    def _bump_deriv(self, r):
        r0, R0 = self.bench.r0, self.bench.R0
        w = np.clip(r - r0, 0.0, None)
        return 2.0 * w * (R0 - r) ** 2 - 2.0 * w ** 2 * (R0 - r)

    def _mult_bump(self, r):
        return np.clip(self.bench.r0 - r, 0.0, None) ** 2

    def fields(self):
        """(du, grad_du, dphi, ddiv, dlam) batched callables of the direction."""
        bench = self.bench
        c_u, c_lam, c_e1, c_x, c_sin = (self.c_u, self.c_lam, self.c_e1,
                                        self.c_x, self.c_sin)
        s_u, s_lam = self.s_u, self.s_lam
        d = bench.d

        def radius(X):
            return np.sqrt(np.einsum("ij,ij->i", X, X))

        def du(X):
            return c_u * s_u * self._bump(radius(X))

        def grad_du(X):
            r = radius(X)
            scale = np.zeros_like(r)
            pos = r > 0
            scale[pos] = c_u * s_u * self._bump_deriv(r[pos]) / r[pos]
            return scale[:, None] * X

        def dphi(X):
            out = c_x * X.copy()
            out[:, 0] += c_e1 + c_sin * np.sin(np.pi * X[:, 0])
            return out

        def ddiv(X):
            return c_x * d + c_sin * np.pi * np.cos(np.pi * X[:, 0])

        def dlam(X):
            return c_lam * s_lam * self._mult_bump(radius(X))

        return du, grad_du, dphi, ddiv, dlam

    def triple(self, eps):
        assert 0 <= eps <= self.eps_max
        base = exact_triple(self.problem)
        du, grad_du, dphi, ddiv, dlam = self.fields()
        return FieldTriple(
            u=lambda X: base.u(X) + eps * du(X),
            grad_u=lambda X: base.grad_u(X) + eps * grad_du(X),
            phi=lambda X: base.phi(X) + eps * dphi(X),
            div_phi=lambda X: base.div_phi(X) + eps * ddiv(X),
            lam=lambda X: base.lam(X) + eps * dlam(X),
        )

    def w_norm_sq(self, eps, n=200_000, seed=424242):
        """MC estimate of ||p_eps - p_0||^2 in the product norm."""
        rng = np.random.default_rng(seed)
        X = geo.sample_uniform(self.problem.domain, rng, n)
        du, grad_du, dphi, ddiv, dlam = self.fields()
        vol = geo.volume(self.problem.domain)
        g2 = np.sum(grad_du(X) ** 2) + np.sum(dphi(X) ** 2) \
            + np.sum((ddiv(X) + dlam(X)) ** 2)
        return eps * eps * vol / n * float(g2)


def random_perturbations(problem, n_dirs, seed):
    """n_dirs admissible directions with coefficients bounded away from 0."""
    rng = np.random.default_rng(seed)
    dirs = []
    for _ in range(n_dirs):
        mags = rng.uniform(0.5, 1.0, size=5)
        signs = rng.choice([-1.0, 1.0], size=5)
        coeffs = mags * signs
        # the flux components carry most of the detectable signal
        coeffs[2:] *= 3.0
        dirs.append(RadialPerturbation(problem, coeffs))
    return dirs
