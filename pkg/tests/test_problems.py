import math

import numpy as np
import pytest
from scipy.integrate import quad

from fosls_obstacle import admissible as adm
from fosls_obstacle import problems as pb

from helpers import zero_nets


def exact_lift_nets(problem):
    """Nets are not needed for FieldTriple paths; this returns the triple."""
    return pb.exact_triple(problem)


class TestFundamentalSolution:
    def test_d2_at_one(self):
        val, _ = pb.fundamental_solution(2, 1.0)
        assert val == 0.0

    def test_d3_at_one(self):
        val, _ = pb.fundamental_solution(3, 1.0)
        assert val == pytest.approx(1.0 / (4.0 * math.pi), rel=1e-14)

    def test_d1(self):
        val, der = pb.fundamental_solution(1, 2.0)
        assert val == -1.0
        assert der == -0.5

    def test_derivative_consistent(self):
        for d in (1, 2, 3, 5, 10):
            r = 0.8
            val_p, _ = pb.fundamental_solution(d, r + 1e-7)
            val_m, _ = pb.fundamental_solution(d, r - 1e-7)
            _, der = pb.fundamental_solution(d, r)
            assert der == pytest.approx((val_p - val_m) / 2e-7, rel=1e-6)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            pb.fundamental_solution(3, 0.0)


class TestRadialCoeffs:
    def test_d1_exact_fractions(self):
        qa, qb, qc = pb.solve_radial_coeffs(1, 0.5, 1.0)
        assert qa == pytest.approx(2.0 / 9.0, rel=1e-13)
        assert qb == pytest.approx(-11.0 / 18.0, rel=1e-13)
        assert qc == pytest.approx(7.0 / 18.0, rel=1e-13)

    @pytest.mark.parametrize("d,r0,R0", [(1, 0.5, 1.0), (2, 0.5, 1.0),
                                         (10, 0.7, 2.0), (20, 0.9, 2.0)])
    def test_conditions_satisfied(self, d, r0, R0):
        qa, qb, qc = pb.solve_radial_coeffs(d, r0, R0)
        q = lambda r: qa * r ** 4 + qb * r ** 2 + qc
        dq = lambda r: 4 * qa * r ** 3 + 2 * qb * r
        f_r0, df_r0 = pb.fundamental_solution(d, r0)
        f_R0, _ = pb.fundamental_solution(d, R0)
        assert abs(q(r0) - (f_r0 - f_R0)) <= 1e-12
        assert abs(dq(r0) - df_r0) <= 1e-12
        assert abs(q(R0)) <= 1e-12

    def test_invalid_radii(self):
        with pytest.raises(ValueError):
            pb.solve_radial_coeffs(2, 1.0, 0.5)


class TestRadialExact:
    def test_zero_at_outer_boundary(self):
        bench = pb.RadialBenchmark.create(2, 0.5, 1.0)
        u, _, _ = pb.radial_exact(bench, [1.0, 0.0])
        assert u == pytest.approx(0.0, abs=1e-14)

    def test_c1_matching_at_contact_radius(self):
        for (d, r0, R0) in [(1, 0.5, 1.0), (2, 0.5, 1.0), (10, 0.7, 2.0),
                            (20, 0.9, 2.0)]:
            bench = pb.RadialBenchmark.create(d, r0, R0)
            x = np.zeros(d)
            x[0] = r0
            u_in, g_in, _ = pb.radial_exact(bench, x * (1 - 1e-9))
            u_out, g_out, _ = pb.radial_exact(bench, x * (1 + 1e-9))
            assert abs(u_in - u_out) <= 1e-8
            assert np.linalg.norm(g_in - g_out) <= 1e-6

    def test_d1_value_off_contact(self):
        bench = pb.RadialBenchmark.create(1, 0.5, 1.0)
        u, _, lam = pb.radial_exact(bench, [0.75])
        assert u == pytest.approx(0.125, rel=1e-13)
        assert lam == 0.0

    def test_multiplier_nonnegative_on_contact(self):
        for (d, r0, R0) in [(1, 0.5, 1.0), (2, 0.5, 1.0), (10, 0.7, 2.0),
                            (20, 0.9, 2.0)]:
            bench = pb.RadialBenchmark.create(d, r0, R0)
            r = np.linspace(0.0, r0, 10_000)
            assert np.all(bench.multiplier(r) >= 0.0)

    @pytest.mark.parametrize("name", ["radial-d1", "radial-d2", "radial-d10",
                                      "radial-d20"])
    def test_complementarity_identity(self, name):
        # min(-lap u - f, u - g) = 0: inside the contact set u = g and the
        # residual equals the multiplier >= 0; outside, u is harmonic
        prob = pb.get_benchmark(name)
        bench = prob.bench
        d = bench.d
        rng = np.random.default_rng(1)
        from fosls_obstacle import geometry as geo
        X = geo.sample_uniform(prob.domain, rng, 4000)
        u = prob.exact_u(X)
        g = prob.g(X)
        lam = prob.exact_lambda(X)
        r = np.sqrt(np.einsum("ij,ij->i", X, X))
        inside = r <= bench.r0
        assert np.allclose(u[inside], g[inside], atol=1e-10)
        assert np.all(lam[inside] >= 0.0)
        # -lap u = lam = 0 off the contact set; u > g strictly
        assert np.all(lam[~inside] == 0.0)
        assert np.all(u[~inside] - g[~inside] > 0.0)
        assert np.max(np.minimum(lam, u - g)) <= 1e-10

    def test_outside_ball_raises(self):
        bench = pb.RadialBenchmark.create(2, 0.5, 1.0)
        with pytest.raises(ValueError):
            pb.radial_exact(bench, [1.5, 0.0])


class TestSlitObstacle:
    def test_peak_value(self):
        g, _ = pb.slit_obstacle([-0.4, -0.5])
        assert g == pytest.approx(9.0, abs=1e-10)

    def test_flat_region(self):
        g, grad = pb.slit_obstacle([0.9, 0.0])
        assert g == 0.0
        assert np.all(grad == 0.0)

    def test_gradient_fd(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.uniform(-0.9, 0.9, 2)
            g0, grad = pb.slit_obstacle(x)
            if g0 <= 1e-6:  # stay off the max switching curve
                continue
            h = 1e-7
            for k in range(2):
                e = np.zeros(2)
                e[k] = h
                fd = (pb.slit_obstacle(x + e)[0] - pb.slit_obstacle(x - e)[0]) / (2 * h)
                assert grad[k] == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestErrorMetrics:
    def test_l2_error_zero_for_exact_triple(self):
        prob = pb.get_benchmark("radial-d1")
        lift = adm.LiftConfig()
        tri = pb.exact_triple(prob)
        # FieldTriple path: evaluate u directly
        from fosls_obstacle import geometry as geo
        rng = np.random.default_rng(0)
        X = geo.sample_uniform(prob.domain, rng, 5000)
        ev = adm.eval_triple(prob, lift, tri, X)
        assert np.allclose(ev.u, prob.exact_u(X), atol=0)

    def test_zero_nets_match_quadrature(self):
        # with zero nets u = g, so the L2 error is ||g - u0||, computable by
        # 1D quadrature of (Q(|x|) - u0(x))^2 over (-1, 1)
        prob = pb.get_benchmark("radial-d1")
        bench = prob.bench
        lift = adm.LiftConfig()
        nets = zero_nets(1)

        def gap_sq(r):
            u, _, _ = pb.radial_exact(bench, np.array([r]))
            return (bench.q(abs(r)) - u) ** 2

        ref, _ = quad(gap_sq, -1.0, 1.0, limit=200)
        ref = math.sqrt(ref)
        vals = [pb.l2_error_mc(prob, lift, nets, 40_000, seed) for seed in range(8)]
        se = np.std(vals) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - ref) <= max(3 * se, 2e-4)

    def test_l2_error_requires_exact(self):
        prob = pb.slit_problem()
        with pytest.raises(ValueError):
            pb.l2_error_mc(prob, adm.LiftConfig(), zero_nets(2), 1000, 0)

    def test_mc_error_halves_with_4x_points(self):
        prob = pb.get_benchmark("radial-d1")
        lift = adm.LiftConfig()
        nets = zero_nets(1)
        reps = 40
        stds = []
        for n in (250, 1000, 4000):
            vals = [pb.l2_error_mc(prob, lift, nets, n, 1000 + k)
                    for k in range(reps)]
            stds.append(np.std(vals))
        slope = np.polyfit(np.log([250, 1000, 4000]), np.log(stds), 1)[0]
        assert -0.75 <= slope <= -0.25

    def test_triple_error_zero_and_parts(self):
        prob = pb.get_benchmark("radial-d2")
        lift = adm.LiftConfig()
        tri = pb.exact_triple(prob)
        from fosls_obstacle import geometry as geo
        rng = np.random.default_rng(4)
        X = geo.sample_uniform(prob.domain, rng, 3000)
        ev = adm.eval_triple(prob, lift, tri, X)
        grad_u0 = prob.exact_grad_u(X)
        assert np.allclose(ev.grad_u, grad_u0, atol=0)
        assert np.allclose(ev.phi, grad_u0, atol=0)
        assert np.allclose(ev.gamma, -prob.f(X), atol=1e-15)

    def test_triple_error_zero_nets_quadrature(self):
        # zero nets: sqrt(||grad(g-u0)||^2 + ||grad u0||^2 + 0)
        prob = pb.get_benchmark("radial-d1")
        bench = prob.bench
        lift = adm.LiftConfig()
        nets = zero_nets(1)

        def term(r):
            _, du, _ = pb.radial_exact(bench, np.array([r]))
            dg = bench.dq(abs(r)) * np.sign(r)
            return (dg - du[0]) ** 2 + du[0] ** 2

        ref = math.sqrt(quad(term, -1.0, 1.0, limit=200)[0])
        vals = [pb.triple_error_mc(prob, lift, nets, 40_000, seed)
                for seed in range(8)]
        se = np.std(vals) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - ref) <= max(3 * se, 2e-3)
        total, parts = pb.triple_error_mc(prob, lift, nets, 10_000, 0, parts=True)
        assert total == pytest.approx(
            math.sqrt(parts["grad_u"] + parts["phi"] + parts["gamma"]))


class TestRegistry:
    def test_names(self):
        assert set(pb.benchmark_names()) == {
            "radial-d1", "radial-d2", "radial-d10", "radial-d20", "slit-2peaks"}

    def test_unknown(self):
        with pytest.raises(KeyError):
            pb.get_benchmark("radial-d7")
