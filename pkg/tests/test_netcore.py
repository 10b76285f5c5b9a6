import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fosls_obstacle import netcore as nc
from fosls_obstacle.oracle import fd_gradient


def small_spec(d=2, widths=(5, 4), beta=2.0, out=1):
    return nc.NetworkSpec(d, tuple((w, nc.softplus(beta)) for w in widths), out)


class TestInitParams:
    def test_deterministic(self):
        spec = small_spec()
        a = nc.init_params(spec, 42)
        b = nc.init_params(spec, 42)
        assert np.array_equal(a, b)

    def test_param_count_example(self):
        # one hidden layer 2 -> 3, scalar output: 3*2+3 + 3*1+1 = 13
        spec = nc.NetworkSpec(2, ((3, nc.relu()),), 1)
        assert nc.param_count(spec) == 13
        assert nc.init_params(spec, 0).size == 13

    def test_biases_zero(self):
        spec = small_spec(d=3, widths=(7, 6), out=2)
        theta = nc.init_params(spec, 123)
        for W, b in nc.unpack_params(spec, theta):
            assert np.all(b == 0.0)
            bound = np.sqrt(6.0 / (W.shape[1] + W.shape[0]))
            assert np.all(np.abs(W) <= bound)


class TestForwardJac:
    def test_affine_identity(self):
        spec = nc.NetworkSpec(3, (), 2)
        W = np.arange(6.0).reshape(2, 3)
        b = np.array([0.5, -0.5])
        theta = nc.pack_params(spec, [(W, b)])
        pe = nc.forward_jac(spec, theta, [1.0, 2.0, 3.0])
        assert np.allclose(pe.y, W @ [1.0, 2.0, 3.0] + b)
        assert np.allclose(pe.jac, W)

    def test_softplus_derivative_at_zero(self):
        # logistic(0) = 1/2 regardless of beta
        spec = nc.NetworkSpec(1, ((1, nc.softplus(100.0)),), 1)
        theta = nc.pack_params(spec, [(np.array([[1.0]]), np.zeros(1)),
                                      (np.array([[1.0]]), np.zeros(1))])
        pe = nc.forward_jac(spec, theta, [0.0])
        assert pe.jac[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_relu_slopes(self):
        spec = nc.NetworkSpec(1, ((1, nc.relu()),), 1)
        theta = nc.pack_params(spec, [(np.array([[1.0]]), np.zeros(1)),
                                      (np.array([[1.0]]), np.zeros(1))])
        assert nc.forward_jac(spec, theta, [-1.0]).jac[0, 0] == 0.0
        assert nc.forward_jac(spec, theta, [2.0]).jac[0, 0] == 1.0

    def test_y_independent_of_want_jac(self):
        spec = small_spec()
        theta = nc.init_params(spec, 7) + 0.1
        x = np.array([0.3, -0.7])
        y1 = nc.forward_jac(spec, theta, x, want_jac=True).y
        y2 = nc.forward_jac(spec, theta, x, want_jac=False).y
        assert np.array_equal(y1, y2)

    def test_dimension_mismatch(self):
        spec = small_spec(d=2)
        theta = nc.init_params(spec, 0)
        with pytest.raises(ValueError):
            nc.forward_jac(spec, theta, [1.0, 2.0, 3.0])

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), d=st.integers(1, 4),
           beta=st.sampled_from([1.0, 5.0, 100.0]))
    def test_jac_matches_fd(self, seed, d, beta):
        rng = np.random.default_rng(seed)
        spec = small_spec(d=d, widths=(6, 5), beta=beta, out=2)
        theta = nc.init_params(spec, seed) + 0.1 * rng.standard_normal(
            nc.param_count(spec))
        x = rng.standard_normal(d)
        jac = nc.forward_jac(spec, theta, x).jac
        h = 1e-6 * (1.0 + np.linalg.norm(x))
        fd = np.empty_like(jac)
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            fd[:, k] = (nc.forward_jac(spec, theta, x + e, want_jac=False).y
                        - nc.forward_jac(spec, theta, x - e, want_jac=False).y) / (2 * h)
        assert np.linalg.norm(jac - fd) <= 1e-6 * max(np.linalg.norm(jac), 1.0)


class TestPullback:
    def test_affine_closed_form(self):
        spec = nc.NetworkSpec(3, (), 2)
        theta = nc.init_params(spec, 5)
        x = np.array([0.5, -1.0, 2.0])
        cot_y = np.array([2.0, -3.0])
        grad = nc.pullback(spec, theta, x, cot_y)
        [(gW, gb)] = nc.unpack_params(spec, grad)
        assert np.allclose(gW, np.outer(cot_y, x))
        assert np.allclose(gb, cot_y)

    def test_matches_fd(self):
        rng = np.random.default_rng(11)
        spec = small_spec(d=3, widths=(6, 5), beta=3.0, out=2)
        theta = nc.init_params(spec, 3) + 0.1 * rng.standard_normal(
            nc.param_count(spec))
        X = rng.standard_normal((5, 3))
        cot_y = rng.standard_normal((5, 2))
        cot_jac = rng.standard_normal((5, 2, 3))
        grad = nc.pullback_many(spec, theta, X, cot_y, cot_jac)

        def obj(th):
            Y, J = nc.forward_jac_many(spec, th, X)
            return float(np.sum(cot_y * Y) + np.sum(cot_jac * J))

        fd = fd_gradient(obj, theta, step=1e-5)
        assert np.linalg.norm(grad - fd) <= 1e-5 * np.linalg.norm(fd)

    def test_stash_path_matches_direct(self):
        rng = np.random.default_rng(2)
        spec = small_spec(d=2, widths=(5,), out=2)
        theta = nc.init_params(spec, 1) + 0.1 * rng.standard_normal(
            nc.param_count(spec))
        X = rng.standard_normal((9, 2))
        cot_y = rng.standard_normal((9, 2))
        cot_jac = rng.standard_normal((9, 2, 2))
        _, _, stash = nc.forward_with_stash(spec, theta, X)
        g1 = nc.pullback_from_stash(spec, theta, stash, cot_y, cot_jac)
        g2 = nc.pullback_many(spec, theta, X, cot_y, cot_jac)
        assert np.allclose(g1, g2, rtol=1e-13, atol=1e-15)

    def test_ste_window_factor(self):
        # single heaviside unit, pre-activation z = 0.3 inside [0, 0.5]:
        # training derivative is 1/c = 2
        spec = nc.NetworkSpec(1, ((1, nc.heaviside(0.5)),), 1)
        theta = nc.pack_params(spec, [(np.array([[1.0]]), np.zeros(1)),
                                      (np.array([[1.0]]), np.zeros(1))])
        grad = nc.pullback(spec, theta, [0.3], np.array([1.0]))
        gmats = nc.unpack_params(spec, grad)
        # d/dW0 of H(W0*x) under STE: 1 (out weight) * (1/c) * x = 2 * 0.3
        assert gmats[0][0][0, 0] == pytest.approx(2.0 * 0.3)
        assert gmats[0][1][0] == pytest.approx(2.0)

    def test_heaviside_values_binary_ste_grad_only(self):
        rng = np.random.default_rng(8)
        spec = nc.NetworkSpec(2, ((6, nc.heaviside(0.5)),), 1)
        theta = nc.init_params(spec, 4) + 0.3 * rng.standard_normal(
            nc.param_count(spec))
        X = rng.standard_normal((40, 2))
        # values of the step layer are exactly 0/1: output is a sum of the
        # final-layer weights over active units plus the bias
        Wout, bout = nc.unpack_params(spec, theta)[-1]
        Y, J = nc.forward_jac_many(spec, theta, X)
        Win, bin_ = nc.unpack_params(spec, theta)[0]
        mask = (X @ Win.T + bin_ >= 0.0).astype(float)
        assert np.allclose(Y[:, 0], mask @ Wout[0] + bout[0], rtol=0, atol=0)
        assert np.all(J == 0.0)


class TestActEval:
    def test_softplus_value_at_zero(self):
        val, _ = nc.act_eval(nc.softplus(100.0), 0.0)
        assert val == pytest.approx(np.log(2.0) / 100.0, rel=1e-12)

    def test_heaviside_value_and_ste(self):
        val, der = nc.act_eval(nc.heaviside(0.5), 0.3)
        assert val == 1.0
        assert der == pytest.approx(2.0)

    def test_relu_at_zero(self):
        val, der = nc.act_eval(nc.relu(), 0.0)
        assert val == 0.0
        assert der == 0.0

    def test_softplus_overflow_guard(self):
        # beta*z = 5000: naive exp would overflow; value must equal z here
        val, der = nc.act_eval(nc.softplus(100.0), 50.0)
        assert val == pytest.approx(50.0)
        assert der == pytest.approx(1.0)
        val_neg, der_neg = nc.act_eval(nc.softplus(100.0), -50.0)
        assert val_neg == 0.0
        assert der_neg == 0.0


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        spec = nc.NetworkSpec(3, ((5, nc.softplus(100.0)), (4, nc.relu()),
                                  (3, nc.heaviside(0.25))), 2)
        theta = rng.standard_normal(nc.param_count(spec))
        path = os.path.join(tmp_path, "net.json")
        nc.save_checkpoint(path, spec, theta)
        spec2, theta2 = nc.load_checkpoint(path)
        assert spec2 == spec
        assert np.array_equal(theta, theta2)

    def test_hnn_flag_roundtrip(self, tmp_path):
        spec = nc.HnnSpec(2, ((3, nc.heaviside(0.5)), (4, nc.relu())), 1)
        theta = nc.init_params(spec, 0)
        path = os.path.join(tmp_path, "hnn.json")
        nc.save_checkpoint(path, spec, theta)
        spec2, theta2 = nc.load_checkpoint(path)
        assert isinstance(spec2, nc.HnnSpec)
        assert np.array_equal(theta, theta2)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 1_000_000))
    def test_roundtrip_random_params(self, seed):
        import tempfile

        rng = np.random.default_rng(seed)
        spec = nc.NetworkSpec(2, ((3, nc.softplus(1.0)),), 1)
        # exercise a wide range of float magnitudes
        theta = rng.standard_normal(nc.param_count(spec)) * 10.0 ** rng.integers(
            -20, 20, nc.param_count(spec))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "net.json")
            nc.save_checkpoint(path, spec, theta)
            _, theta2 = nc.load_checkpoint(path)
        assert np.array_equal(theta, theta2)


class TestBackendEquivalence:
    def test_both_backends_agree(self):
        from fosls_obstacle import _kernels_numba as knb
        from fosls_obstacle import _kernels_numpy as knp

        rng = np.random.default_rng(1)
        spec = nc.NetworkSpec(3, ((6, nc.softplus(5.0)), (5, nc.relu())), 2)
        theta = nc.init_params(spec, 9) + 0.1 * rng.standard_normal(
            nc.param_count(spec))
        X = rng.standard_normal((33, 3))
        dims, acts, actp = nc._layout(spec)
        Y1, J1 = knp.forward_many(theta, dims, acts, actp, X, True)
        Y2, J2 = knb.forward_many(theta, dims, acts, actp, X, True)
        assert np.allclose(Y1, Y2, rtol=1e-12, atol=1e-14)
        assert np.allclose(J1, J2, rtol=1e-12, atol=1e-14)
        cot_y = rng.standard_normal((33, 2))
        cot_jac = rng.standard_normal((33, 2, 3))
        g1 = knp.pullback_many(theta, dims, acts, actp, X, cot_y, cot_jac, True)
        g2 = knb.pullback_many(theta, dims, acts, actp, X, cot_y, cot_jac, True)
        assert np.allclose(g1, g2, rtol=1e-10, atol=1e-12)
