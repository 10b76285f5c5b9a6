"""Pure-numpy reference kernels (batched over collocation points).

Parameter layout: for each affine map l (l = 0..L-1, dims[l] -> dims[l+1]),
the weight matrix W_l in row-major order, then the bias b_l.  `acts[l]` is
the activation code applied after affine map l; the final map carries
ACT_IDENTITY.  `actp[l]` holds the activation parameter (softplus beta or
heaviside STE width c).

The input-jacobian recursion: with z_l = W_l a_{l-1} + b_l and
a_l = act(z_l), the jacobian w.r.t. the network input x propagates as
Jz_l = W_l J_{l-1}, J_l = diag(act'(z_l)) Jz_l.  Heaviside layers have
act' = 0 on the forward/jacobian path; the straight-through window
(1/c) 1_{[0,c]}(z) replaces it only on the value chain of the pullback.

Jacobian stacks are carried as (N, d_in, width) so every contraction is a
single reshaped GEMM.  forward_stash_many records activations and
derivatives so the training pullback never re-evaluates them.
"""

import numpy as np

ACT_IDENTITY = 0
ACT_SOFTPLUS = 1
ACT_RELU = 2
ACT_HEAVISIDE = 3

# Points per internal batch chunk; bounds the (chunk, width, dim) jacobian
# workspace while keeping summation order fixed for reproducibility.
CHUNK = 4096


def _act_value_d1(code, p, Z):
    """Activation value and forward-path (spatial) derivative.

    The softplus pair costs a single exp: with q = exp(-|beta z|) the value
    is max(z,0) + log1p(q)/beta and the derivative (the logistic) is
    1/(1+q) on the positive branch, q/(1+q) on the negative one.
    """
    if code == ACT_IDENTITY:
        return Z, np.ones_like(Z)
    if code == ACT_SOFTPLUS:
        t = p * Z
        q = np.exp(-np.abs(t))
        val = np.maximum(Z, 0.0) + np.log1p(q) / p
        d1 = np.where(t >= 0.0, 1.0, q) / (1.0 + q)
        return val, d1
    if code == ACT_RELU:
        pos = Z > 0.0
        return np.where(pos, Z, 0.0), pos.astype(np.float64)
    # heaviside: H(0) = 1; contributes zero to the input jacobian
    return (Z >= 0.0).astype(np.float64), np.zeros_like(Z)


def _act_train_d1(code, p, Z, d1_fwd=None):
    """Value-chain derivative used in the pullback (STE for heaviside)."""
    if code == ACT_HEAVISIDE:
        window = (Z >= 0.0) & (Z <= p)
        return window.astype(np.float64) / p
    if d1_fwd is not None:
        return d1_fwd
    return _act_value_d1(code, p, Z)[1]


def _act_d2(code, p, Z, d1_fwd=None):
    """Second derivative of the activation (jacobian-chain pullback term)."""
    if code == ACT_SOFTPLUS:
        s = _act_value_d1(code, p, Z)[1] if d1_fwd is None else d1_fwd
        return p * s * (1.0 - s)
    return np.zeros_like(Z)


def _unpack(theta, dims):
    """Views (W_l, b_l) into the flat parameter vector."""
    out = []
    off = 0
    for l in range(dims.size - 1):
        m, n = int(dims[l]), int(dims[l + 1])
        W = theta[off:off + n * m].reshape(n, m)
        off += n * m
        b = theta[off:off + n]
        off += n
        out.append((W, b))
    return out


def _bmm(T, M):
    """(N, d, m) stack times (m, n) as one reshaped GEMM -> (N, d, n)."""
    N, d, m = T.shape
    return (T.reshape(N * d, m) @ M).reshape(N, d, M.shape[1])


def forward_stash_many(theta, dims, acts, actp, X, want_jac):
    """Forward pass recording the stash consumed by pullback_stash_many.

    Returns (Y, J, stash); J has zero extent when want_jac is false.  The
    stash layout is backend-private.
    """
    N = X.shape[0]
    d_in = int(dims[0])
    layers = _unpack(theta, dims)
    A_list = [X]
    Z_list = []
    D1_list = []
    JZ_list = []
    JA = None
    if want_jac:
        JA = np.broadcast_to(np.eye(d_in), (N, d_in, d_in)).copy()
    for l, (W, b) in enumerate(layers):
        Z = A_list[-1] @ W.T + b
        val, d1 = _act_value_d1(int(acts[l]), actp[l], Z)
        Z_list.append(Z)
        D1_list.append(d1)
        A_list.append(val)
        if want_jac:
            JZ = _bmm(JA, W.T)
            JZ_list.append(JZ)
            JA = d1[:, None, :] * JZ
    Y = A_list[-1]
    J = JA.transpose(0, 2, 1).copy() if want_jac else np.empty((0, 0, 0))
    return Y, J, (A_list, Z_list, D1_list, JZ_list)


def forward_many(theta, dims, acts, actp, X, want_jac):
    """Batched forward pass (chunked internally to bound workspace memory).

    Returns (Y, J) with Y of shape (N, out) and J of shape (N, out, in).
    """
    N = X.shape[0]
    d_in, d_out = int(dims[0]), int(dims[-1])
    Y = np.empty((N, d_out))
    J = np.empty((N, d_out, d_in)) if want_jac else np.empty((0, 0, 0))
    for lo in range(0, N, CHUNK):
        hi = min(lo + CHUNK, N)
        Yc, Jc, _ = forward_stash_many(theta, dims, acts, actp, X[lo:hi], want_jac)
        Y[lo:hi] = Yc
        if want_jac:
            J[lo:hi] = Jc
    return Y, J


def pullback_stash_many(theta, dims, acts, actp, stash, cot_y, cot_jac, use_jac):
    """Parameter gradient of sum_p <cot_y[p], y_p> + <cot_jac[p], jac_p>
    from a recorded forward stash."""
    A_list, Z_list, D1_list, JZ_list = stash
    N = A_list[0].shape[0]
    d_in = int(dims[0])
    L = dims.size - 1
    layers = _unpack(theta, dims)
    grad = np.zeros(theta.size)
    gviews = _unpack(grad, dims)
    abar = cot_y
    jbar = cot_jac.transpose(0, 2, 1) if use_jac else None
    for l in range(L - 1, -1, -1):
        W, _ = layers[l]
        code, p = int(acts[l]), actp[l]
        d1f = D1_list[l]
        zbar = abar * _act_train_d1(code, p, Z_list[l], d1f)
        gW, gb = gviews[l]
        if use_jac:
            jzbar = d1f[:, None, :] * jbar
            d2 = _act_d2(code, p, Z_list[l], d1f)
            if d2.any():
                zbar = zbar + d2 * np.einsum("pdn,pdn->pn", JZ_list[l], jbar)
            if l > 0:
                ja_prev = D1_list[l - 1][:, None, :] * JZ_list[l - 1]
                gW += zbar.T @ A_list[l] + (
                    jzbar.reshape(N * d_in, -1).T
                    @ ja_prev.reshape(N * d_in, -1))
            else:
                # input jacobian is the identity stack
                gW += zbar.T @ A_list[0] + jzbar.sum(axis=0).T
            jbar = _bmm(jzbar, W)
        else:
            gW += zbar.T @ A_list[l]
        gb += zbar.sum(axis=0)
        abar = zbar @ W
    return grad


def pullback_many(theta, dims, acts, actp, X, cot_y, cot_jac, use_jac):
    """Gradient w.r.t. theta; recomputes the forward pass chunkwise."""
    N = X.shape[0]
    grad = np.zeros(theta.size)
    for lo in range(0, N, CHUNK):
        hi = min(lo + CHUNK, N)
        _, _, stash = forward_stash_many(theta, dims, acts, actp, X[lo:hi], use_jac)
        grad += pullback_stash_many(theta, dims, acts, actp, stash,
                                    cot_y[lo:hi],
                                    cot_jac[lo:hi] if use_jac else cot_jac,
                                    use_jac)
    return grad


def psor_sweeps(u, g, rhs, omega, tol, max_iter, energy_every, h):
    """Projected SOR sweeps for the 1D obstacle system.

    Solves (-u_{i-1} + 2 u_i - u_{i+1})/h^2 >= f_i, u_i >= g_i with zero
    Dirichlet ends, lexicographic Gauss-Seidel order.  `rhs` is h^2 * f.
    Modifies u in place; returns (sweeps_done, last_change, energies, n_energy)
    where energies[k] is the discrete Dirichlet energy recorded before sweep
    k * energy_every.
    """
    n = u.size
    n_rec = max_iter // energy_every + 1
    energies = np.zeros(n_rec)
    n_energy = 0
    last = np.inf
    sweeps = 0
    while sweeps < max_iter:
        if sweeps % energy_every == 0 and n_energy < n_rec:
            energies[n_energy] = _energy_1d(u, rhs, h)
            n_energy += 1
        change = 0.0
        for i in range(n):
            left = u[i - 1] if i > 0 else 0.0
            right = u[i + 1] if i < n - 1 else 0.0
            target = 0.5 * (left + right + rhs[i])
            new = u[i] + omega * (target - u[i])
            if new < g[i]:
                new = g[i]
            delta = abs(new - u[i])
            if delta > change:
                change = delta
            u[i] = new
        sweeps += 1
        last = change
        if change <= tol:
            break
    return sweeps, last, energies, n_energy


def _energy_1d(u, rhs, h):
    # 1/(2h) sum (u_{i+1}-u_i)^2 - sum rhs_i u_i / h, zero boundary values
    n = u.size
    e = u[0] * u[0] + u[n - 1] * u[n - 1]
    for i in range(n - 1):
        diff = u[i + 1] - u[i]
        e += diff * diff
    s = 0.0
    for i in range(n):
        s += rhs[i] * u[i]
    return 0.5 * e / h - s / h
