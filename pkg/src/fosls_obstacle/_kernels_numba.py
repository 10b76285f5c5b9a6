"""Numba @njit kernels: per-point loops parallelized over fixed-size chunks.

Semantics mirror _kernels_numpy.py exactly (same parameter layout, same
activation conventions).  Gradient accumulation is chunked: each prange
chunk owns a private partial-gradient row and the rows are reduced in a
fixed serial order afterwards, so results are reproducible regardless of
thread scheduling.  Chunk boundaries depend only on N, never on the
runtime thread count.

The training path runs forward_stash_many once per batch and feeds the
recorded activations/derivatives to pullback_stash_many, so activations
(and their transcendentals) are evaluated exactly once per iteration.
Stash layout (backend-private): A (N, L+1, maxw) activations with the
input at slot 0; DS (N, L, maxw) holding the forward derivative for smooth
layers and the straight-through window for heaviside layers (whose forward
derivative is identically zero); JZ (N, L, d_in, maxw) pre-activation
input jacobians.  Inner loops run over the contiguous width axis.
"""

import warnings

import numpy as np
from numba import njit, prange

from ._kernels_numpy import ACT_IDENTITY, ACT_SOFTPLUS, ACT_RELU, ACT_HEAVISIDE

# numba picks a non-TBB threading layer when TBB is too old; harmless
warnings.filterwarnings("ignore", message="The TBB threading layer requires TBB")

_CHUNK = 128
_FM = {"reassoc", "contract", "arcp"}  # no nnan/ninf: keep NaN propagation


@njit(cache=True)
def _act_vd1(code, p, z):
    """Value and forward-path derivative at a scalar pre-activation.

    Softplus costs one exp: q = exp(-|beta z|) gives both branches.
    """
    if code == ACT_IDENTITY:
        return z, 1.0
    if code == ACT_SOFTPLUS:
        t = p * z
        if t >= 0.0:
            q = np.exp(-t)
            return z + np.log1p(q) / p, 1.0 / (1.0 + q)
        q = np.exp(t)
        return np.log1p(q) / p, q / (1.0 + q)
    if code == ACT_RELU:
        if z > 0.0:
            return z, 1.0
        return 0.0, 0.0
    # heaviside: H(0) = 1, zero forward derivative
    if z >= 0.0:
        return 1.0, 0.0
    return 0.0, 0.0


@njit(cache=True)
def _act_stash(code, p, z):
    """(value, ds) where ds is the derivative the backward pass needs:
    the forward derivative for smooth layers, the STE window for steps."""
    if code == ACT_HEAVISIDE:
        v = 1.0 if z >= 0.0 else 0.0
        w = 1.0 / p if 0.0 <= z <= p else 0.0
        return v, w
    return _act_vd1(code, p, z)


@njit(cache=True)
def _offsets(dims):
    L = dims.size - 1
    offW = np.empty(L, np.int64)
    offb = np.empty(L, np.int64)
    off = 0
    for l in range(L):
        offW[l] = off
        off += dims[l + 1] * dims[l]
        offb[l] = off
        off += dims[l + 1]
    return offW, offb, off


@njit(cache=True)
def _maxdim(dims):
    m = 0
    for l in range(dims.size):
        if dims[l] > m:
            m = dims[l]
    return m


@njit(cache=True, fastmath=_FM)
def _forward_point(theta, dims, acts, actp, offW, offb, X, pnt, want_jac,
                   A, DS, JZ, JA):
    """Forward pass for point `pnt`, writing its stash slices.

    JA is a transient (d_in, maxw) workspace holding the running input
    jacobian of the current layer activations.
    """
    L = dims.size - 1
    d_in = dims[0]
    for j in range(d_in):
        A[pnt, 0, j] = X[pnt, j]
    if want_jac:
        for k in range(d_in):
            for j in range(d_in):
                JA[k, j] = 1.0 if j == k else 0.0
    for l in range(L):
        n_in = dims[l]
        n_out = dims[l + 1]
        code = acts[l]
        p = actp[l]
        step = code == ACT_HEAVISIDE
        for i in range(n_out):
            base = offW[l] + i * n_in
            s = theta[offb[l] + i]
            for j in range(n_in):
                s += theta[base + j] * A[pnt, l, j]
            if want_jac:
                for k in range(d_in):
                    jz = 0.0
                    for j in range(n_in):
                        jz += theta[base + j] * JA[k, j]
                    JZ[pnt, l, k, i] = jz
            v, ds = _act_stash(code, p, s)
            A[pnt, l + 1, i] = v
            DS[pnt, l, i] = ds
        if want_jac:
            for k in range(d_in):
                for i in range(n_out):
                    JA[k, i] = 0.0 if step else DS[pnt, l, i] * JZ[pnt, l, k, i]


@njit(parallel=True, cache=True, fastmath=_FM)
def _forward_stash(theta, dims, acts, actp, X, want_jac, A, DS, JZ):
    N = X.shape[0]
    L = dims.size - 1
    d_in = dims[0]
    d_out = dims[L]
    maxw = _maxdim(dims)
    offW, offb, _ = _offsets(dims)
    Y = np.empty((N, d_out))
    if want_jac:
        J = np.empty((N, d_out, d_in))
    else:
        J = np.empty((0, 0, 0))
    nch = (N + _CHUNK - 1) // _CHUNK
    for c in prange(nch):
        lo = c * _CHUNK
        hi = lo + _CHUNK
        if hi > N:
            hi = N
        JA = np.empty((d_in, maxw))
        for pnt in range(lo, hi):
            _forward_point(theta, dims, acts, actp, offW, offb, X, pnt,
                           want_jac, A, DS, JZ, JA)
            for i in range(d_out):
                Y[pnt, i] = A[pnt, L, i]
            if want_jac:
                # final layer is identity, so its jacobian is JZ directly
                for i in range(d_out):
                    for k in range(d_in):
                        J[pnt, i, k] = JZ[pnt, L - 1, k, i]
    return Y, J


def forward_stash_many(theta, dims, acts, actp, X, want_jac):
    """Forward pass recording the stash needed by pullback_stash_many.

    Returns (Y, J, stash); the stash layout is backend-private.
    """
    N = X.shape[0]
    L = dims.size - 1
    maxw = int(_maxdim(dims))
    d_in = int(dims[0])
    A = np.empty((N, L + 1, maxw))
    DS = np.empty((N, L, maxw))
    JZ = np.empty((N, L, d_in, maxw)) if want_jac else np.empty((N, 0, 0, 0))
    Y, J = _forward_stash(theta, dims, acts, actp, X, want_jac, A, DS, JZ)
    return Y, J, (A, DS, JZ)


@njit(parallel=True, cache=True, fastmath=_FM)
def _forward_plain(theta, dims, acts, actp, X, want_jac):
    """Memory-lean forward: the stash lives per chunk and is discarded."""
    N = X.shape[0]
    L = dims.size - 1
    d_in = dims[0]
    d_out = dims[L]
    maxw = _maxdim(dims)
    offW, offb, _ = _offsets(dims)
    Y = np.empty((N, d_out))
    if want_jac:
        J = np.empty((N, d_out, d_in))
    else:
        J = np.empty((0, 0, 0))
    nch = (N + _CHUNK - 1) // _CHUNK
    for c in prange(nch):
        lo = c * _CHUNK
        hi = lo + _CHUNK
        if hi > N:
            hi = N
        npt = hi - lo
        A = np.empty((npt, L + 1, maxw))
        DS = np.empty((npt, L, maxw))
        if want_jac:
            JZ = np.empty((npt, L, d_in, maxw))
        else:
            JZ = np.empty((npt, 0, 0, 0))
        JA = np.empty((d_in, maxw))
        for pnt in range(lo, hi):
            loc = pnt - lo
            _forward_point(theta, dims, acts, actp, offW, offb,
                           X[lo:hi], loc, want_jac, A, DS, JZ, JA)
            for i in range(d_out):
                Y[pnt, i] = A[loc, L, i]
            if want_jac:
                for i in range(d_out):
                    for k in range(d_in):
                        J[pnt, i, k] = JZ[loc, L - 1, k, i]
    return Y, J


def forward_many(theta, dims, acts, actp, X, want_jac):
    """Batched forward pass: (Y, J); J has zero extent without want_jac."""
    return _forward_plain(theta, dims, acts, actp, X, want_jac)


@njit(parallel=True, cache=True, fastmath=_FM)
def _pullback_partials(theta, dims, acts, actp, A, DS, JZ,
                       cot_y, cot_jac, use_jac):
    N = A.shape[0]
    L = dims.size - 1
    d_in = dims[0]
    d_out = dims[L]
    maxw = _maxdim(dims)
    offW, offb, P = _offsets(dims)
    nch = (N + _CHUNK - 1) // _CHUNK
    part = np.zeros((nch, P))
    for c in prange(nch):
        lo = c * _CHUNK
        hi = lo + _CHUNK
        if hi > N:
            hi = N
        abar = np.empty(maxw)
        zbar = np.empty(maxw)
        jbar = np.empty((d_in, maxw))
        jzbar = np.empty((d_in, maxw))
        newabar = np.empty(maxw)
        newjbar = np.empty((d_in, maxw))
        japrev = np.empty((d_in, maxw))
        for pnt in range(lo, hi):
            for i in range(d_out):
                abar[i] = cot_y[pnt, i]
            if use_jac:
                for i in range(d_out):
                    for k in range(d_in):
                        jbar[k, i] = cot_jac[pnt, i, k]
            for l in range(L - 1, -1, -1):
                n_in = dims[l]
                n_out = dims[l + 1]
                code = acts[l]
                p = actp[l]
                step = code == ACT_HEAVISIDE
                softp = code == ACT_SOFTPLUS
                for i in range(n_out):
                    ds = DS[pnt, l, i]
                    zb = abar[i] * ds
                    if use_jac:
                        d1f = 0.0 if step else ds
                        if softp:
                            d2 = p * ds * (1.0 - ds)
                            s = 0.0
                            for k in range(d_in):
                                s += JZ[pnt, l, k, i] * jbar[k, i]
                            zb += d2 * s
                        for k in range(d_in):
                            jzbar[k, i] = d1f * jbar[k, i]
                    zbar[i] = zb
                if use_jac and l > 0:
                    # input jacobian of this affine map: DS * JZ of layer l-1
                    prev_step = acts[l - 1] == ACT_HEAVISIDE
                    for k in range(d_in):
                        for j in range(n_in):
                            japrev[k, j] = 0.0 if prev_step else \
                                DS[pnt, l - 1, j] * JZ[pnt, l - 1, k, j]
                for i in range(n_out):
                    base = offW[l] + i * n_in
                    zb = zbar[i]
                    if use_jac:
                        if l > 0:
                            for j in range(n_in):
                                s = zb * A[pnt, l, j]
                                for k in range(d_in):
                                    s += jzbar[k, i] * japrev[k, j]
                                part[c, base + j] += s
                        else:
                            # first layer: input jacobian is the identity
                            for j in range(n_in):
                                part[c, base + j] += zb * A[pnt, 0, j] + jzbar[j, i]
                    else:
                        for j in range(n_in):
                            part[c, base + j] += zb * A[pnt, l, j]
                    part[c, offb[l] + i] += zb
                if l > 0:
                    for j in range(n_in):
                        newabar[j] = 0.0
                    if use_jac:
                        for k in range(d_in):
                            for j in range(n_in):
                                newjbar[k, j] = 0.0
                    for i in range(n_out):
                        base = offW[l] + i * n_in
                        zb = zbar[i]
                        for j in range(n_in):
                            newabar[j] += theta[base + j] * zb
                        if use_jac:
                            for k in range(d_in):
                                c_ki = jzbar[k, i]
                                if c_ki != 0.0:
                                    for j in range(n_in):
                                        newjbar[k, j] += theta[base + j] * c_ki
                    for j in range(n_in):
                        abar[j] = newabar[j]
                    if use_jac:
                        for k in range(d_in):
                            for j in range(n_in):
                                jbar[k, j] = newjbar[k, j]
    return part


def pullback_stash_many(theta, dims, acts, actp, stash, cot_y, cot_jac, use_jac):
    """Parameter gradient from a recorded forward stash."""
    A, DS, JZ = stash
    part = _pullback_partials(theta, dims, acts, actp, A, DS, JZ,
                              cot_y, cot_jac, use_jac)
    return part.sum(axis=0)


def pullback_many(theta, dims, acts, actp, X, cot_y, cot_jac, use_jac):
    """Gradient w.r.t. theta of sum_p <cot_y[p], y(p)> + <cot_jac[p], jac(p)>."""
    _, _, stash = forward_stash_many(theta, dims, acts, actp, X, use_jac)
    return pullback_stash_many(theta, dims, acts, actp, stash,
                               cot_y, cot_jac, use_jac)


@njit(cache=True)
def psor_sweeps(u, g, rhs, omega, tol, max_iter, energy_every, h):
    """Projected SOR sweeps; same contract as the numpy twin."""
    n = u.size
    n_rec = max_iter // energy_every + 1
    energies = np.zeros(n_rec)
    n_energy = 0
    last = np.inf
    sweeps = 0
    while sweeps < max_iter:
        if sweeps % energy_every == 0 and n_energy < n_rec:
            e = u[0] * u[0] + u[n - 1] * u[n - 1]
            for i in range(n - 1):
                diff = u[i + 1] - u[i]
                e += diff * diff
            s = 0.0
            for i in range(n):
                s += rhs[i] * u[i]
            energies[n_energy] = 0.5 * e / h - s / h
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
