"""Step-first hybrid networks: exact min gadgets and simplex characteristics.

A pair minimum is computed exactly by one ReLU layer via
min{a,b} = (a+b)/2 - |a-b|/2, realized by the 4-unit gadget
v . ReLU(W [a b]^T) with v = [1,-1,-1,-1]/2 and W = [[1,1],[-1,-1],[1,-1],[-1,1]].
A binary tree of such gadgets computes the minimum of k inputs in
ceil(log2 k) ReLU layers.  Combined with a first layer of Heaviside facet
indicators (H(0) = 1), the characteristic function of a closed simplex is
represented exactly.
"""

from dataclasses import dataclass
from math import ceil, log2

import numpy as np

from .netcore import Activation, HnnSpec, NetworkSpec, pack_params, relu, heaviside

_GADGET_W = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
_GADGET_V = np.array([0.5, -0.5, -0.5, -0.5])


@dataclass
class Simplex:
    """Convex hull of d+1 affinely independent points in R^d."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[0] != self.vertices.shape[1] + 1:
            raise ValueError("simplex needs d+1 vertices in R^d")

    @property
    def dim(self):
        return self.vertices.shape[1]

    def edge_matrix(self):
        return (self.vertices[1:] - self.vertices[0]).T  # (d, d)


def _check_nondegenerate(s):
    T = s.edge_matrix()
    d = s.dim
    vol = abs(np.linalg.det(T)) / np.prod(np.arange(1, d + 1))
    span = np.max(np.ptp(s.vertices, axis=0))
    if span <= 0.0 or vol < 1e-12 * span ** d:
        raise ValueError("degenerate simplex (volume below 1e-12 of bounding-box scale)")
    return T


def _min_levels(k):
    """Per-level (W_in, V_out) matrices of the binary min tree over k values."""
    levels = []
    m = k
    while m > 1:
        pairs, odd = divmod(m, 2)
        width = 4 * pairs + 2 * odd
        W_in = np.zeros((width, m))
        V_out = np.zeros((pairs + odd, width))
        for i in range(pairs):
            W_in[4 * i:4 * i + 4, 2 * i:2 * i + 2] = _GADGET_W
            V_out[i, 4 * i:4 * i + 4] = _GADGET_V
        if odd:
            # pass the leftover value through: x = relu(x) - relu(-x)
            W_in[4 * pairs, m - 1] = 1.0
            W_in[4 * pairs + 1, m - 1] = -1.0
            V_out[pairs, 4 * pairs] = 1.0
            V_out[pairs, 4 * pairs + 1] = -1.0
        levels.append((W_in, V_out))
        m = pairs + odd
    return levels


def min_tree_net(k):
    """ReLU network computing min of k inputs exactly; ceil(log2 k) layers.

    Returns (NetworkSpec, theta).
    """
    if k < 1:
        raise ValueError("need k >= 1")
    if k == 1:
        spec = NetworkSpec(input_dim=1, layers=(), output_dim=1)
        return spec, pack_params(spec, [(np.array([[1.0]]), np.zeros(1))])
    levels = _min_levels(k)
    mats = [(levels[0][0], np.zeros(levels[0][0].shape[0]))]
    for l in range(1, len(levels)):
        A = levels[l][0] @ levels[l - 1][1]
        mats.append((A, np.zeros(A.shape[0])))
    final = levels[-1][1]
    mats.append((final, np.zeros(1)))
    layers = tuple((W.shape[0], relu()) for W, _ in mats[:-1])
    spec = NetworkSpec(input_dim=k, layers=layers, output_dim=1)
    return spec, pack_params(spec, mats)


def facet_functions(s):
    """Unit-normal affine facet functions, positive inside the simplex.

    Returns (A, b): row i vanishes on the facet opposite vertex i and is
    positive at that vertex.
    """
    T = _check_nondegenerate(s)
    d = s.dim
    A = np.empty((d + 1, d))
    b = np.empty(d + 1)
    for i in range(d + 1):
        others = np.delete(s.vertices, i, axis=0)
        edges = others[1:] - others[0]       # (d-1, d)
        if d == 1:
            n = np.array([1.0])
        else:
            # unit normal: last right-singular vector of the edge matrix
            _, _, vt = np.linalg.svd(edges)
            n = vt[-1]
        c = -float(n @ others[0])
        val = float(n @ s.vertices[i]) + c
        if val == 0.0:
            raise ValueError("degenerate simplex: opposite vertex on facet plane")
        if val < 0.0:
            n, c = -n, -c
        A[i] = n
        b[i] = c
    return A, b


def simplex_chi_net(s, ste_c=0.5):
    """HnnSpec computing the characteristic function of a simplex exactly.

    The first layer applies Heaviside to the d+1 facet functions; the rest
    is the exact min tree.  With H(0) = 1 the closed simplex maps to 1 for
    d >= 2; the d = 1 interval uses the two-step form
    H(x - v0) - H(x - v1), which is 1 on [v0, v1) and 0 elsewhere (the
    right endpoint is a null-set exception).  Returns (HnnSpec, theta).
    """
    d = s.dim
    if d == 1:
        _check_nondegenerate(s)
        v0, v1 = sorted(s.vertices[:, 0])
        mats = [
            (np.array([[1.0], [1.0]]), np.array([-v0, -v1])),
            (np.array([[1.0, -1.0]]), np.zeros(1)),
        ]
        spec = HnnSpec(input_dim=1, layers=((2, heaviside(ste_c)),), output_dim=1)
        return spec, pack_params(spec, mats)
    A, b = facet_functions(s)
    levels = _min_levels(d + 1)
    mats = [(A, b), (levels[0][0], np.zeros(levels[0][0].shape[0]))]
    for l in range(1, len(levels)):
        W = levels[l][0] @ levels[l - 1][1]
        mats.append((W, np.zeros(W.shape[0])))
    mats.append((levels[-1][1], np.zeros(1)))
    layers = [(d + 1, heaviside(ste_c))]
    layers += [(W.shape[0], relu()) for W, _ in mats[1:-1]]
    spec = HnnSpec(input_dim=d, layers=tuple(layers), output_dim=1)
    return spec, pack_params(spec, mats)


def chi_hidden_layer_count(d):
    """Hidden layers of simplex_chi_net: 1 step layer + the min-tree depth."""
    return 1 if d == 1 else 1 + ceil(log2(d + 1))


def chi_size(d):
    """Neuron count (input + hidden) of simplex_chi_net, per construction."""
    if d == 1:
        return 1 + 2
    total = d + (d + 1)
    m = d + 1
    while m > 1:
        pairs, odd = divmod(m, 2)
        total += 4 * pairs + 2 * odd
        m = pairs + odd
    return total


def net_size(spec):
    """Input plus hidden neuron count (output layer not counted)."""
    return spec.input_dim + sum(w for w, _ in spec.layers)


def in_simplex(s, x, tol=1e-12):
    """Closed-simplex membership via barycentric coordinates (all >= -tol)."""
    single = np.asarray(x).ndim == 1
    res = in_simplex_many(s, np.atleast_2d(np.asarray(x, dtype=np.float64)), tol=tol)
    return bool(res[0]) if single else res


def in_simplex_many(s, X, tol=1e-12):
    T = _check_nondegenerate(s)
    lam = np.linalg.solve(T, (X - s.vertices[0]).T).T  # (N, d)
    lam0 = 1.0 - lam.sum(axis=1)
    return (lam.min(axis=1) >= -tol) & (lam0 >= -tol)


def piecewise_constant_net(simplices, coeffs):
    """Sum of coefficient-weighted simplex characteristics as one network.

    All simplices share a dimension, so the per-simplex nets have identical
    shapes and merge block-diagonally.  On facets shared by two simplices
    both characteristics may report 1; that double counting lives on a null
    set and is tolerated.  Returns (HnnSpec, theta).
    """
    if len(simplices) == 0:
        raise ValueError("need at least one simplex")
    if len(simplices) != len(coeffs):
        raise ValueError("one coefficient per simplex")
    from .netcore import unpack_params

    parts = [simplex_chi_net(s) for s in simplices]
    mats_per = [unpack_params(spec, theta) for spec, theta in parts]
    n_layers = len(mats_per[0])
    merged = []
    for l in range(n_layers - 1):
        if l == 0:
            W = np.vstack([m[0][0] for m in mats_per])
        else:
            blocks = [m[l][0] for m in mats_per]
            W = np.zeros((sum(b.shape[0] for b in blocks),
                          sum(b.shape[1] for b in blocks)))
            r = c = 0
            for bmat in blocks:
                W[r:r + bmat.shape[0], c:c + bmat.shape[1]] = bmat
                r += bmat.shape[0]
                c += bmat.shape[1]
        bvec = np.concatenate([m[l][1] for m in mats_per])
        merged.append((W, bvec))
    final = np.hstack([coeffs[i] * mats_per[i][-1][0] for i in range(len(parts))])
    merged.append((final, np.zeros(1)))
    base_spec = parts[0][0]
    layers = []
    for l, (width, act) in enumerate(base_spec.layers):
        layers.append((width * len(parts), act))
    spec = HnnSpec(input_dim=base_spec.input_dim, layers=tuple(layers), output_dim=1)
    return spec, pack_params(spec, merged)
