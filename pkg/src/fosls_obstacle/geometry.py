"""Domains, boundary-distance surrogates with gradients, uniform samplers.

Each surrogate distance coincides with the true distance to the boundary,
vanishes exactly on it, and has |grad| <= 1 wherever defined.  At the
isolated non-differentiable points (ball center, slit endpoints,
equidistant sets) the gradient of one active branch is returned; these are
null sets under the samplers.
"""

from dataclasses import dataclass
from math import gamma, pi

import numpy as np


@dataclass(frozen=True)
class Ball:
    """Open ball of radius R0 centered at the origin in R^dim."""

    dim: int
    R0: float

    def __post_init__(self):
        if self.dim < 1 or not self.R0 > 0:
            raise ValueError("Ball needs dim >= 1 and R0 > 0")


@dataclass(frozen=True)
class Interval:
    """Open interval (a, b); points are 1-vectors."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("Interval needs a < b")

    @property
    def dim(self):
        return 1


@dataclass(frozen=True)
class UnitDiskSlit:
    """Open unit disk minus the closed segment {0} x [0, 1]."""

    @property
    def dim(self):
        return 2


def _as_points(dom, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != dom.dim:
        raise ValueError(f"points of dimension {X.shape[1]}, domain has {dom.dim}")
    return X, single


def contains(dom, x):
    """Membership in the open domain."""
    X, single = _as_points(dom, x)
    if isinstance(dom, Ball):
        inside = np.einsum("ij,ij->i", X, X) < dom.R0 ** 2
    elif isinstance(dom, Interval):
        inside = (X[:, 0] > dom.a) & (X[:, 0] < dom.b)
    elif isinstance(dom, UnitDiskSlit):
        inside = np.einsum("ij,ij->i", X, X) < 1.0
        on_slit = (X[:, 0] == 0.0) & (X[:, 1] >= 0.0) & (X[:, 1] <= 1.0)
        inside &= ~on_slit
    else:
        raise TypeError(f"unknown domain {dom!r}")
    return bool(inside[0]) if single else inside


def in_closure(dom, x, rtol=1e-12):
    """Membership in the closure (up to a tiny radial round-off tolerance)."""
    X, single = _as_points(dom, x)
    if isinstance(dom, Ball):
        ok = np.sqrt(np.einsum("ij,ij->i", X, X)) <= dom.R0 * (1.0 + rtol)
    elif isinstance(dom, Interval):
        span = dom.b - dom.a
        ok = (X[:, 0] >= dom.a - rtol * span) & (X[:, 0] <= dom.b + rtol * span)
    elif isinstance(dom, UnitDiskSlit):
        ok = np.sqrt(np.einsum("ij,ij->i", X, X)) <= 1.0 + rtol
    else:
        raise TypeError(f"unknown domain {dom!r}")
    return bool(ok[0]) if single else ok


def volume(dom):
    """Exact Lebesgue measure."""
    if isinstance(dom, Ball):
        return pi ** (dom.dim / 2.0) * dom.R0 ** dom.dim / gamma(dom.dim / 2.0 + 1.0)
    if isinstance(dom, Interval):
        return dom.b - dom.a
    if isinstance(dom, UnitDiskSlit):
        return pi  # the slit is a null set
    raise TypeError(f"unknown domain {dom!r}")


def _slit_branch(X):
    """Distance and gradient to the segment {0} x [0,1]."""
    t = np.clip(X[:, 1], 0.0, 1.0)
    delta = X.copy()
    delta[:, 1] -= t
    dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
    grad = np.zeros_like(X)
    pos = dist > 0.0
    grad[pos] = delta[pos] / dist[pos, None]
    # on the segment itself the distance gradient is undefined; pick +e1
    grad[~pos, 0] = 1.0
    return dist, grad


def surrogate_dist_grad_many(dom, X):
    """Batched surrogate boundary distance and its gradient."""
    X, _ = _as_points(dom, X)
    if not np.all(in_closure(dom, X)):
        raise ValueError("point outside the domain closure")
    if isinstance(dom, Ball):
        r = np.sqrt(np.einsum("ij,ij->i", X, X))
        d = dom.R0 - r
        grad = np.zeros_like(X)
        pos = r > 0.0
        grad[pos] = -X[pos] / r[pos, None]
        return d, grad
    if isinstance(dom, Interval):
        left = X[:, 0] - dom.a
        right = dom.b - X[:, 0]
        take_left = left <= right
        d = np.where(take_left, left, right)
        grad = np.where(take_left, 1.0, -1.0)[:, None]
        return d, grad
    if isinstance(dom, UnitDiskSlit):
        r = np.sqrt(np.einsum("ij,ij->i", X, X))
        d_circ = 1.0 - r
        g_circ = np.zeros_like(X)
        pos = r > 0.0
        g_circ[pos] = -X[pos] / r[pos, None]
        d_slit, g_slit = _slit_branch(X)
        take_circ = d_circ <= d_slit
        d = np.where(take_circ, d_circ, d_slit)
        grad = np.where(take_circ[:, None], g_circ, g_slit)
        return d, grad
    raise TypeError(f"unknown domain {dom!r}")


def surrogate_dist_grad(dom, x):
    """Surrogate distance and gradient at one point."""
    d, grad = surrogate_dist_grad_many(dom, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return float(d[0]), grad[0]


def sample_uniform(dom, rng, n):
    """n i.i.d. uniform points; rng is an explicit np.random.Generator."""
    if n < 1:
        raise ValueError("need n >= 1")
    if isinstance(dom, Interval):
        return dom.a + (dom.b - dom.a) * rng.random((n, 1))
    if isinstance(dom, Ball):
        return _ball_sample(rng, n, dom.dim, dom.R0)
    if isinstance(dom, UnitDiskSlit):
        X = _ball_sample(rng, n, 2, 1.0)
        # points landing exactly on the slit (probability zero) are redrawn
        while True:
            on_slit = (X[:, 0] == 0.0) & (X[:, 1] >= 0.0) & (X[:, 1] <= 1.0)
            if not on_slit.any():
                return X
            X[on_slit] = _ball_sample(rng, int(on_slit.sum()), 2, 1.0)
    raise TypeError(f"unknown domain {dom!r}")


def _ball_sample(rng, n, dim, R0):
    # gaussian direction, radius R0 * U^(1/dim)
    dirs = rng.standard_normal((n, dim))
    norms = np.sqrt(np.einsum("ij,ij->i", dirs, dirs))
    bad = norms == 0.0
    if bad.any():
        dirs[bad, 0] = 1.0
        norms[bad] = 1.0
    radii = R0 * rng.random(n) ** (1.0 / dim)
    return dirs * (radii / norms)[:, None]
