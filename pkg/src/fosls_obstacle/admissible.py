"""Admissible lifted triples and the Monte-Carlo least-squares losses.

Raw networks (v, psi, eta) are lifted to an admissible triple

    u     = g + d * a(v)          (boundary + obstacle constraint)
    phi   = psi                   (flux, unconstrained)
    gamma = div psi + a(eta)      (gamma >= div phi by a >= 0)

where d is the surrogate boundary distance and a is a nonnegative Lipschitz
function with a(0) = 0.  Constraints hold by construction for every
parameter vector, so the losses need no penalty terms.

Two discrete losses over a collocation batch {x_k}: the 'L' kind

    (|Omega|/N) sum_k (gamma+f)^2 + |grad u - phi|^2
                      + gamma (u-g) + phi . grad(u-g)

and the 'J' kind, which replaces the last two terms by lam (u-g) with
lam = a(eta).  Gradients are assembled analytically from the network
pullbacks (with the straight-through rule for step activations in eta).
"""

from dataclasses import dataclass

import numpy as np

from . import geometry, netcore


@dataclass(frozen=True)
class LiftConfig:
    """Choice of constraint function a, loss kind, and optional parameter ball."""

    a_kind: str = "square"   # 'square' (a = t^2) or 'relu' (a = max(t,0))
    loss_kind: str = "L"     # 'L' or 'J'
    radius_R: float = None   # +inf loss outside |theta| <= R when set

    def __post_init__(self):
        if self.a_kind not in ("square", "relu"):
            raise ValueError(f"a_kind must be 'square' or 'relu', got {self.a_kind!r}")
        if self.loss_kind not in ("L", "J"):
            raise ValueError(f"loss_kind must be 'L' or 'J', got {self.loss_kind!r}")
        if self.radius_R is not None and not self.radius_R > 0:
            raise ValueError("radius_R must be positive")


@dataclass
class TripleNets:
    """The three raw networks, each a (NetworkSpec, flat parameters) pair."""

    v: tuple
    psi: tuple
    eta: tuple

    def theta_norm(self):
        return float(np.sqrt(sum(np.dot(t, t) for _, t in (self.v, self.psi, self.eta))))


@dataclass
class AdmissiblePointEval:
    """Lifted quantities at one collocation point."""

    u: float
    grad_u: np.ndarray
    phi: np.ndarray
    div_phi: float
    gamma: float
    lam: float
    d: float
    a_v: float


@dataclass
class TripleEval:
    """Batched admissible-triple values at collocation points."""

    u: np.ndarray
    grad_u: np.ndarray
    phi: np.ndarray
    div_phi: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    w: np.ndarray        # u - g, computed in lifted form d * a(v) when available
    grad_w: np.ndarray   # grad(u - g)
    dist: np.ndarray = None
    a_v: np.ndarray = None


def lift_a(kind, t):
    """Constraint function a with first and second derivatives."""
    t = np.asarray(t, dtype=np.float64)
    if kind == "square":
        return t * t, 2.0 * t, np.full_like(t, 2.0)
    pos = t > 0.0
    return np.where(pos, t, 0.0), pos.astype(np.float64), np.zeros_like(t)


class _LiftData:
    """Everything the loss and its gradient need at a batch of points."""

    __slots__ = ("X", "V", "JV", "PSI", "JPSI", "ETA", "a_v", "da_v", "dda_v",
                 "a_eta", "da_eta", "dist", "gdist", "gval", "ggrad", "fval",
                 "u", "grad_u", "div_psi", "lam", "gamma", "w", "grad_w",
                 "v_stash", "psi_stash", "eta_stash")


def _lift_batch(problem, lift, nets, X, with_stash=False):
    d = X.shape[1]
    v_spec, v_theta = nets.v
    psi_spec, psi_theta = nets.psi
    eta_spec, eta_theta = nets.eta
    if psi_spec.output_dim != d:
        raise ValueError(f"flux net output_dim {psi_spec.output_dim} != domain dim {d}")
    if v_spec.output_dim != 1 or eta_spec.output_dim != 1:
        raise ValueError("v and eta nets must have output_dim 1")

    ld = _LiftData()
    ld.X = X
    if with_stash:
        V, JV, ld.v_stash = netcore.forward_with_stash(v_spec, v_theta, X)
        ld.PSI, ld.JPSI, ld.psi_stash = netcore.forward_with_stash(psi_spec, psi_theta, X)
        ETA, _, ld.eta_stash = netcore.forward_with_stash(eta_spec, eta_theta, X,
                                                          want_jac=False)
    else:
        V, JV = netcore.forward_jac_many(v_spec, v_theta, X)
        ld.PSI, ld.JPSI = netcore.forward_jac_many(psi_spec, psi_theta, X)
        ETA, _ = netcore.forward_jac_many(eta_spec, eta_theta, X, want_jac=False)
    ld.V = V[:, 0]
    ld.JV = JV[:, 0, :]
    ld.ETA = ETA[:, 0]

    ld.a_v, ld.da_v, ld.dda_v = lift_a(lift.a_kind, ld.V)
    ld.a_eta, ld.da_eta, _ = lift_a(lift.a_kind, ld.ETA)

    ld.dist, ld.gdist = geometry.surrogate_dist_grad_many(problem.domain, X)
    ld.gval = problem.g(X)
    ld.ggrad = problem.grad_g(X)
    ld.fval = problem.f(X)

    ld.u = ld.gval + ld.dist * ld.a_v
    ld.w = ld.dist * ld.a_v
    ld.grad_w = ld.gdist * ld.a_v[:, None] + (ld.dist * ld.da_v)[:, None] * ld.JV
    ld.grad_u = ld.ggrad + ld.grad_w
    ld.div_psi = np.trace(ld.JPSI, axis1=1, axis2=2)
    ld.lam = ld.a_eta
    ld.gamma = ld.div_psi + ld.lam
    return ld


def eval_triple(problem, lift, nets, X):
    """Batched admissible-triple evaluation; nets may be a FieldTriple."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if isinstance(nets, TripleNets):
        ld = _lift_batch(problem, lift, nets, X)
        return TripleEval(u=ld.u, grad_u=ld.grad_u, phi=ld.PSI, div_phi=ld.div_psi,
                          gamma=ld.gamma, lam=ld.lam, w=ld.w, grad_w=ld.grad_w,
                          dist=ld.dist, a_v=ld.a_v)
    # closed-form field triple
    u = nets.u(X)
    grad_u = nets.grad_u(X)
    phi = nets.phi(X)
    div_phi = nets.div_phi(X)
    lam = nets.lam(X)
    gval = problem.g(X)
    ggrad = problem.grad_g(X)
    return TripleEval(u=u, grad_u=grad_u, phi=phi, div_phi=div_phi,
                      gamma=div_phi + lam, lam=lam, w=u - gval,
                      grad_w=grad_u - ggrad)


def lift_point(problem, lift, nets, x):
    """Admissible lifted values at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    ev = eval_triple(problem, lift, nets, x[None, :])
    return AdmissiblePointEval(u=float(ev.u[0]), grad_u=ev.grad_u[0],
                               phi=ev.phi[0], div_phi=float(ev.div_phi[0]),
                               gamma=float(ev.gamma[0]), lam=float(ev.lam[0]),
                               d=float(ev.dist[0]) if ev.dist is not None else None,
                               a_v=float(ev.a_v[0]) if ev.a_v is not None else None)


def _terms(ev, fval):
    r1 = ev.gamma + fval
    e = ev.grad_u - ev.phi
    G1 = r1 * r1
    G2 = np.einsum("ij,ij->i", e, e)
    G3 = ev.gamma * ev.w
    G4 = np.einsum("ij,ij->i", ev.phi, ev.grad_w)
    return G1, G2, G3, G4


def _pointwise_loss(ev, fval, loss_kind):
    G1, G2, G3, G4 = _terms(ev, fval)
    if loss_kind == "L":
        return G1 + G2 + G3 + G4
    return G1 + G2 + ev.lam * ev.w


def loss_terms(problem, lift, nets, x):
    """Pointwise terms (G1, G2, G3, G4) of the 'L' loss at one point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    X = x[None, :]
    ev = eval_triple(problem, lift, nets, X)
    G1, G2, G3, G4 = _terms(ev, problem.f(X))
    return float(G1[0]), float(G2[0]), float(G3[0]), float(G4[0])


def batch_loss(problem, lift, nets, points):
    """Monte-Carlo loss over a batch: (|Omega|/N) * sum of pointwise terms."""
    X = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty collocation batch")
    ev = eval_triple(problem, lift, nets, X)
    t = _pointwise_loss(ev, problem.f(X), lift.loss_kind)
    vol = geometry.volume(problem.domain)
    return float(vol / X.shape[0] * np.sum(t))


# Points per training chunk: bounds stash memory while keeping chunk
# boundaries (and thus summation order) a pure function of the batch size.
_TRAIN_CHUNK = 2048


def batch_loss_with_grad(problem, lift, nets, points):
    """Loss and its exact gradient w.r.t. the three parameter vectors.

    Returns (loss, (grad_v, grad_psi, grad_eta)).  Cotangents for the
    network pullbacks are assembled from the chain rule through the lift;
    step activations in eta receive the straight-through rule inside the
    pullback itself.
    """
    X = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    N = X.shape[0]
    if N == 0:
        raise ValueError("empty collocation batch")
    d = X.shape[1]
    vol = geometry.volume(problem.domain)
    scale = vol / N
    eye = np.eye(d)

    v_spec, v_theta = nets.v
    psi_spec, psi_theta = nets.psi
    eta_spec, eta_theta = nets.eta
    grad_v = np.zeros(v_theta.size)
    grad_psi = np.zeros(psi_theta.size)
    grad_eta = np.zeros(eta_theta.size)
    total = 0.0

    for lo in range(0, N, _TRAIN_CHUNK):
        ld = _lift_batch(problem, lift, nets, X[lo:lo + _TRAIN_CHUNK],
                         with_stash=True)
        r1 = ld.gamma + ld.fval
        e = ld.grad_u - ld.PSI
        if lift.loss_kind == "L":
            t = r1 * r1 + np.einsum("ij,ij->i", e, e) + ld.gamma * ld.w \
                + np.einsum("ij,ij->i", ld.PSI, ld.grad_w)
            dt_ddiv = 2.0 * r1 + ld.w
            dt_dlam = 2.0 * r1 + ld.w
            dt_dpsi = -2.0 * e + ld.grad_w
            dt_dgrad_u = 2.0 * e + ld.PSI
            dt_dw = ld.gamma
        else:
            t = r1 * r1 + np.einsum("ij,ij->i", e, e) + ld.lam * ld.w
            dt_ddiv = 2.0 * r1
            dt_dlam = 2.0 * r1 + ld.w
            dt_dpsi = -2.0 * e
            dt_dgrad_u = 2.0 * e
            dt_dw = ld.lam
        total += float(np.sum(t))

        dt_da_v = dt_dw * ld.dist + np.einsum("ij,ij->i", dt_dgrad_u, ld.gdist)
        dt_dV = dt_da_v * ld.da_v \
            + ld.dist * ld.dda_v * np.einsum("ij,ij->i", dt_dgrad_u, ld.JV)
        dt_dJV = (ld.dist * ld.da_v)[:, None] * dt_dgrad_u
        dt_dETA = dt_dlam * ld.da_eta

        grad_v += netcore.pullback_from_stash(
            v_spec, v_theta, ld.v_stash,
            cot_y=scale * dt_dV[:, None],
            cot_jac=scale * dt_dJV[:, None, :])
        grad_psi += netcore.pullback_from_stash(
            psi_spec, psi_theta, ld.psi_stash,
            cot_y=scale * dt_dpsi,
            cot_jac=scale * dt_ddiv[:, None, None] * eye)
        grad_eta += netcore.pullback_from_stash(
            eta_spec, eta_theta, ld.eta_stash,
            cot_y=scale * dt_dETA[:, None])
    return scale * total, (grad_v, grad_psi, grad_eta)


def batch_loss_grad(problem, lift, nets, points):
    """Gradient of batch_loss w.r.t. the (v, psi, eta) parameter vectors."""
    return batch_loss_with_grad(problem, lift, nets, points)[1]


def continuous_loss_ref(problem, lift, nets, quad_points, seed=0):
    """High-accuracy Monte-Carlo reference of the continuous loss.

    Returns (mean, standard_error) at fixed parameters.  With radius_R set
    and |theta| > R the (+inf, 0) sentinel is returned.  Accepts either
    TripleNets or a FieldTriple.
    """
    if quad_points < 10_000:
        raise ValueError("continuous_loss_ref needs quad_points >= 1e4")
    if (lift.radius_R is not None and isinstance(nets, TripleNets)
            and nets.theta_norm() > lift.radius_R):
        return float("inf"), 0.0
    rng = np.random.default_rng(seed)
    vol = geometry.volume(problem.domain)
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = 32768
    while done < quad_points:
        n = min(chunk, quad_points - done)
        X = geometry.sample_uniform(problem.domain, rng, n)
        ev = eval_triple(problem, lift, nets, X)
        t = _pointwise_loss(ev, problem.f(X), lift.loss_kind)
        total += float(np.sum(t))
        total_sq += float(np.sum(t * t))
        done += n
    mean = total / quad_points
    var = max(total_sq / quad_points - mean * mean, 0.0)
    se = vol * np.sqrt(var / quad_points)
    return vol * mean, float(se)
