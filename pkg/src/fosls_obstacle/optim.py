"""ADAM with a linearly decaying learning rate, and the training driver."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import admissible, geometry, problems


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, **kw):
        return cls(m=np.zeros(n), v=np.zeros(n), **kw)


@dataclass(frozen=True)
class Schedule:
    """lr(t) = l0 * (1 - t/T): linear decay to zero at the final iteration."""

    l0: float
    T: int


def lr_at(sched, t):
    if not 0 <= t <= sched.T:
        raise ValueError(f"iteration {t} outside [0, {sched.T}]")
    return sched.l0 * (1.0 - t / sched.T) if sched.T > 0 else 0.0


def adam_step(state, theta, grad, lr):
    """One bias-corrected ADAM update; returns (new_state, new_theta)."""
    if grad.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError("parameter/gradient/state shape mismatch")
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_theta = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, t=t, beta1=state.beta1, beta2=state.beta2,
                          eps=state.eps)
    return new_state, new_theta


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite; carries diagnostics."""

    def __init__(self, iteration, detail):
        super().__init__(f"non-finite loss at iteration {iteration}: {detail}")
        self.iteration = iteration
        self.detail = detail


@dataclass
class TrainRecord:
    iteration: int
    loss: float
    lr: float
    l2_error: float = float("nan")
    triple_error: float = float("nan")
    elapsed_s: float = 0.0


@dataclass
class TrainResult:
    nets: admissible.TripleNets
    history: list = field(default_factory=list)


def _diagnose(problem, lift, nets, X):
    """Name the loss term that went non-finite (for divergence reports)."""
    ev = admissible.eval_triple(problem, lift, nets, X)
    fval = problem.f(X)
    r1 = ev.gamma + fval
    e = ev.grad_u - ev.phi
    checks = {
        "residual (gamma+f)^2": r1 * r1,
        "flux mismatch |grad u - phi|^2": np.einsum("ij,ij->i", e, e),
        "complementarity gamma*(u-g)": ev.gamma * ev.w,
        "flux pairing phi.grad(u-g)": np.einsum("ij,ij->i", ev.phi, ev.grad_w),
    }
    bad = [name for name, arr in checks.items() if not np.all(np.isfinite(arr))]
    return ", ".join(bad) if bad else "all pointwise terms finite (overflow in sum?)"


def train(problem, lift, nets, config, on_record=None):
    """Run the training loop; returns TrainResult with the final nets.

    Each iteration draws a fresh uniform collocation batch, evaluates the
    loss and its gradient, and applies one ADAM step per network with the
    scheduled rate.  Fully deterministic given config seeds.
    """
    T = config.iterations
    sched = Schedule(l0=config.lr0, T=max(T, 1))
    sample_rng = np.random.default_rng(config.seed_sampling)
    states = {
        "v": AdamState.zeros(nets.v[1].size),
        "psi": AdamState.zeros(nets.psi[1].size),
        "eta": AdamState.zeros(nets.eta[1].size),
    }
    history = []
    t_start = time.perf_counter()
    for it in range(T):
        X = geometry.sample_uniform(problem.domain, sample_rng, config.n_points)
        loss, (gv, gpsi, geta) = admissible.batch_loss_with_grad(problem, lift, nets, X)
        if not np.isfinite(loss):
            raise TrainingDiverged(it, _diagnose(problem, lift, nets, X))
        lr = lr_at(sched, it)
        states["v"], theta_v = adam_step(states["v"], nets.v[1], gv, lr)
        states["psi"], theta_psi = adam_step(states["psi"], nets.psi[1], gpsi, lr)
        states["eta"], theta_eta = adam_step(states["eta"], nets.eta[1], geta, lr)
        nets = admissible.TripleNets(v=(nets.v[0], theta_v),
                                     psi=(nets.psi[0], theta_psi),
                                     eta=(nets.eta[0], theta_eta))
        rec = TrainRecord(iteration=it, loss=loss, lr=lr,
                          elapsed_s=time.perf_counter() - t_start)
        evaluate = (config.eval_every > 0
                    and ((it + 1) % config.eval_every == 0 or it == T - 1)
                    and problem.exact_u is not None)
        if evaluate:
            rec.l2_error = problems.l2_error_mc(problem, lift, nets,
                                                config.eval_points, config.seed_eval)
            rec.triple_error = problems.triple_error_mc(problem, lift, nets,
                                                        config.eval_points,
                                                        config.seed_eval)
        history.append(rec)
        if on_record is not None:
            on_record(rec)
    return TrainResult(nets=nets, history=history)
