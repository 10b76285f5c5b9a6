"""Fully-connected network engine.

Provides forward values, exact input-space jacobians, and reverse-mode
pullbacks of (value, jacobian) cotangents onto the flat parameter vector.
Parameters live in a single float64 vector laid out per affine map as the
row-major weight matrix followed by the bias; the final map is affine with
identity activation.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from ._kernels_numpy import ACT_IDENTITY, ACT_SOFTPLUS, ACT_RELU, ACT_HEAVISIDE

_KIND_CODES = {
    "identity": ACT_IDENTITY,
    "softplus": ACT_SOFTPLUS,
    "relu": ACT_RELU,
    "heaviside": ACT_HEAVISIDE,
}


@dataclass(frozen=True)
class Activation:
    """Activation kind with its parameter (softplus beta / heaviside STE width)."""

    kind: str
    beta: float = 1.0
    c: float = 0.5

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "softplus" and not self.beta > 0:
            raise ValueError("softplus beta must be positive")
        if self.kind == "heaviside" and not self.c > 0:
            raise ValueError("heaviside STE width c must be positive")

    @property
    def param(self):
        if self.kind == "softplus":
            return float(self.beta)
        if self.kind == "heaviside":
            return float(self.c)
        return 0.0


def softplus(beta=100.0):
    return Activation("softplus", beta=beta)


def relu():
    return Activation("relu")


def heaviside(c=0.5):
    return Activation("heaviside", c=c)


def identity():
    return Activation("identity")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: input_dim -> hidden (width, activation) layers -> output_dim.

    The output map is affine (identity activation).
    """

    input_dim: int
    layers: tuple
    output_dim: int

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("dimensions must be positive")
        for width, act in self.layers:
            if width < 1:
                raise ValueError("layer widths must be positive")
            if not isinstance(act, Activation):
                raise TypeError("layer activations must be Activation instances")


class HnnSpec(NetworkSpec):
    """NetworkSpec carrying exactly one heaviside (step) layer.

    Evaluates piecewise-constant functions when the layers above the step
    layer are built from exact min-gadgets; interchangeable with
    NetworkSpec everywhere in the engine.
    """

    def __post_init__(self):
        super().__post_init__()
        n_step = sum(1 for _, act in self.layers if act.kind == "heaviside")
        if n_step != 1:
            raise ValueError(f"HnnSpec requires exactly one heaviside layer, got {n_step}")


@dataclass
class PointEval:
    """Network output at one point: value y and (optionally) jacobian dy/dx."""

    y: np.ndarray
    jac: np.ndarray = None


def layer_dims(spec):
    """Dimension chain [input, hidden..., output]."""
    return [spec.input_dim] + [w for w, _ in spec.layers] + [spec.output_dim]


def param_count(spec):
    dims = layer_dims(spec)
    return sum(dims[l + 1] * dims[l] + dims[l + 1] for l in range(len(dims) - 1))


def _layout(spec):
    """Primitive arrays consumed by the kernels."""
    dims = np.asarray(layer_dims(spec), dtype=np.int64)
    acts = np.asarray([_KIND_CODES[a.kind] for _, a in spec.layers] + [ACT_IDENTITY],
                      dtype=np.int64)
    actp = np.asarray([a.param for _, a in spec.layers] + [0.0], dtype=np.float64)
    return dims, acts, actp


def init_params(spec, seed):
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    Deterministic for a given (spec, seed).
    """
    rng = np.random.default_rng(seed)
    dims = layer_dims(spec)
    theta = np.empty(param_count(spec))
    off = 0
    for l in range(len(dims) - 1):
        m, n = dims[l], dims[l + 1]
        bound = np.sqrt(6.0 / (m + n))
        theta[off:off + n * m] = rng.uniform(-bound, bound, size=n * m)
        off += n * m
        theta[off:off + n] = 0.0
        off += n
    return theta


def unpack_params(spec, theta):
    """(W, b) views per affine map, sharing storage with theta."""
    dims = layer_dims(spec)
    out = []
    off = 0
    for l in range(len(dims) - 1):
        m, n = dims[l], dims[l + 1]
        W = theta[off:off + n * m].reshape(n, m)
        off += n * m
        b = theta[off:off + n]
        off += n
        out.append((W, b))
    return out


def pack_params(spec, mats):
    """Flat parameter vector from a list of (W, b) pairs."""
    dims = layer_dims(spec)
    theta = np.empty(param_count(spec))
    off = 0
    for l, (W, b) in enumerate(mats):
        m, n = dims[l], dims[l + 1]
        if W.shape != (n, m) or b.shape != (n,):
            raise ValueError(f"layer {l}: expected shapes {(n, m)}/{(n,)}, "
                             f"got {W.shape}/{b.shape}")
        theta[off:off + n * m] = np.asarray(W, dtype=np.float64).ravel()
        off += n * m
        theta[off:off + n] = b
        off += n
    return theta


def _check_theta(spec, theta):
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size != param_count(spec):
        raise ValueError(f"parameter vector has length {theta.size}, "
                         f"spec needs {param_count(spec)}")
    return theta


def forward_jac_many(spec, theta, X, want_jac=True):
    """Batched forward pass.

    X: (N, input_dim).  Returns (Y, J) with Y (N, output_dim) and
    J (N, output_dim, input_dim), J is None when want_jac is false.
    """
    theta = _check_theta(spec, theta)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"points have dimension {X.shape}, expected (N, {spec.input_dim})")
    dims, acts, actp = _layout(spec)
    Y, J = backend.kernels().forward_many(theta, dims, acts, actp, X, want_jac)
    return (Y, J) if want_jac else (Y, None)


def forward_jac(spec, theta, x, want_jac=True):
    """Value and exact input jacobian at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    Y, J = forward_jac_many(spec, theta, x[None, :], want_jac=want_jac)
    return PointEval(y=Y[0], jac=J[0] if want_jac else None)


def forward_with_stash(spec, theta, X, want_jac=True):
    """Batched forward pass that also returns the backend-private stash
    consumed by pullback_from_stash (avoids re-evaluating activations)."""
    theta = _check_theta(spec, theta)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"points have dimension {X.shape}, expected (N, {spec.input_dim})")
    dims, acts, actp = _layout(spec)
    Y, J, stash = backend.kernels().forward_stash_many(theta, dims, acts, actp,
                                                       X, want_jac)
    return Y, (J if want_jac else None), stash


def pullback_from_stash(spec, theta, stash, cot_y, cot_jac=None):
    """Parameter gradient from a stash recorded by forward_with_stash.

    The stash must come from the same (spec, theta, X) and from a call with
    want_jac=True whenever cot_jac is given.
    """
    theta = _check_theta(spec, theta)
    N = cot_y.shape[0]
    cot_y = np.ascontiguousarray(cot_y, dtype=np.float64)
    if cot_y.shape != (N, spec.output_dim):
        raise ValueError(f"cot_y shape {cot_y.shape} != {(N, spec.output_dim)}")
    use_jac = cot_jac is not None
    if use_jac:
        cot_jac = np.ascontiguousarray(cot_jac, dtype=np.float64)
        if cot_jac.shape != (N, spec.output_dim, spec.input_dim):
            raise ValueError(f"cot_jac shape {cot_jac.shape} != "
                             f"{(N, spec.output_dim, spec.input_dim)}")
    else:
        cot_jac = np.empty((0, 0, 0))
    dims, acts, actp = _layout(spec)
    return backend.kernels().pullback_stash_many(theta, dims, acts, actp, stash,
                                                 cot_y, cot_jac, use_jac)


def pullback_many(spec, theta, X, cot_y, cot_jac=None):
    """Parameter gradient of sum_p <cot_y[p], y_p> + <cot_jac[p], jac_p>.

    For heaviside layers the value-chain derivative is the straight-through
    window (1/c) 1_[0,c](z); the jacobian chain through such layers is
    identically zero, matching the forward convention.
    """
    theta = _check_theta(spec, theta)
    X = np.ascontiguousarray(X, dtype=np.float64)
    N = X.shape[0]
    cot_y = np.ascontiguousarray(cot_y, dtype=np.float64)
    if cot_y.shape != (N, spec.output_dim):
        raise ValueError(f"cot_y shape {cot_y.shape} != {(N, spec.output_dim)}")
    use_jac = cot_jac is not None
    if use_jac:
        cot_jac = np.ascontiguousarray(cot_jac, dtype=np.float64)
        if cot_jac.shape != (N, spec.output_dim, spec.input_dim):
            raise ValueError(f"cot_jac shape {cot_jac.shape} != "
                             f"{(N, spec.output_dim, spec.input_dim)}")
    else:
        cot_jac = np.empty((0, 0, 0))
    dims, acts, actp = _layout(spec)
    return backend.kernels().pullback_many(theta, dims, acts, actp, X,
                                           cot_y, cot_jac, use_jac)


def pullback(spec, theta, x, cot_y, cot_jac=None):
    """Single-point pullback; see pullback_many."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    cot_y = np.asarray(cot_y, dtype=np.float64).reshape(1, spec.output_dim)
    if cot_jac is not None:
        cot_jac = np.asarray(cot_jac, dtype=np.float64).reshape(
            1, spec.output_dim, spec.input_dim)
    return pullback_many(spec, theta, x[None, :], cot_y, cot_jac)


def act_eval(act, z):
    """Exact value and training derivative of one activation at scalar z.

    The training derivative is what the pullback uses on the value chain:
    the STE window for heaviside, the true derivative otherwise.
    """
    from ._kernels_numpy import _act_value_d1, _act_train_d1
    code = _KIND_CODES[act.kind]
    zarr = np.asarray([float(z)])
    val, _ = _act_value_d1(code, act.param, zarr)
    d1 = _act_train_d1(code, act.param, zarr)
    return float(val[0]), float(d1[0])


# -- checkpoint format --------------------------------------------------
#
# A checkpoint is a JSON document with the architecture metadata and the
# flat parameter list; parameters are written with 17 significant digits,
# which round-trips float64 exactly.

_CHECKPOINT_KIND = "fosls-network-checkpoint"


def save_checkpoint(path, spec, theta):
    theta = _check_theta(spec, theta)
    lines = []
    lines.append("{")
    lines.append(f'  "kind": "{_CHECKPOINT_KIND}",')
    lines.append('  "version": 1,')
    lines.append(f'  "hnn": {"true" if isinstance(spec, HnnSpec) else "false"},')
    lines.append(f'  "input_dim": {spec.input_dim},')
    lines.append(f'  "output_dim": {spec.output_dim},')
    layer_objs = []
    for width, act in spec.layers:
        layer_objs.append(
            '{"width": %d, "activation": "%s", "param": %s}'
            % (width, act.kind, format(act.param, ".17g")))
    lines.append('  "layers": [%s],' % ", ".join(layer_objs))
    lines.append('  "params": [%s]' % ", ".join(format(v, ".17g") for v in theta))
    lines.append("}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    import json

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != _CHECKPOINT_KIND:
        raise ValueError(f"{path}: not a network checkpoint")
    layers = []
    for entry in doc["layers"]:
        kind = entry["activation"]
        p = float(entry.get("param", 0.0))
        if kind == "softplus":
            act = Activation(kind, beta=p)
        elif kind == "heaviside":
            act = Activation(kind, c=p)
        else:
            act = Activation(kind)
        layers.append((int(entry["width"]), act))
    cls = HnnSpec if doc.get("hnn") else NetworkSpec
    spec = cls(input_dim=int(doc["input_dim"]), layers=tuple(layers),
               output_dim=int(doc["output_dim"]))
    theta = np.asarray(doc["params"], dtype=np.float64)
    return spec, _check_theta(spec, theta)
