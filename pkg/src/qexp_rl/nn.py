"""Dense ReLU network with exact manual backpropagation, Adam, and Polyak
target averaging. Everything is double precision numpy; parameters are
value-copied between owners and mutated only by their owning training loop.

Checkpoint format: numpy ``.npz`` archive holding one ``<name>.w<i>`` /
``<name>.b<i>`` array per layer (shape headers are the stored array shapes)
plus a ``meta`` JSON blob with a format version and the layer sizes.
"""

import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    """Per-layer weight matrices (in, out) and bias vectors; ReLU hidden."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("bias shape must match weight columns")
        for wa, wb in zip(self.weights[:-1], self.weights[1:]):
            if wa.shape[1] != wb.shape[0]:
                raise ValueError("layer dimensions must chain consistently")

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def mlp_init(layer_sizes, rng) -> MlpParams:
    """Uniform fan-in initialization: entries ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in))."""
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(1.0 / n_in)
        weights.append(rng.gen.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(rng.gen.uniform(-bound, bound, size=n_out))
    return MlpParams(weights, biases)


def mlp_forward(params: MlpParams, x):
    """Forward pass; returns (output, tape). x is (in,) or (batch, in)."""
    single = np.ndim(x) == 1
    h = np.atleast_2d(np.asarray(x, dtype=float))
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError("input width does not match the first layer")
    tape = [h]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        tape.append(h)
    return (h[0] if single else h), tape


def mlp_backward(params: MlpParams, tape, output_gradient):
    """Exact gradients of <output_gradient, output> w.r.t. parameters and input.

    Returns ((weight_grads, bias_grads), input_gradient); batch rows are
    summed, so pass an already-scaled output_gradient for means.
    """
    delta = np.atleast_2d(np.asarray(output_gradient, dtype=float))
    if delta.shape != tape[-1].shape:
        raise ValueError("output gradient shape mismatch")
    single = np.ndim(output_gradient) == 1
    w_grads = [None] * len(params.weights)
    b_grads = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        w_grads[i] = tape[i].T @ delta
        b_grads[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
        if i > 0:
            delta = delta * (tape[i] > 0.0)
    return (w_grads, b_grads), (delta[0] if single else delta)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    v_b: list = field(default_factory=list)


def adam_init(params: MlpParams, lr, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps,
        m_w=[np.zeros_like(w) for w in params.weights],
        m_b=[np.zeros_like(b) for b in params.biases],
        v_w=[np.zeros_like(w) for w in params.weights],
        v_b=[np.zeros_like(b) for b in params.biases],
    )


def adam_step(params: MlpParams, grads, state: AdamState):
    """Bias-corrected Adam update, in place on params and state."""
    w_grads, b_grads = grads
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for lists in ((params.weights, w_grads, state.m_w, state.v_w),
                  (params.biases, b_grads, state.m_b, state.v_b)):
        for p, g, m, v in zip(*lists):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def polyak_update(target: MlpParams, online: MlpParams, alpha: float):
    """target <- (1 - alpha) target + alpha online, elementwise, in place."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    for t, o in zip(target.weights + target.biases, online.weights + online.biases):
        if t.shape != o.shape:
            raise ValueError("target and online parameter shapes differ")
        t *= 1.0 - alpha
        t += alpha * o


def grads_zeros_like(params: MlpParams):
    return ([np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases])


def grads_add(acc, grads, scale=1.0):
    for a, g in zip(acc[0], grads[0]):
        a += scale * g
    for a, g in zip(acc[1], grads[1]):
        a += scale * g
    return acc


def save_checkpoint(path, named_params: dict, meta: dict | None = None):
    """Write named networks plus metadata to an .npz archive."""
    arrays = {}
    sizes = {}
    for name, params in named_params.items():
        sizes[name] = params.layer_sizes
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            arrays[f"{name}.w{i}"] = w
            arrays[f"{name}.b{i}"] = b
    blob = {"version": CHECKPOINT_VERSION, "layer_sizes": sizes, "meta": meta or {}}
    arrays["meta"] = np.frombuffer(json.dumps(blob).encode("utf8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Read back (named_params, meta) written by save_checkpoint."""
    with np.load(path) as data:
        blob = json.loads(bytes(data["meta"].tobytes()).decode("utf8"))
        if blob["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {blob['version']}")
        named = {}
        for name, sizes in blob["layer_sizes"].items():
            n_layers = len(sizes) - 1
            named[name] = MlpParams(
                [data[f"{name}.w{i}"] for i in range(n_layers)],
                [data[f"{name}.b{i}"] for i in range(n_layers)],
            )
    return named, blob["meta"]
