"""
Dense tensors with reverse-mode differentiation

A deliberately small core: every operation records a closure that maps the
output gradient to its inputs' gradients, and ``Tensor.backward`` replays them
in reverse topological order. Values are float64 and checked for NaN/inf after
every operation.
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AffordLabError

logger = logging.getLogger(__name__)

#: Negative slope of leaky ReLU.
LEAKY_SLOPE = 0.01

SNAPSHOT_MAGIC = b"AFFL"
SNAPSHOT_VERSION = 1


class ShapeMismatch(AffordLabError):
    pass


class EmptyGraph(AffordLabError):
    pass


class NonFiniteValue(AffordLabError):
    """Raised when an operation produces NaN or inf"""
    pass


class SnapshotError(AffordLabError):
    pass


ArrayLike = Union[np.ndarray, float, Sequence[float]]


class Tensor:
    """A float64 array node in the computation graph"""

    def __init__(self, values: ArrayLike, parents: Tuple["Tensor", ...] = (),
                 backward_fn: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None,
                 op: str = ""):
        values = np.array(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f"Non-finite value produced by {op or 'input'}")
        self.values = values
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward_fn = backward_fn
        self.op = op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeMismatch(f"item() needs a single value, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    def backward(self):
        """Populate ``grad`` on every leaf reachable from this scalar"""
        if self.values.size != 1:
            raise ShapeMismatch(f"backward() needs a scalar, got shape {self.shape}")
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.values)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward_fn(g)):
                if pg is not None:
                    grads[id(parent)] = grads[id(parent)] + pg if id(parent) in grads else pg


class Parameter(Tensor):
    """Trainable leaf with Adam moment buffers"""

    def __init__(self, values: ArrayLike, name: str = ""):
        super().__init__(values, op="parameter")
        self.name = name
        self.grad = np.zeros_like(self.values)
        self.adam_m = np.zeros_like(self.values)
        self.adam_v = np.zeros_like(self.values)

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def assign(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ShapeMismatch(f"{self.name}: expected {self.values.shape}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f"Non-finite value assigned to {self.name}")
        # in place: an optimizer may hold this array as a view of its flat buffer
        self.values[...] = values


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, op="constant")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.values + b.values, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.values - b.values, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.values * b.values, (a, b),
                  lambda g: (_unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)), "mul")


def neg(a) -> Tensor:
    a = _wrap(a)
    return Tensor(-a.values, (a,), lambda g: (-g,), "neg")


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return Tensor(a.values @ b.values, (a, b),
                  lambda g: (g @ b.values.T, a.values.T @ g), "matmul")


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = a.shape
    return Tensor(a.values.reshape(shape), (a,), lambda g: (g.reshape(original),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    try:
        values = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatch(f"concat: {e}")
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return Tensor(values, tuple(tensors), lambda g: tuple(np.split(g, sizes, axis=axis)), "concat")


def take_rows(a: Tensor, rows: Sequence[int]) -> Tensor:
    idx = np.asarray(rows, dtype=int)

    def backward(g):
        full = np.zeros_like(a.values)
        np.add.at(full, idx, g)
        return (full,)
    return Tensor(a.values[idx], (a,), backward, "take_rows")


def broadcast_rows(a: Tensor, n: int) -> Tensor:
    """Repeat a vector ``n`` times as the rows of a matrix"""
    if a.values.ndim != 1:
        raise ShapeMismatch(f"broadcast_rows expects a vector, got {a.shape}")
    return Tensor(np.tile(a.values, (n, 1)), (a,), lambda g: (g.sum(axis=0),), "broadcast_rows")


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.values.size if axis is None else a.shape[axis]

    def backward(g):
        g = g if axis is None else np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / count,)
    return Tensor(a.values.mean(axis=axis), (a,), backward, "mean")


def max_rows(a: Tensor) -> Tensor:
    """Column-wise max; the gradient goes to the first maximal row"""
    arg = np.argmax(a.values, axis=0)
    cols = np.arange(a.shape[1])

    def backward(g):
        full = np.zeros_like(a.values)
        full[arg, cols] = g
        return (full,)
    return Tensor(a.values[arg, cols], (a,), backward, "max_rows")


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    scale = np.where(a.values > 0, 1.0, slope)
    return Tensor(a.values * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def relu(a: Tensor) -> Tensor:
    mask = (a.values > 0).astype(np.float64)
    return Tensor(a.values * mask, (a,), lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.values))
    return Tensor(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

def linear_forward(x: Tensor, weights: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map ``x @ W + b`` for an (n, d_in) input"""
    x = _wrap(x)
    if x.values.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeMismatch(f"linear: input {x.shape} does not match weights {weights.shape}")
    out = matmul(x, weights)
    if bias is not None:
        if bias.shape != (weights.shape[1],):
            raise ShapeMismatch(f"linear: bias {bias.shape} does not match weights {weights.shape}")
        out = add(out, bias)
    return out


@dataclass(frozen=True, eq=False)
class AdjacencyNorm:
    """Symmetrically normalized adjacency with self-loops"""
    n: int
    matrix: np.ndarray

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]]) -> "AdjacencyNorm":
        """Build from directed 0-based edges; direction is dropped"""
        a = np.eye(n)
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ShapeMismatch(f"Edge ({i}, {j}) outside a {n}-node graph")
            a[i, j] = a[j, i] = 1.0
        d = 1.0 / np.sqrt(a.sum(axis=1))
        return cls(n, d[:, None] * a * d[None, :])


def graph_conv_forward(node_feats: Tensor, adj: AdjacencyNorm, weights: Tensor,
                       bias: Optional[Tensor] = None) -> Tensor:
    """Neighborhood mixing ``A_hat @ X @ W``; activation is the caller's"""
    if node_feats.shape[0] != adj.n:
        raise ShapeMismatch(f"graph conv: {node_feats.shape[0]} nodes but adjacency of size {adj.n}")
    return matmul(Tensor(adj.matrix, op="adjacency"), linear_forward(node_feats, weights, bias))


def aggregate_mean_max(node_embeddings: Tensor) -> Tensor:
    """Concatenate column means and column maxima into one vector"""
    if node_embeddings.shape[0] == 0:
        raise EmptyGraph("Cannot aggregate an empty graph")
    return concat([mean(node_embeddings, axis=0), max_rows(node_embeddings)], axis=0)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _check_same_shape(pred: Tensor, target: np.ndarray, name: str):
    if pred.shape != np.shape(target):
        raise ShapeMismatch(f"{name}: prediction {pred.shape} vs target {np.shape(target)}")


def mse_loss(pred: Tensor, target: ArrayLike) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    _check_same_shape(pred, target, "mse_loss")
    diff = sub(pred, target)
    return mean(mul(diff, diff))


def sign_loss(pred: Tensor, target: ArrayLike) -> Tensor:
    """Hinge on sign disagreement; zero targets contribute nothing"""
    target = np.asarray(target, dtype=np.float64)
    _check_same_shape(pred, target, "sign_loss")
    return mean(relu(neg(mul(pred, np.sign(target)))))


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

def adam_step(params: Iterable[Parameter], lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, t: int = 1):
    """One bias-corrected Adam update; ``t`` is the 1-based step count"""
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        p.adam_m[...] = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v[...] = beta2 * p.adam_v + (1.0 - beta2) * g * g
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.assign(p.values - lr * m_hat / (np.sqrt(v_hat) + eps))


def lr_schedule(step: int, base_lr: float = 1e-4, gamma: float = 0.95, step_size: int = 500) -> float:
    return base_lr * gamma ** (step // step_size)


class Adam:
    """Adam over one flat buffer; parameter values and moments become views into it"""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-4, gamma: float = 0.95,
                 step_size: int = 500, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.base_lr = lr
        self.gamma = gamma
        self.step_size = step_size
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.schedule_steps = 0

        total = sum(p.values.size for p in self.params)
        self._values = np.empty(total)
        self._m = np.zeros(total)
        self._v = np.zeros(total)
        self._grad = np.zeros(total)
        offset = 0
        for p in self.params:
            n = p.values.size
            self._values[offset:offset + n] = p.values.reshape(-1)
            self._m[offset:offset + n] = p.adam_m.reshape(-1)
            self._v[offset:offset + n] = p.adam_v.reshape(-1)
            p.values = self._values[offset:offset + n].reshape(p.values.shape)
            p.adam_m = self._m[offset:offset + n].reshape(p.values.shape)
            p.adam_v = self._v[offset:offset + n].reshape(p.values.shape)
            offset += n

    @property
    def lr(self) -> float:
        return lr_schedule(self.schedule_steps, self.base_lr, self.gamma, self.step_size)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        """Same update as adam_step, done once on the flat buffer"""
        self.t += 1
        if not self.params:
            return
        grads = [p.grad.reshape(-1) if p.grad is not None else np.zeros(p.values.size)
                 for p in self.params]
        np.concatenate(grads, out=self._grad)
        beta1, beta2 = self.betas
        self._m *= beta1
        self._m += (1.0 - beta1) * self._grad
        self._v *= beta2
        self._v += (1.0 - beta2) * self._grad * self._grad
        m_hat = self._m / (1.0 - beta1 ** self.t)
        v_hat = self._v / (1.0 - beta2 ** self.t)
        self._values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if not np.all(np.isfinite(self._values)):
            raise NonFiniteValue("Non-finite parameter after Adam step")

    def schedule_step(self):
        self.schedule_steps += 1


# ---------------------------------------------------------------------------
# Modules
# ---------------------------------------------------------------------------

def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Module:
    """Container whose Parameter and Module attributes form a named tree"""

    def parameters(self) -> Dict[str, Parameter]:
        found: Dict[str, Parameter] = {}
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                found[name] = value
            elif isinstance(value, Module):
                for sub_name, p in value.parameters().items():
                    found[f"{name}.{sub_name}"] = p
            elif isinstance(value, (list, tuple)) and value and isinstance(value[0], Module):
                for i, module in enumerate(value):
                    for sub_name, p in module.parameters().items():
                        found[f"{name}.{i}.{sub_name}"] = p
        return found

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise SnapshotError(f"Snapshot lacks parameters: {sorted(missing)}")
        for name, p in params.items():
            p.assign(state[name])


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.weight = Parameter(glorot(rng, fan_in, fan_out), "weight")
        self.bias = Parameter(np.zeros(fan_out), "bias")

    def __call__(self, x: Tensor) -> Tensor:
        return linear_forward(x, self.weight, self.bias)


class GraphConv(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.weight = Parameter(glorot(rng, fan_in, fan_out), "weight")
        self.bias = Parameter(np.zeros(fan_out), "bias")

    def __call__(self, x: Tensor, adj: AdjacencyNorm) -> Tensor:
        return graph_conv_forward(x, adj, self.weight, self.bias)


def count_parameters(params: Union[Module, Iterable[Parameter]]) -> int:
    if isinstance(params, Module):
        params = params.parameters().values()
    return int(sum(p.values.size for p in params))


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-6,
              atol: float = 1e-8) -> float:
    """Largest relative error between backward() and central differences

    Components whose absolute disagreement is within ``atol`` count as exact;
    that is the rounding floor of the difference quotient.
    """
    for t in inputs:
        t.grad = None
    fn().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.values) for t in inputs]
    worst = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.values.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = fn().item()
            flat[i] = original - h
            down = fn().item()
            flat[i] = original
            numeric = (up - down) / (2 * h)
            exact = a.reshape(-1)[i]
            diff = abs(exact - numeric)
            if diff <= atol:
                continue
            worst = max(worst, diff / max(abs(exact) + abs(numeric), 1e-8))
    return worst


# ---------------------------------------------------------------------------
# Array passes
#
# Training runs these instead of the Tensor graph: same arithmetic, no node
# bookkeeping. Gradients land in each Parameter's ``grad``.
# ---------------------------------------------------------------------------

def leaky(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return x * np.where(x > 0, 1.0, slope)


def leaky_grad(grad: np.ndarray, pre: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return grad * np.where(pre > 0, 1.0, slope)


def logistic(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


LayerCache = List[Tuple[np.ndarray, np.ndarray]]


def mlp_forward(layers: Sequence[Linear], x: np.ndarray) -> Tuple[np.ndarray, LayerCache]:
    """Linear layers with leaky ReLU between them (none after the last)"""
    cache: LayerCache = []
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        pre = x @ layer.weight.values + layer.bias.values
        cache.append((x, pre))
        x = pre if i == last else leaky(pre)
    return x, cache


def mlp_backward(layers: Sequence[Linear], cache: LayerCache, grad: np.ndarray) -> np.ndarray:
    """Fill layer gradients from d(loss)/d(output); returns d(loss)/d(input)"""
    last = len(layers) - 1
    for i in range(last, -1, -1):
        layer = layers[i]
        x, pre = cache[i]
        if i != last:
            grad = leaky_grad(grad, pre)
        layer.weight.grad = x.T @ grad
        layer.bias.grad = grad.sum(axis=0)
        grad = grad @ layer.weight.values.T
    return grad


def mse_sign_grad(pred: np.ndarray, target: np.ndarray,
                  sign_weight: float = 0.0) -> Tuple[float, np.ndarray]:
    """Value and gradient of ``mse_loss + sign_weight * sign_loss``"""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"loss: prediction {pred.shape} vs target {target.shape}")
    n = pred.size
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / n
    if sign_weight:
        signs = np.sign(target)
        hinge = -pred * signs
        active = hinge > 0
        loss += sign_weight * float(np.sum(hinge[active])) / n
        grad = grad - sign_weight * np.where(active, signs, 0.0) / n
    if not np.isfinite(loss):
        raise NonFiniteValue("Non-finite training loss")
    return loss, grad


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.json')


def save_snapshot(path: Union[str, Path], state: Dict[str, np.ndarray], metadata: Dict) -> Path:
    """Write parameters as a flat little-endian float64 file plus a JSON sidecar"""
    path = Path(path)
    manifest = [{'name': name, 'shape': list(np.shape(values))} for name, values in state.items()]
    header = json.dumps({'layers': manifest}, separators=(',', ':')).encode('utf-8')
    with open(path, 'wb') as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack('<II', SNAPSHOT_VERSION, len(header)))
        f.write(header)
        for values in state.values():
            f.write(np.ascontiguousarray(values, dtype='<f8').tobytes())
    with open(sidecar_path(path), 'w') as f:
        json.dump(metadata, f, indent=2, sort_keys=True)
    logger.debug("Saved %d arrays to %s", len(state), path)
    return path


def load_snapshot(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise SnapshotError(f"Snapshot not found: {path}")
    if data[:4] != SNAPSHOT_MAGIC:
        raise SnapshotError(f"{path} is not a parameter snapshot")
    version, header_len = struct.unpack('<II', data[4:12])
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version}")
    manifest = json.loads(data[12:12 + header_len].decode('utf-8'))['layers']
    offset = 12 + header_len
    state: Dict[str, np.ndarray] = {}
    for entry in manifest:
        shape = tuple(entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise SnapshotError(f"{path} is truncated at {entry['name']}")
        state[entry['name']] = np.frombuffer(data[offset:end], dtype='<f8').reshape(shape).copy()
        offset = end
    metadata: Dict = {}
    side = sidecar_path(path)
    if side.exists():
        metadata = json.loads(side.read_text())
    return state, metadata
