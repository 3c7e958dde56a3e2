""" A small reverse-mode autodiff kernel over numpy

Enough to train the base classifiers and the noise parameter generators on a
CPU: tensors record the ops that produced them, ``Tensor.backward`` walks the
graph in reverse topological order.

Catalog
1. Tensor + functional ops (conv2d, softmax, logsumexp, cross_entropy, ...)
2. Modules: Dense, Conv2d, LeakyRelu, Tanh, AmplifiedTanh, Softmax, Sequential
3. forward / backward over a module, Adam
4. Checkpoints: versioned text format, modules rebuilt through ModuleFactory
"""
import json
import logging
import threading
from abc import ABC, abstractmethod
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Type

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ShapeMismatchError, ForwardNotRecordedError, CheckpointFormatError
from ..enums import LayerKind
from ..models.data_models import LayerSpec
from ..utils import RandomState, as_rng

logger = logging.getLogger(__name__)

LEAKY_RELU_SLOPE = 0.01
CHECKPOINT_MAGIC = "aniscert-model"
CHECKPOINT_VERSION = 1

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """ Disables graph recording in the current thread """
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """ Sums a broadcast gradient back down to shape """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor(object):
    """ An array with an optional gradient and the op that produced it

    Fields:
        data: np.ndarray
        grad: Optional[np.ndarray], same shape as data
        requires_grad: bool
    """
    # ndarray <op> Tensor defers to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data: Any, requires_grad: bool = False,
                 parents: Tuple["Tensor", ...] = (),
                 backward_fn: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward_fn = backward_fn

    @classmethod
    def parameter(cls, data: Any) -> "Tensor":
        return cls(np.array(data, dtype=np.float64), requires_grad=True)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad: Any = None) -> None:
        """ Accumulates d(self)/d(leaf) * grad into every leaf that requires grad """
        if grad is None:
            grad = np.ones_like(self.data)
        grad = np.broadcast_to(np.asarray(grad, dtype=np.float64), self.shape).copy()

        order: List[Tensor] = []
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        pending: Dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward_fn is None:
                if node.requires_grad:
                    node.grad = node_grad if node.grad is None else node.grad + node_grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward_fn(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + parent_grad
                else:
                    pending[id(parent)] = parent_grad

    # arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return _make(self.data + other.data, (self, other),
                     lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)))

    __radd__ = __add__

    def __neg__(self):
        return _make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return _make(a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return _make(a.data / b.data, (a, b),
                     lambda g: (_unbroadcast(g / b.data, a.shape),
                                _unbroadcast(-g * a.data / (b.data ** 2), b.shape)))

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeMismatchError("matmul needs two matrices")
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatchError(f"cannot multiply {a.shape} by {b.shape}")
        return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))

    # elementwise

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return _make(out, (self,), lambda g: (g * (1.0 - out ** 2),))

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return _make(out, (self,), lambda g: (g * out,))

    def log(self) -> "Tensor":
        x = self.data
        return _make(np.log(x), (self,), lambda g: (g / x,))

    def leaky_relu(self, slope: float = LEAKY_RELU_SLOPE) -> "Tensor":
        x = self.data
        return _make(np.where(x > 0, x, slope * x), (self,),
                     lambda g: (np.where(x > 0, g, slope * g),))

    # reductions and shapes

    def sum(self, axis: Optional[Any] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis: Optional[Any] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        original = self.shape
        return _make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(original),))


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: Tuple[Tensor, ...],
          backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    peak = np.max(x.data, axis=axis, keepdims=True)
    shifted = np.exp(x.data - peak)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.log(total) + peak
    weights = shifted / total

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * weights,)

    return _make(out if keepdims else np.squeeze(out, axis=axis), (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = np.exp(x.data - np.max(x.data, axis=axis, keepdims=True))
    out = shifted / shifted.sum(axis=axis, keepdims=True)
    return _make(out, (x,),
                 lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),))


def cross_entropy(logits: Tensor, labels: Any, reduction: str = "mean") -> Tensor:
    """ -log softmax(logits)[label], fused so the gradient is exactly (probs - onehot) """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"cross entropy needs (N, C) logits and N labels, got "
                                 f"{logits.shape} and {labels.shape}")
    rows = np.arange(labels.shape[0])
    shifted = logits.data - np.max(logits.data, axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    losses = -log_probs[rows, labels]
    probs = np.exp(log_probs)
    scale = 1.0 / labels.shape[0] if reduction == "mean" else 1.0

    def backward(g):
        grad = probs.copy()
        grad[rows, labels] -= 1.0
        return (grad * g * scale,)

    total = losses.mean() if reduction == "mean" else losses.sum()
    return _make(np.asarray(total), (logits,), backward)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """ Stride-1 convolution with zero padding that keeps the spatial size

    x: (N, C_in, H, W), weight: (C_out, C_in, k, k) with k odd.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatchError("conv2d needs (N, C, H, W) input and (O, C, k, k) weight")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(
            f"conv2d input has {x.shape[1]} channels, weight expects {weight.shape[1]}")
    k = weight.shape[2]
    pad = k // 2
    height, width = x.shape[2], x.shape[3]
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))
    out = np.einsum("nchwij,ocij->nohw", windows, weight.data)
    parents: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
        parents = parents + (bias,)

    def backward(g):
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                grad_padded[:, :, i:i + height, j:j + width] += np.einsum(
                    "nohw,oc->nchw", g, weight.data[:, :, i, j])
        grad_x = grad_padded[:, :, pad:pad + height, pad:pad + width]
        grad_w = np.einsum("nchwij,nohw->ocij", windows, g)
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _make(out, parents, backward)


class Module(ABC):
    """ Base for layers and networks

    Parameters are exposed as a flat, ordered {name: Tensor} mapping.
    """
    module_name = "module"

    def parameters(self) -> Dict[str, Tensor]:
        return {}

    @abstractmethod
    def __call__(self, x: Tensor) -> Tensor:
        return NotImplemented

    def config(self) -> Dict[str, Any]:
        return {}

    def zero_grad(self) -> None:
        for tensor in self.parameters().values():
            tensor.zero_grad()

    def state(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.parameters().items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        parameters = self.parameters()
        if set(parameters) != set(state):
            raise CheckpointFormatError(
                f"parameter names differ: expected {sorted(parameters)}, got {sorted(state)}")
        for name, tensor in parameters.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise CheckpointFormatError(
                    f"parameter {name} has shape {value.shape}, expected {tensor.shape}")
            tensor.data = value.copy()

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """ Forward pass without graph recording; safe on a frozen model from many threads """
        with no_grad():
            return self(Tensor(inputs)).data


class Layer(Module):

    def __init__(self, spec: LayerSpec) -> None:
        self._spec = spec

    @property
    def spec(self) -> LayerSpec:
        return self._spec


class Dense(Layer):
    """ y = x W + b with Glorot-uniform W and zero b """

    def __init__(self, spec: LayerSpec, rng: RandomState = 0) -> None:
        super().__init__(spec)
        fan_in, fan_out = spec.params["in_features"], spec.params["out_features"]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.weight = Tensor.parameter(as_rng(rng).uniform(-limit, limit, (fan_in, fan_out)))
        self.bias = Tensor.parameter(np.zeros(fan_out))

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def __call__(self, x):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ShapeMismatchError(
                f"dense layer expects (N, {self.weight.shape[0]}) input, got {x.shape}")
        return x @ self.weight + self.bias


class Conv2d(Layer):

    def __init__(self, spec: LayerSpec, rng: RandomState = 0) -> None:
        super().__init__(spec)
        in_channels = spec.params["in_channels"]
        out_channels = spec.params["out_channels"]
        k = spec.params.get("kernel_size", 3)
        if k % 2 == 0:
            raise ShapeMismatchError("conv2d kernel size must be odd to keep the spatial size")
        limit = np.sqrt(6.0 / ((in_channels + out_channels) * k * k))
        self.weight = Tensor.parameter(
            as_rng(rng).uniform(-limit, limit, (out_channels, in_channels, k, k)))
        self.bias = Tensor.parameter(np.zeros(out_channels))

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias)


class LeakyRelu(Layer):

    def __call__(self, x):
        return x.leaky_relu(LEAKY_RELU_SLOPE)


class Tanh(Layer):

    def __call__(self, x):
        return x.tanh()


class AmplifiedTanh(Layer):
    """ gamma * tanh(x) """

    def __call__(self, x):
        return x.tanh() * self._spec.gamma


class Softmax(Layer):

    def __call__(self, x):
        return softmax(x, axis=-1)


class LayerFactory(object):
    """ Builds layers from their LayerSpec """

    __layers__: Dict[LayerKind, Type[Layer]] = {
        LayerKind.DENSE: Dense,
        LayerKind.CONV2D: Conv2d,
        LayerKind.LEAKY_RELU: LeakyRelu,
        LayerKind.TANH: Tanh,
        LayerKind.AMPLIFIED_TANH: AmplifiedTanh,
        LayerKind.SOFTMAX: Softmax,
    }
    __seeded__ = (LayerKind.DENSE, LayerKind.CONV2D)

    @classmethod
    def create(cls, spec: LayerSpec, rng: RandomState = 0) -> Layer:
        layer_cls = cls.__layers__[spec.kind]
        if spec.kind in cls.__seeded__:
            return layer_cls(spec, rng)
        return layer_cls(spec)


class Sequential(Module):
    module_name = "sequential"

    def __init__(self, layers: Iterable[Layer]) -> None:
        self.layers = list(layers)

    @classmethod
    def from_specs(cls, specs: Iterable[LayerSpec], seed: RandomState = 0) -> "Sequential":
        rng = as_rng(seed)
        return cls([LayerFactory.create(spec, rng) for spec in specs])

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "Sequential":
        return cls.from_specs([LayerSpec.parse_obj(spec) for spec in config["layers"]])

    def config(self):
        return {"layers": [json.loads(layer.spec.json()) for layer in self.layers]}

    def parameters(self):
        named = {}
        for index, layer in enumerate(self.layers):
            for name, tensor in layer.parameters().items():
                named[f"{index}.{name}"] = tensor
        return named

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def mlp(sizes: Sequence[int], seed: RandomState = 0,
        activation: LayerKind = LayerKind.LEAKY_RELU,
        output_activation: Optional[LayerSpec] = None) -> Sequential:
    """ Dense stack; every hidden layer is followed by the activation """
    specs: List[LayerSpec] = []
    for index, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        specs.append(LayerSpec(kind=LayerKind.DENSE,
                               params={"in_features": fan_in, "out_features": fan_out}))
        if index < len(sizes) - 2:
            specs.append(LayerSpec(kind=activation))
    if output_activation is not None:
        specs.append(output_activation)
    return Sequential.from_specs(specs, seed)


def forward(model: Module, inputs: Any) -> Tensor:
    """ Runs the model and records the output for a later backward call """
    output = model(as_tensor(inputs))
    model._recorded_output = output
    return output


def backward(model: Module, loss_grad: Any) -> Dict[str, np.ndarray]:
    """ Backpropagates loss_grad (d loss / d output) from the recorded forward pass

    Returns:
        {parameter name: gradient}
    """
    output = getattr(model, "_recorded_output", None)
    if output is None:
        raise ForwardNotRecordedError("backward called without a recorded forward pass")
    model._recorded_output = None
    model.zero_grad()
    if output.requires_grad:
        output.backward(loss_grad)
    return {name: tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            for name, tensor in model.parameters().items()}


class AdamState(object):
    """ First and second moment estimates per parameter """

    def __init__(self) -> None:
        self.step = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}


def adam_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], lr: float = 1e-2,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              state: Optional[AdamState] = None) -> AdamState:
    """ One bias-corrected Adam update, applied to params in place """
    state = state or AdamState()
    state.step += 1
    for name, tensor in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != tensor.shape:
            raise ShapeMismatchError(f"gradient for {name} has shape {grad.shape}, expected {tensor.shape}")
        m = state.m.get(name, np.zeros_like(tensor.data))
        v = state.v.get(name, np.zeros_like(tensor.data))
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - beta1 ** state.step)
        v_hat = v / (1.0 - beta2 ** state.step)
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


class Adam(object):
    """ Adam over a fixed parameter mapping """

    def __init__(self, params: Dict[str, Tensor], lr: float = 1e-2, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        self._params = params
        self._lr = lr
        self._beta1 = beta1
        self._beta2 = beta2
        self._eps = eps
        self._state = AdamState()

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def step(self) -> None:
        grads = {name: tensor.grad for name, tensor in self._params.items() if tensor.grad is not None}
        adam_step(self._params, grads, self._lr, self._beta1, self._beta2, self._eps, self._state)


class ModuleFactory(object):
    """ Rebuilds modules from checkpoint headers """

    __modules__: Dict[str, Type[Module]] = {
        Sequential.module_name: Sequential,
    }

    @classmethod
    def create(cls, name: str, config: Dict[str, Any]) -> Module:
        module_cls = cls.__modules__.get(name)
        if module_cls is None:
            raise CheckpointFormatError(f"unknown module kind '{name}'")
        return module_cls.from_config(config)

    @classmethod
    def register(cls, name: str, module_cls: Type[Module]) -> None:
        cls.__modules__[name] = module_cls


def dump_modules(modules: Dict[str, Module], meta: Optional[Dict[str, Any]] = None) -> str:
    """ Serializes named modules

    Layout:
        aniscert-model 1
        header <json: module kinds, configs, meta>
        tensor <module>/<parameter> <comma-separated shape>
        <values, 17 significant digits>
        ...
        end
    """
    header = {
        "modules": {name: {"module": module.module_name, "config": module.config()}
                    for name, module in modules.items()},
        "meta": meta or {},
    }
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", "header " + json.dumps(header, sort_keys=True)]
    for module_key, module in modules.items():
        for name, tensor in module.parameters().items():
            shape = ",".join(str(s) for s in tensor.shape)
            lines.append(f"tensor {module_key}/{name} {shape}")
            lines.append(" ".join("%.17g" % v for v in tensor.data.ravel()))
    lines.append("end")
    return "\n".join(lines) + "\n"


def load_modules(text: str) -> Tuple[Dict[str, Module], Dict[str, Any]]:
    lines = text.splitlines()
    if len(lines) < 3:
        raise CheckpointFormatError("checkpoint is truncated")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("not an aniscert checkpoint")
    if int(magic[1]) != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {magic[1]}")
    if not lines[1].startswith("header "):
        raise CheckpointFormatError("missing checkpoint header")
    try:
        header = json.loads(lines[1][len("header "):])
    except json.JSONDecodeError as e:
        raise CheckpointFormatError(f"bad checkpoint header: {e}")

    states: Dict[str, Dict[str, np.ndarray]] = {key: {} for key in header["modules"]}
    index = 2
    while index < len(lines) and lines[index] != "end":
        fields = lines[index].split()
        if len(fields) != 3 or fields[0] != "tensor" or index + 1 >= len(lines):
            raise CheckpointFormatError(f"malformed tensor record at line {index + 1}")
        module_key, _, name = fields[1].partition("/")
        shape = tuple(int(s) for s in fields[2].split(",") if s)
        values = np.array([float(v) for v in lines[index + 1].split()], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise CheckpointFormatError(f"tensor {fields[1]} has {values.size} values for shape {shape}")
        if module_key not in states:
            raise CheckpointFormatError(f"tensor {fields[1]} belongs to no module")
        states[module_key][name] = values.reshape(shape)
        index += 2
    if index >= len(lines):
        raise CheckpointFormatError("checkpoint is missing its end marker")

    modules = {}
    for key, entry in header["modules"].items():
        module = ModuleFactory.create(entry["module"], entry["config"])
        module.load_state(states[key])
        modules[key] = module
    return modules, header.get("meta", {})


def save_model(model: Module, path: str, meta: Optional[Dict[str, Any]] = None) -> None:
    with open(path, "w") as f:
        f.write(dump_modules({"model": model}, meta))


def load_model(path: str) -> Tuple[Module, Dict[str, Any]]:
    with open(path) as f:
        modules, meta = load_modules(f.read())
    if "model" not in modules:
        raise CheckpointFormatError(f"{path} holds no 'model' entry")
    return modules["model"], meta
