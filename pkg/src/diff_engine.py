"""
Minimal reverse-mode differentiation over numpy arrays, the radius multilayer perceptron and Adam.

Only the operations the primitive pipeline needs are implemented. Every Tensor produced while gradient
recording is enabled keeps its parents and a closure that pushes the upstream gradient back to them;
Tensor.backward() walks the graph in reverse topological order.
"""
from __future__ import annotations

import contextlib
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .exceptions import NumericalError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_LAYER_SIZES = (3, 64, 64, 1)
OUTPUT_BIAS_INIT = 0.3

_grad_enabled = True
_branch_log: list[int] | None = None


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording a graph (inference, meshing, finite differences)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


@contextlib.contextmanager
def branch_recorder() -> Iterator[list[int]]:
    """
    Collect a fingerprint of every data-dependent branch taken while active
    (ReLU masks, clamps, nearest-neighbour assignments, filter masks).
    """
    global _branch_log
    previous = _branch_log
    _branch_log = []
    try:
        yield _branch_log
    finally:
        _branch_log = previous


def record_branch(pattern: np.ndarray) -> None:
    if _branch_log is not None:
        pattern = np.ascontiguousarray(pattern)
        _branch_log.append(hash((pattern.shape, pattern.dtype.str, pattern.tobytes())))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_tensor(value: Any) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """numpy array with an optional gradient and the node that produced it"""

    __array_ufunc__ = None

    def __init__(self, data: Any, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._prev: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = ""

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    @staticmethod
    def _result(data: np.ndarray, parents: tuple["Tensor", ...], op: str,
                backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._prev = parents
            out._backward = backward
            out._op = op
        return out

    # --- arithmetic ---

    def __add__(self, other: Any) -> "Tensor":
        other = _as_tensor(other)

        def backward(grad: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(grad, other.shape))

        return Tensor._result(self.data + other.data, (self, other), "+", backward)

    def __radd__(self, other: Any) -> "Tensor":
        return self + other

    def __neg__(self) -> "Tensor":
        def backward(grad: np.ndarray) -> None:
            self._accumulate(-grad)

        return Tensor._result(-self.data, (self,), "neg", backward)

    def __sub__(self, other: Any) -> "Tensor":
        return self + (-_as_tensor(other))

    def __rsub__(self, other: Any) -> "Tensor":
        return _as_tensor(other) + (-self)

    def __mul__(self, other: Any) -> "Tensor":
        other = _as_tensor(other)

        def backward(grad: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(grad * self.data, other.shape))

        return Tensor._result(self.data * other.data, (self, other), "*", backward)

    def __rmul__(self, other: Any) -> "Tensor":
        return self * other

    def __truediv__(self, other: Any) -> "Tensor":
        other = _as_tensor(other)

        def backward(grad: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-grad * self.data / (other.data * other.data), other.shape))

        return Tensor._result(self.data / other.data, (self, other), "/", backward)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return _as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise ValidationError("only scalar exponents are supported")

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * exponent * self.data ** (exponent - 1))

        return Tensor._result(self.data ** exponent, (self,), f"**{exponent}", backward)

    def __matmul__(self, other: Any) -> "Tensor":
        other = _as_tensor(other)
        if self.ndim != 2 or other.ndim != 2:
            raise ValidationError(f"matmul expects 2D operands, got {self.shape} @ {other.shape}")

        def backward(grad: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(grad @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ grad)

        return Tensor._result(self.data @ other.data, (self, other), "@", backward)

    # --- reductions and shape ---

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        def backward(grad: np.ndarray) -> None:
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            self._accumulate(np.broadcast_to(grad, self.shape))

        return Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum", backward)

    def mean(self, axis: int | None = None) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)

    def reshape(self, *shape: int | tuple[int, ...]) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad.reshape(self.shape))

        return Tensor._result(self.data.reshape(shape), (self,), "reshape", backward)

    def __getitem__(self, index: Any) -> "Tensor":
        def backward(grad: np.ndarray) -> None:
            full = np.zeros_like(self.data)
            np.add.at(full, index, grad)
            self._accumulate(full)

        return Tensor._result(self.data[index], (self,), "getitem", backward)

    # --- elementwise nonlinearities ---

    def relu(self) -> "Tensor":
        active = self.data > 0
        record_branch(active)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * active)

        return Tensor._result(np.where(active, self.data, 0.0), (self,), "relu", backward)

    def sigmoid(self) -> "Tensor":
        value = 0.5 * (1.0 + np.tanh(0.5 * self.data))

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * value * (1.0 - value))

        return Tensor._result(value, (self,), "sigmoid", backward)

    def exp(self) -> "Tensor":
        value = np.exp(self.data)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * value)

        return Tensor._result(value, (self,), "exp", backward)

    def log(self) -> "Tensor":
        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad / self.data)

        return Tensor._result(np.log(self.data), (self,), "log", backward)

    def norm(self, axis: int = -1) -> "Tensor":
        """Euclidean norm along axis; the subgradient at the origin is taken as zero."""
        value = np.sqrt(np.sum(self.data * self.data, axis=axis))

        def backward(grad: np.ndarray) -> None:
            safe = np.where(value > 0, value, 1.0)
            scale = np.where(value > 0, grad / safe, 0.0)
            self._accumulate(np.expand_dims(scale, axis) * self.data)

        return Tensor._result(value, (self,), "norm", backward)

    def clamp_min(self, floor: float) -> "Tensor":
        above = self.data > floor
        record_branch(above)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * above)

        return Tensor._result(np.where(above, self.data, floor), (self,), "clamp_min", backward)

    def clip(self, low: float, high: float) -> "Tensor":
        inside = (self.data > low) & (self.data < high)
        record_branch(inside)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * inside)

        return Tensor._result(np.clip(self.data, low, high), (self,), "clip", backward)

    def masked_fill(self, mask: np.ndarray, value: float) -> "Tensor":
        mask = np.asarray(mask, dtype=bool)
        record_branch(mask)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * ~mask)

        return Tensor._result(np.where(mask, value, self.data), (self,), "masked_fill", backward)

    # --- graph traversal ---

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            grad = np.ones_like(self.data)

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    boundaries = np.cumsum(sizes)[:-1]

    def backward(grad: np.ndarray) -> None:
        for tensor, piece in zip(tensors, np.split(grad, boundaries, axis=axis)):
            if tensor.requires_grad:
                tensor._accumulate(piece)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._result(data, tuple(tensors), "concat", backward)


def parameter(data: Any) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True)


@dataclass
class MlpParams:
    """
    Fully connected ReLU network f_NN: R^3 -> R with a linear output layer

    Attributes:
        layer_sizes (tuple[int, ...]): Units per layer, input first (default 3 -> 64 -> 64 -> 1)
        weights (list[Tensor]): weights[k] has shape (layer_sizes[k], layer_sizes[k+1])
        biases (list[Tensor]): biases[k] has shape (layer_sizes[k+1],)
    """
    layer_sizes: tuple[int, ...]
    weights: list[Tensor]
    biases: list[Tensor]

    def __post_init__(self):
        """
        :raise ValidationError: If shapes disagree with layer_sizes or entries are not finite
        """
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or self.layer_sizes[0] != 3 or self.layer_sizes[-1] != 1:
            raise ValidationError(f"layer sizes must start at 3 and end at 1, got {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValidationError("one weight matrix and one bias vector per layer are required")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[k], self.layer_sizes[k + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise ValidationError(f"layer {k}: expected {expected} and ({expected[1]},), got {w.shape}, {b.shape}")
            if not (np.all(np.isfinite(w.data)) and np.all(np.isfinite(b.data))):
                raise ValidationError(f"layer {k} has non-finite parameters")

    def parameters(self) -> list[Tensor]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def detached(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, [w.detach() for w in self.weights], [b.detach() for b in self.biases])

    @classmethod
    def initialize(cls, rng: np.random.Generator, layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES,
                   output_bias: float = OUTPUT_BIAS_INIT) -> "MlpParams":
        """Glorot-uniform weights, zero hidden biases, positive output bias so initial radii are > 0."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out))))
            biases.append(parameter(np.zeros(fan_out)))
        biases[-1] = parameter(np.full(1, output_bias))
        return cls(tuple(layer_sizes), weights, biases)

    @classmethod
    def constant(cls, value: float, layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES) -> "MlpParams":
        """Network whose output is `value` everywhere (zero weights)."""
        weights = [parameter(np.zeros((a, b))) for a, b in zip(layer_sizes[:-1], layer_sizes[1:])]
        biases = [parameter(np.zeros(b)) for b in layer_sizes[1:]]
        biases[-1] = parameter(np.full(1, value))
        return cls(tuple(layer_sizes), weights, biases)

    def to_dict(self) -> dict[str, Any]:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.data.tolist() for w in self.weights],
            "biases": [b.data.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MlpParams":
        return cls(
            layer_sizes=tuple(data["layer_sizes"]),
            weights=[parameter(np.array(w, dtype=np.float64).reshape(len(w), -1)) for w in data["weights"]],
            biases=[parameter(b) for b in data["biases"]],
        )


def mlp_forward(p: MlpParams, inputs: Any) -> Tensor:
    """
    f_NN(inputs): ReLU hidden layers, linear output.

    :param inputs: A 3-vector or an (n, 3) batch (array or Tensor)
    :return: Scalar Tensor for a single vector, otherwise shape (n,)
    :raise NumericalError: If any input is not finite
    """
    x = _as_tensor(inputs)
    if not np.all(np.isfinite(x.data)):
        raise NumericalError("mlp_forward received non-finite input")
    single = x.ndim == 1
    if single:
        x = x.reshape(1, 3)

    h = x
    last = len(p.weights) - 1
    for k, (w, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ w + b
        if k < last:
            h = h.relu()

    return h.reshape(()) if single else h.reshape(-1)


@dataclass
class AdamState:
    """
    Adam moment accumulators for an ordered parameter list

    Attributes:
        lr (float): Learning rate
        beta1, beta2 (float): Moment decay rates
        eps (float): Denominator floor
        step (int): Number of updates applied so far
        m, v (list[np.ndarray]): First/second moments, one per parameter
    """
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1 or self.eps <= 0:
            raise ValidationError("Adam requires lr > 0, betas in [0, 1) and eps > 0")
        if self.step < 0:
            raise ValidationError("step counter cannot be negative")

    @classmethod
    def for_parameters(cls, params: Sequence[Tensor], **hyper: float) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params], v=[np.zeros_like(p.data) for p in params], **hyper)


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Sequence[np.ndarray | None]) -> AdamState:
    """
    Apply one bias-corrected Adam update in place. A missing gradient counts as zero.

    :raise ValidationError: If parameter, gradient and moment shapes disagree
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValidationError(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment slots")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for k, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ValidationError(f"parameter {k}: shape {p.shape} vs grad {g.shape} vs moment {state.m[k].shape}")
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / correction1
        v_hat = state.v[k] / correction2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


@dataclass(frozen=True)
class GradCheck:
    """
    Outcome of a finite-difference gradient check

    Attributes:
        max_relative_error (float): Worst |analytic - numeric| / max(|analytic|, |numeric|, floor)
        checked (int): Entries compared
        skipped (int): Entries whose stencil crossed a branch (ReLU kink, reassignment) and were not compared
    """
    max_relative_error: float
    checked: int
    skipped: int

    def __float__(self) -> float:
        return self.max_relative_error


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5, floor: float = 1e-8,
               max_entries: int | None = None, seed: int = 0) -> GradCheck:
    """
    Compare reverse-mode gradients of the scalar f() with central finite differences.

    :param f: Closure recomputing the scalar from the current parameter values
    :param params: Tensors to perturb
    :param max_entries: Check at most this many randomly chosen entries per parameter
    :raise ValidationError: If f() is not a scalar
    :raise NumericalError: If f() is not finite
    """
    zero_grad(params)
    with branch_recorder() as base_branches:
        out = f()
    if out.data.size != 1:
        raise ValidationError(f"grad_check needs a scalar function, got shape {out.shape}")
    if not np.isfinite(out.data):
        raise NumericalError("grad_check: function value is not finite")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    base_branches = list(base_branches)

    def evaluate() -> tuple[float, list[int]]:
        with no_grad(), branch_recorder() as branches:
            value = f().item()
        if not math.isfinite(value):
            raise NumericalError("grad_check: non-finite value inside the finite-difference stencil")
        return value, list(branches)

    rng = np.random.default_rng(seed)
    worst, checked, skipped = 0.0, 0, 0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for i in entries:
            original = flat[i]
            flat[i] = original + step
            f_plus, branches_plus = evaluate()
            flat[i] = original - step
            f_minus, branches_minus = evaluate()
            flat[i] = original
            if branches_plus != base_branches or branches_minus != base_branches:
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * step)
            analytic_i = a.reshape(-1)[i]
            error = abs(analytic_i - numeric) / max(abs(analytic_i), abs(numeric), floor)
            worst = max(worst, error)
            checked += 1

    zero_grad(params)
    if skipped:
        logger.debug("grad_check skipped %d entries that crossed a branch", skipped)
    return GradCheck(max_relative_error=worst, checked=checked, skipped=skipped)
