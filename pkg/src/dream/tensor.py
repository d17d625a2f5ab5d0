"""Dense float64 tensors with tape-based reverse-mode autodiff.

Ops that see at least one grad-requiring input append a node to the
current thread's tape; `backward` replays that tape once, in reverse
insertion order, and is destructive (one backward per forward pass).
Tensors holding plain data (requires_grad=False, no producing node) pass
through ops without recording anything, which is how frozen/eval network
passes stay off the tape.

Also provides the Adam optimizer and a central finite-difference gradient
oracle used to cross-check every backward rule.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError


class GraphError(RuntimeError):
    """Tape misuse: double backward, detached loss, or stale inputs."""


class Graph:
    """Append-only op tape; insertion order is the topological order."""

    __slots__ = ("nodes", "consumed")

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.consumed = False


class Node:
    __slots__ = ("tag", "inputs", "backward_fn", "graph", "adjoint")

    def __init__(self, tag: str, inputs: tuple, backward_fn: Callable, graph: Graph) -> None:
        self.tag = tag
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.graph = graph
        self.adjoint: np.ndarray | None = None


_tape = threading.local()


def _active_graph() -> Graph | None:
    return getattr(_tape, "graph", None)


def reset_tape() -> None:
    """Drop the current thread's unconsumed tape, if any."""
    _tape.graph = None


class Tensor:
    """A dense row-major float64 array, optionally tracked by the tape."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item: tensor has {self.data.size} elements")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same storage, no grad tracking and no tape ancestry."""
        return Tensor(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"


def tensor_from(shape: Sequence[int], values: Sequence[float]) -> Tensor:
    """Row-major tensor from a flat value list; shapes and lengths must agree."""
    dims = tuple(int(s) for s in shape)
    if not dims or any(s < 1 for s in dims):
        raise ValueError(f"tensor_from: extents must be >= 1, got {list(dims)}")
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    expected = math.prod(dims)
    if flat.size != expected:
        raise ValueError(f"tensor_from: {flat.size} values for shape {list(dims)} (need {expected})")
    return Tensor(flat.reshape(dims).copy())


def _tracked(*tensors: Tensor) -> bool:
    return any(t.requires_grad or t.node is not None for t in tensors)


def _record(tag: str, inputs: tuple, out: np.ndarray, backward_fn: Callable) -> Tensor:
    g = _active_graph()
    for inp in inputs:
        n = inp.node
        if n is None:
            continue
        if n.graph.consumed:
            raise GraphError(f"{tag}: input comes from an already-consumed graph")
        if g is not None and n.graph is not g:
            raise GraphError(f"{tag}: input belongs to a stale tape; call reset_tape first")
    if g is None:
        g = Graph()
        _tape.graph = g
    node = Node(tag, inputs, backward_fn, g)
    g.nodes.append(node)
    result = Tensor(out)
    result.node = node
    return result


def _require_same_shape(tag: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{tag}: shape mismatch {list(a.shape)} vs {list(b.shape)}")


# ---------------------------------------------------------------------------
# forward ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    out = a.data + b.data
    if not _tracked(a, b):
        return Tensor(out)
    return _record("add", (a, b), out, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)
    out = a.data - b.data
    if not _tracked(a, b):
        return Tensor(out)
    return _record("sub", (a, b), out, lambda g: (g, -g))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = a.data * c
    if not _tracked(a):
        return Tensor(out)
    return _record("scalar_mul", (a,), out, lambda g: (g * c,))


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("elementwise_mul", a, b)
    out = a.data * b.data
    if not _tracked(a, b):
        return Tensor(out)
    av, bv = a.data, b.data
    return _record("elementwise_mul", (a, b), out, lambda g: (g * bv, g * av))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: shape mismatch {list(a.shape)} vs {list(b.shape)}")
    out = a.data @ b.data
    if not _tracked(a, b):
        return Tensor(out)
    av, bv = a.data, b.data
    return _record("matmul", (a, b), out, lambda g: (g @ bv.T, av.T @ g))


def concat_last_axis(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise ValueError("concat_last_axis: needs at least one input")
    lead = tensors[0].data.shape[:-1]
    for t in tensors[1:]:
        if t.data.shape[:-1] != lead:
            raise ValueError(
                f"concat_last_axis: shape mismatch {list(tensors[0].shape)} vs {list(t.shape)}"
            )
    out = np.concatenate([t.data for t in tensors], axis=-1)
    if not _tracked(*tensors):
        return Tensor(out)
    cuts = np.cumsum([t.data.shape[-1] for t in tensors])[:-1]
    return _record(
        "concat_last_axis", tuple(tensors), out, lambda g: tuple(np.split(g, cuts, axis=-1))
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    out = a.data * s
    if not _tracked(a):
        return Tensor(out)
    av = a.data
    return _record("silu", (a,), out, lambda g: (g * (s * (1.0 + av * (1.0 - s))),))


def abs_sum_mean(a: Tensor) -> Tensor:
    """Mean of absolute values; the L1 loss reducer. Subgradient at 0 is 0."""
    out = np.array([np.abs(a.data).mean()])
    if not _tracked(a):
        return Tensor(out)
    sign = np.sign(a.data)
    n = a.data.size
    return _record("abs_sum_mean", (a,), out, lambda g: (g.reshape(-1)[0] * sign / n,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    dims = tuple(int(s) for s in shape)
    if math.prod(dims) != a.data.size:
        raise ValueError(f"reshape: shape mismatch {list(a.shape)} vs {list(dims)}")
    out = a.data.reshape(dims)
    if not _tracked(a):
        return Tensor(out)
    orig = a.data.shape
    return _record("reshape", (a,), out, lambda g: (g.reshape(orig),))


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Populate .grad of every requires_grad leaf reachable from loss.

    Gradients accumulate additively across multiple uses of a tensor.
    Consumes the tape: a second backward over the same graph raises.
    """
    if loss.node is None:
        raise GraphError("backward: loss is not the output of recorded ops")
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be a single element, got shape {list(loss.shape)}")
    g = loss.node.graph
    if g.consumed:
        raise GraphError("backward: graph already consumed")
    g.consumed = True
    if _active_graph() is g:
        _tape.graph = None

    loss.node.adjoint = np.ones_like(loss.data)
    for node in reversed(g.nodes):
        adj = node.adjoint
        node.adjoint = None
        if adj is None:
            continue
        grads = node.backward_fn(adj)
        for inp, gin in zip(node.inputs, grads):
            if gin is None:
                continue
            if inp.node is not None:
                if inp.node.adjoint is None:
                    inp.node.adjoint = np.zeros_like(inp.data)
                inp.node.adjoint += gin
            elif inp.requires_grad:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += gin


# ---------------------------------------------------------------------------
# finite-difference oracle


def finite_diff_grad(
    f: Callable[[Sequence[Tensor]], float], params: Sequence[Tensor], h: float
) -> list[np.ndarray]:
    """Central differences (f(p+h*e_i) - f(p-h*e_i)) / 2h per coordinate.

    f must be deterministic and pure for fixed parameter values; it is
    re-evaluated with params perturbed in place.
    """
    if h <= 0:
        raise ValueError(f"finite_diff_grad: h must be positive, got {h}")
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(params))
            flat[i] = orig - h
            fm = float(f(params))
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NumericalError(f"finite_diff_grad: non-finite f at coordinate {i}")
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Adam moments for an ordered parameter list, with bias correction."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stability: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"AdamState: lr must be positive, got {self.lr}")
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 < b < 1.0:
                raise ValueError(f"AdamState: {name} must be in (0,1), got {b}")

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float, **kwargs) -> "AdamState":
        state = cls(lr=lr, **kwargs)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update; grads are cleared afterwards."""
    if len(params) != len(state.m):
        raise ValueError(f"adam_step: {len(params)} params vs {len(state.m)} moment slots")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, m, v in zip(params, state.m, state.v):
        grad = p.grad
        if grad is None:
            raise ValueError("adam_step: parameter has no populated gradient")
        if grad.shape != m.shape:
            raise ValueError(f"adam_step: shape mismatch {list(grad.shape)} vs {list(m.shape)}")
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * (grad * grad)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps_stability)
        p.grad = None
