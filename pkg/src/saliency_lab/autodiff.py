"""Reverse-mode automatic differentiation over the kernels in :mod:`saliency_lab.tensor`.

A :class:`Graph` records :class:`Node` objects in creation order, which is a
topological order by construction. ``Graph.backward`` walks that list in
reverse once. Gradients accumulate into ``Node.grad`` (and, for parameter
leaves, into the shared ``Parameter.grad``) until explicitly zeroed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as T

BCE_EPS = 1e-7

_ids = itertools.count()


class Parameter:
    """A named, persistent weight array with an accumulating gradient."""

    def __init__(self, name: str, value, trainable: bool = True):
        self.name = name
        self.value = T.as_tensor(value)
        self.trainable = trainable
        self._grad: np.ndarray | None = None

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        flag = "" if self.trainable else ", frozen"
        return f"Parameter({self.name!r}, shape={self.value.shape}{flag})"


class Node:
    __slots__ = ("id", "op", "parents", "value", "graph", "requires_grad", "param", "_backward", "_grad")

    def __init__(self, graph, op, value, parents=(), backward=None, requires_grad=False, param=None):
        self.id = next(_ids)
        self.graph = graph
        self.op = op
        self.value = value
        self.parents: tuple[Node, ...] = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad
        self.param = param
        self._grad = None

    @property
    def grad(self) -> np.ndarray:
        if self.param is not None:
            return self.param.grad
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    def _accumulate(self, g: np.ndarray) -> None:
        if self.param is not None:
            self.param.grad[...] += g
        elif self._grad is None:
            self._grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self._grad += g

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"node {self.id} ({self.op}) is not a scalar: shape {self.value.shape}")
        return float(self.value.reshape(-1)[0])

    def __float__(self) -> float:
        return self.item()

    def __repr__(self) -> str:
        return f"Node(id={self.id}, op={self.op!r}, shape={self.value.shape})"


class Graph:
    """Tape of nodes. ``trainable`` holds the ids of parameter leaves that receive updates."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.trainable: set[int] = set()
        self._index: dict[int, Node] = {}

    def _add(self, node: Node) -> Node:
        self.nodes.append(node)
        self._index[node.id] = node
        return node

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._index

    def node(self, node_id: int) -> Node:
        try:
            return self._index[node_id]
        except KeyError:
            raise KeyError(f"node id {node_id} is not in this graph") from None

    def constant(self, value, op: str = "const") -> Node:
        return self._add(Node(self, op, T.as_tensor(value)))

    def parameter(self, param: Parameter, trainable: bool | None = None) -> Node:
        """Leaf for ``param``. Trainable leaves share their gradient with ``param.grad``."""
        trainable = param.trainable if trainable is None else trainable
        if not trainable:
            return self._add(Node(self, "frozen:" + param.name, param.value))
        node = self._add(Node(self, "param:" + param.name, param.value, requires_grad=True, param=param))
        self.trainable.add(node.id)
        return node

    def variable(self, value, op: str = "var") -> Node:
        """A leaf that records its own gradient but is not a weight."""
        return self._add(Node(self, op, T.as_tensor(value), requires_grad=True))

    def op(self, name: str, value, parents: Sequence[Node], backward) -> Node:
        for p in parents:
            if p.graph is not self:
                raise ValueError(f"parent node {p.id} belongs to another graph")
        needs = any(p.requires_grad for p in parents)
        return self._add(Node(self, name, value, parents, backward if needs else None, needs))

    def backward(self, loss: Node | int) -> dict[int, np.ndarray]:
        """Accumulate d(loss)/d(node) into every gradient-carrying node.

        Returns the gradients contributed by this pass, keyed by node id.
        """
        if isinstance(loss, int):
            loss = self.node(loss)
        if loss.id not in self._index or self._index[loss.id] is not loss:
            raise KeyError(f"node id {loss.id} is not in this graph")
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
        adj: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = adj.get(node.id)
            if g is None or node._backward is None:
                continue
            needs = [p.requires_grad for p in node.parents]
            grads = node._backward(g, needs)
            for parent, pg, need in zip(node.parents, grads, needs):
                if not need or pg is None:
                    continue
                if parent.id in adj:
                    adj[parent.id] = adj[parent.id] + pg
                else:
                    adj[parent.id] = pg
        out = {}
        for node in self.nodes:
            g = adj.get(node.id)
            if g is not None and node.requires_grad:
                node._accumulate(g)
                out[node.id] = g
        return out


def backward(graph: Graph, loss: Node | int) -> dict[int, np.ndarray]:
    return graph.backward(loss)


# ---------------------------------------------------------------------------
# differentiable primitives
# ---------------------------------------------------------------------------


def conv2d(x: Node, w: Node, b: Node, stride: int = 1, pad: int = 0) -> Node:
    out = T.conv2d(x.value, w.value, b.value, stride, pad)

    def grad(g, needs):
        gx = T.conv2d_grad_input(g, w.value, x.shape, stride, pad) if needs[0] else None
        gw = T.conv2d_grad_weight(x.value, g, w.shape, stride, pad) if needs[1] else None
        gb = g.sum(axis=(0, 2, 3)) if needs[2] else None
        return gx, gw, gb

    return x.graph.op("conv2d", out, (x, w, b), grad)


def maxpool2(x: Node) -> Node:
    out, argmax = T.maxpool2(x.value)
    return x.graph.op("maxpool2", out, (x,), lambda g, needs: (T.maxpool2_backward(g, argmax),))


def upsample2(x: Node) -> Node:
    return x.graph.op("upsample2", T.upsample2(x.value), (x,), lambda g, needs: (T.upsample2_backward(g),))


def avgpool(x: Node, factor: int) -> Node:
    out = T.avgpool(x.value, factor)
    return x.graph.op(f"avgpool{factor}", out, (x,), lambda g, needs: (T.avgpool_backward(g, factor),))


def dense(x: Node, w: Node, b: Node) -> Node:
    out = T.dense(x.value, w.value, b.value)

    def grad(g, needs):
        return (
            g @ w.value if needs[0] else None,
            g.T @ x.value if needs[1] else None,
            g.sum(axis=0) if needs[2] else None,
        )

    return x.graph.op("dense", out, (x, w, b), grad)


def relu(x: Node) -> Node:
    mask = x.value > 0  # zero subgradient at exactly 0
    return x.graph.op("relu", np.where(mask, x.value, 0.0), (x,), lambda g, needs: (g * mask,))


def sigmoid(x: Node) -> Node:
    s = T.sigmoid(x.value)
    return x.graph.op("sigmoid", s, (x,), lambda g, needs: (g * s * (1.0 - s),))


def tanh(x: Node) -> Node:
    t = np.tanh(x.value)
    return x.graph.op("tanh", t, (x,), lambda g, needs: (g * (1.0 - t * t),))


def activate(x: Node, kind: str) -> Node:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind in ("none", None):
        return x
    raise ValueError(f"unknown activation {kind!r}")


def flatten(x: Node) -> Node:
    shape = x.shape
    out = x.value.reshape(shape[0], -1)
    return x.graph.op("flatten", out, (x,), lambda g, needs: (g.reshape(shape),))


def concat(nodes: Sequence[Node], axis: int = 1) -> Node:
    graph = nodes[0].graph
    sizes = [n.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([n.value for n in nodes], axis=axis)
    return graph.op("concat", out, tuple(nodes), lambda g, needs: tuple(np.split(g, splits, axis=axis)))


def add(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return a.graph.op("add", a.value + b.value, (a, b), lambda g, needs: (g, g))


def scale(a: Node, c: float) -> Node:
    c = float(c)
    return a.graph.op("scale", a.value * c, (a,), lambda g, needs: (g * c,))


def mul(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch {a.shape} vs {b.shape}")
    return a.graph.op("mul", a.value * b.value, (a, b), lambda g, needs: (g * b.value, g * a.value))


def total(a: Node) -> Node:
    shape = a.shape
    return a.graph.op("sum", np.array([a.value.sum()]), (a,), lambda g, needs: (np.full(shape, g[0]),))


def mean(a: Node) -> Node:
    shape, n = a.shape, a.value.size
    return a.graph.op("mean", np.array([a.value.mean()]), (a,), lambda g, needs: (np.full(shape, g[0] / n),))


def squared_error(pred: Node, target: Node) -> Node:
    """Mean of squared differences over all elements."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.value - target.value
    n = diff.size

    def grad(g, needs):
        d = (2.0 / n) * g[0] * diff
        return (d if needs[0] else None, -d if needs[1] else None)

    return pred.graph.op("mse", np.array([np.mean(diff * diff)]), (pred, target), grad)


def cross_entropy(pred: Node, target: Node, eps: float = BCE_EPS) -> Node:
    """Mean binary cross entropy (natural log); predictions clamped to [eps, 1 - eps]."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    p = np.clip(pred.value, eps, 1.0 - eps)
    t = target.value
    n = p.size
    value = -np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    inside = (pred.value >= eps) & (pred.value <= 1.0 - eps)

    def grad(g, needs):
        gp = gt = None
        if needs[0]:
            gp = g[0] / n * (p - t) / (p * (1.0 - p)) * inside
        if needs[1]:
            gt = -g[0] / n * (np.log(p) - np.log1p(-p))
        return gp, gt

    return pred.graph.op("bce", np.array([value]), (pred, target), grad)


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------


class NonDeterministicBuilder(RuntimeError):
    pass


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    coords: int
    passed: bool


@dataclass
class GradcheckReport:
    checks: list[ParamCheck] = field(default_factory=list)
    tol: float = 1e-4
    h: float = 1e-5

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    def table(self) -> str:
        width = max([len(c.name) for c in self.checks] + [9])
        lines = [f"{'parameter':<{width}}  {'max_rel_err':>12}  {'coords':>6}  result"]
        for c in self.checks:
            lines.append(
                f"{c.name:<{width}}  {c.max_rel_error:12.3e}  {c.coords:6d}  {'pass' if c.passed else 'FAIL'}"
            )
        return "\n".join(lines)


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def gradcheck(
    builder: Callable[[Graph], Node],
    params: Iterable[Parameter],
    seed: int = 0,
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int = 20,
    skip: Callable[[Parameter, tuple], bool] | None = None,
) -> GradcheckReport:
    """Compare backprop gradients of ``builder``'s scalar loss against central differences.

    ``builder(graph)`` must rebuild the loss from the current values of
    ``params`` each call. Up to ``max_coords`` coordinates per parameter are
    sampled with ``seed``; ``skip`` may exclude coordinates (kinks).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = list(params)

    def evaluate() -> float:
        return builder(Graph()).item()

    g = Graph()
    loss = builder(g)
    if loss.value.size != 1:
        raise ValueError("builder must produce a scalar loss")
    for p in params:
        p.zero_grad()
    g.backward(loss)
    base = loss.item()
    again = evaluate()
    if np.float64(base).tobytes() != np.float64(again).tobytes():
        raise NonDeterministicBuilder(f"builder returned {base!r} then {again!r}")

    rng = np.random.default_rng(seed)
    report = GradcheckReport(tol=tol, h=h)
    for p in params:
        analytic = p.grad.copy()
        flat = list(np.ndindex(p.shape))
        if skip is not None:
            flat = [ix for ix in flat if not skip(p, ix)]
        if len(flat) > max_coords:
            picks = rng.choice(len(flat), size=max_coords, replace=False)
            flat = [flat[i] for i in sorted(picks)]
        worst = 0.0
        for ix in flat:
            orig = p.value[ix]
            p.value[ix] = orig + h
            up = evaluate()
            p.value[ix] = orig - h
            down = evaluate()
            p.value[ix] = orig
            fd = (up - down) / (2.0 * h)
            worst = max(worst, relative_error(analytic[ix], fd))
        report.checks.append(ParamCheck(p.name, worst, len(flat), worst < tol))
        p.zero_grad()
    return report
