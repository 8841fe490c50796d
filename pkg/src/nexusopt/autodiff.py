"""Minimal reverse-mode automatic differentiation over numpy arrays.

Nodes hold array values; each op records a backward closure on a tape, and
``backward`` walks the tape in reverse accumulating adjoints. Only the handful
of ops an MLP regression needs are implemented: matmul, bias add, tanh, relu,
identity, subtraction and mean-of-squares reduction.
"""

from __future__ import annotations

import numpy as np


class Node:
    """One array in the computation graph."""

    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, value: np.ndarray, parents=(), backward=None, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)


def leaf(value: np.ndarray, requires_grad: bool = False) -> Node:
    return Node(value, requires_grad=requires_grad)


def matmul(a: Node, b: Node) -> Node:
    out_value = a.value @ b.value

    def backward(out_grad, grads):
        grads[a] = grads.get(a, 0.0) + out_grad @ b.value.T
        grads[b] = grads.get(b, 0.0) + a.value.T @ out_grad

    return Node(out_value, (a, b), backward)


def add_bias(a: Node, bias: Node) -> Node:
    out_value = a.value + bias.value

    def backward(out_grad, grads):
        grads[a] = grads.get(a, 0.0) + out_grad
        grads[bias] = grads.get(bias, 0.0) + out_grad.sum(axis=0)

    return Node(out_value, (a, bias), backward)


def tanh(a: Node) -> Node:
    out_value = np.tanh(a.value)

    def backward(out_grad, grads):
        grads[a] = grads.get(a, 0.0) + out_grad * (1.0 - out_value**2)

    return Node(out_value, (a,), backward)


def relu(a: Node) -> Node:
    out_value = np.maximum(a.value, 0.0)

    def backward(out_grad, grads):
        # subgradient 0 at exactly 0
        grads[a] = grads.get(a, 0.0) + out_grad * (a.value > 0.0)

    return Node(out_value, (a,), backward)


def sub(a: Node, b: Node) -> Node:
    out_value = a.value - b.value

    def backward(out_grad, grads):
        grads[a] = grads.get(a, 0.0) + out_grad
        grads[b] = grads.get(b, 0.0) - out_grad

    return Node(out_value, (a, b), backward)


def mean_square(a: Node) -> Node:
    """Mean of squared entries, the MSE reduction."""
    out_value = np.mean(a.value**2)

    def backward(out_grad, grads):
        grads[a] = grads.get(a, 0.0) + out_grad * (2.0 / a.value.size) * a.value

    return Node(out_value, (a,), backward)


def scale(a: Node, alpha: float) -> Node:
    out_value = alpha * a.value

    def backward(out_grad, grads):
        grads[a] = grads.get(a, 0.0) + alpha * out_grad

    return Node(out_value, (a,), backward)


def backward(out: Node) -> dict:
    """Reverse pass from a scalar output node; returns {node: adjoint array}."""
    if out.value.ndim != 0 and out.value.size != 1:
        raise ValueError("backward expects a scalar output node")
    order: list[Node] = []
    seen: set[int] = set()

    def topo(node: Node):
        if id(node) in seen or not node.requires_grad:
            return
        seen.add(id(node))
        for p in node._parents:
            topo(p)
        order.append(node)

    topo(out)
    grads: dict[Node, np.ndarray] = {out: np.asarray(1.0)}
    for node in reversed(order):
        if node._backward is None:
            continue
        g = grads.get(node)
        if g is None:
            continue
        node._backward(np.asarray(g), grads)
    return grads
