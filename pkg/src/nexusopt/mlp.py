"""Tiny MLP regression tasks on synthetic multi-source data.

The network is fully connected with a linear output layer; hidden activations
are tanh (default), relu, or identity. Losses are weighted mean squared error
per data source, giving a smooth non-quadratic landscape at desk scale.
Gradients come from the reverse-mode tape in ``autodiff``; Hessian-vector
products use central differences of exact gradients (tolerance 1e-4 wherever
they are consumed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch
from .numerics import RngStream, as_params, fd_hvp, rng_substream

_ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass(frozen=True)
class MLPSpec:
    """Layer widths input..output plus the hidden activation."""

    layer_widths: tuple
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")

    @property
    def n_params(self) -> int:
        total = 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            total += fan_in * fan_out + fan_out
        return total

    def shapes(self) -> list:
        out = []
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            out.append((fan_in, fan_out))
            out.append((fan_out,))
        return out

    def unflatten(self, theta: np.ndarray) -> list:
        theta = as_params(theta, self.n_params)
        arrays, pos = [], 0
        for shape in self.shapes():
            size = int(np.prod(shape))
            arrays.append(theta[pos : pos + size].reshape(shape))
            pos += size
        return arrays

    def flatten(self, arrays: list) -> np.ndarray:
        return np.concatenate([np.asarray(a, dtype=np.float64).reshape(-1) for a in arrays])

    def init_params(self, rng: RngStream) -> np.ndarray:
        """Per-layer 1/sqrt(fan_in) weight scale, zero biases."""
        gen = rng.generator
        arrays = []
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            arrays.append(gen.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
            arrays.append(np.zeros(fan_out))
        return self.flatten(arrays)


@dataclass
class DataSource:
    """One synthetic source: inputs, regression targets, and an id."""

    inputs: np.ndarray
    targets: np.ndarray
    source_id: int = 0

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise DimensionMismatch("inputs and targets must be 2-D (n x dim)")
        if self.inputs.shape[0] != self.targets.shape[0] or self.inputs.shape[0] < 1:
            raise DimensionMismatch("inputs and targets must share n >= 1 rows")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("data source contains non-finite entries")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def batch(self, idx: np.ndarray) -> "DataSource":
        return DataSource(self.inputs[idx], self.targets[idx], self.source_id)


def mlp_forward(spec: MLPSpec, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Plain forward pass (no tape)."""
    arrays = spec.unflatten(theta)
    h = np.asarray(x, dtype=np.float64)
    n_layers = len(spec.layer_widths) - 1
    for layer in range(n_layers):
        W, b = arrays[2 * layer], arrays[2 * layer + 1]
        h = h @ W + b
        if layer < n_layers - 1:
            if spec.activation == "tanh":
                h = np.tanh(h)
            elif spec.activation == "relu":
                h = np.maximum(h, 0.0)
    return h


@dataclass
class MLPTask:
    """Weighted MSE of an MLP on one data source."""

    spec: MLPSpec
    source: DataSource
    weight: float = 1.0

    def __post_init__(self):
        if self.spec.layer_widths[0] != self.source.inputs.shape[1]:
            raise DimensionMismatch("input width does not match data source")
        if self.spec.layer_widths[-1] != self.source.targets.shape[1]:
            raise DimensionMismatch("output width does not match data source")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")

    @property
    def dim(self) -> int:
        return self.spec.n_params

    def _loss_node(self, theta: np.ndarray):
        arrays = self.spec.unflatten(theta)
        params = [ad.leaf(a, requires_grad=True) for a in arrays]
        h = ad.leaf(self.source.inputs)
        n_layers = len(self.spec.layer_widths) - 1
        for layer in range(n_layers):
            h = ad.add_bias(ad.matmul(h, params[2 * layer]), params[2 * layer + 1])
            if layer < n_layers - 1:
                if self.spec.activation == "tanh":
                    h = ad.tanh(h)
                elif self.spec.activation == "relu":
                    h = ad.relu(h)
        err = ad.sub(h, ad.leaf(self.source.targets))
        return ad.scale(ad.mean_square(err), self.weight), params

    def loss(self, theta: np.ndarray) -> float:
        out, _ = self._loss_node(theta)
        return float(out.value)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        out, params = self._loss_node(theta)
        grads = ad.backward(out)
        return self.spec.flatten([grads[p] for p in params])

    def hvp(self, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
        return fd_hvp(self.grad, theta, v)

    def minibatch(self, idx: np.ndarray) -> "MLPTask":
        return MLPTask(self.spec, self.source.batch(idx), self.weight)

    def scaled(self, alpha: float) -> "MLPTask":
        return MLPTask(self.spec, self.source, self.weight * alpha)


def mlp_loss(task: MLPTask, theta: np.ndarray) -> float:
    return task.loss(theta)


def mlp_grad(task: MLPTask, theta: np.ndarray) -> np.ndarray:
    return task.grad(theta)


def mlp_hvp(task: MLPTask, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
    return task.hvp(theta, v)


def make_synthetic_sources(
    K: int,
    d_in: int,
    d_out: int,
    n_per_source: int,
    shared_fraction: float,
    rng: RngStream,
    teacher_spec: MLPSpec | None = None,
) -> tuple:
    """K data sources plus one held-out source from blended teacher networks.

    Teacher parameters for source k are
    ``shared_fraction * shared + (1 - shared_fraction) * individual_k``;
    the held-out source draws a fresh individual component with the same
    shared part, modeling a downstream task from the same distribution.
    """
    if not 0.0 <= shared_fraction <= 1.0:
        raise ValueError(f"shared_fraction must lie in [0, 1], got {shared_fraction}")
    if teacher_spec is None:
        teacher_spec = MLPSpec((d_in, max(d_in, d_out), d_out), "tanh")
    shared = teacher_spec.init_params(rng_substream(rng, "teacher_shared"))

    def build(source_id: int, label: str) -> DataSource:
        sub = rng_substream(rng, label)
        indiv = teacher_spec.init_params(rng_substream(sub, "teacher"))
        teacher = shared_fraction * shared + (1.0 - shared_fraction) * indiv
        inputs = rng_substream(sub, "inputs").generator.standard_normal((n_per_source, d_in))
        targets = mlp_forward(teacher_spec, teacher, inputs)
        return DataSource(inputs, targets, source_id)

    sources = [build(k, f"source/{k}") for k in range(K)]
    held_out = build(K, "source/held_out")
    return sources, held_out


# --- JSON serialization (same container style as task sets) --------------


def datasource_to_dict(src: DataSource) -> dict:
    return {
        "kind": "data_source",
        "source_id": src.source_id,
        "inputs": src.inputs.tolist(),
        "targets": src.targets.tolist(),
    }


def datasource_from_dict(doc: dict) -> DataSource:
    return DataSource(
        np.asarray(doc["inputs"], dtype=np.float64),
        np.asarray(doc["targets"], dtype=np.float64),
        int(doc.get("source_id", 0)),
    )
