"""Analytic task families: quadratic and cubic losses with exact derivatives.

A task is anything exposing ``loss``, ``grad``, ``hvp`` and a ``dim`` attribute;
the analytic kinds here additionally expose Hessians, third-derivative tensors
and closed-form minimizers, which the theorem oracles rely on.

Mixture weights are folded multiplicatively into the task objects at
``TaskSet`` construction (a weighted quadratic is again a quadratic), so all
downstream code sees a plain average over tasks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularSystem
from .numerics import RngStream, as_params


def _check_spd(A: np.ndarray) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"Hessian must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("Hessian must be symmetric")
    eigs = np.linalg.eigvalsh(A)
    if eigs.min() <= 0:
        raise ValueError(f"Hessian must be positive definite, min eigenvalue {eigs.min():g}")


def symmetrize_tensor(T: np.ndarray) -> np.ndarray:
    """Average a d*d*d tensor over all 6 index permutations."""
    return (
        T
        + T.transpose(0, 2, 1)
        + T.transpose(1, 0, 2)
        + T.transpose(1, 2, 0)
        + T.transpose(2, 0, 1)
        + T.transpose(2, 1, 0)
    ) / 6.0


def tensor_operator_bound(T: np.ndarray, restarts: int = 32, iters: int = 100, rng: RngStream | None = None) -> float:
    """Estimate sup |T[u,u,u]| over unit u for a symmetric tensor.

    For symmetric tensors the sup over three independent unit vectors is
    attained on the diagonal, so a higher-order power iteration with random
    restarts is adequate at the dimensions used here (d <= 8).
    """
    d = T.shape[0]
    gen = rng.generator if rng is not None else np.random.default_rng(0)
    best = 0.0
    for _ in range(restarts):
        u = gen.standard_normal(d)
        u /= np.linalg.norm(u)
        for _ in range(iters):
            w = np.einsum("abc,b,c->a", T, u, u)
            n = np.linalg.norm(w)
            if n < 1e-300:
                break
            u_new = w / n
            if np.linalg.norm(u_new - u) < 1e-14 or np.linalg.norm(u_new + u) < 1e-14:
                u = u_new
                break
            u = u_new
        best = max(best, abs(float(np.einsum("abc,a,b,c->", T, u, u, u))))
    return best


@dataclass
class QuadraticTask:
    """Loss 0.5*(theta-minimizer)^T A (theta-minimizer) + offset, A symmetric positive definite."""

    hessian: np.ndarray
    minimizer: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        self.hessian = np.asarray(self.hessian, dtype=np.float64)
        self.minimizer = as_params(self.minimizer)
        _check_spd(self.hessian)
        if self.hessian.shape[0] != self.minimizer.shape[0]:
            raise DimensionMismatch("Hessian and minimizer dimensions differ")

    @property
    def dim(self) -> int:
        return self.minimizer.shape[0]

    def loss(self, theta: np.ndarray) -> float:
        delta = as_params(theta, self.dim) - self.minimizer
        return 0.5 * float(delta @ self.hessian @ delta) + self.offset

    def grad(self, theta: np.ndarray) -> np.ndarray:
        delta = as_params(theta, self.dim) - self.minimizer
        return self.hessian @ delta

    def hvp(self, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
        v = as_params(v, self.dim)
        return self.hessian @ v

    def hessian_at(self, theta: np.ndarray) -> np.ndarray:
        return self.hessian.copy()

    def third_tensor(self) -> np.ndarray | None:
        return None

    def scaled(self, alpha: float) -> "QuadraticTask":
        """Fold a multiplicative loss weight into the task. Requires alpha > 0 to stay SPD."""
        if alpha <= 0:
            raise ValueError(f"weight must be positive for an SPD quadratic, got {alpha}")
        return QuadraticTask(alpha * self.hessian, self.minimizer.copy(), alpha * self.offset)


@dataclass
class CubicTask:
    """Quadratic task plus (1/6) * T[delta,delta,delta] with T symmetric and |T| bounded by third_bound."""

    hessian: np.ndarray
    minimizer: np.ndarray
    offset: float = 0.0
    third: np.ndarray = None  # type: ignore[assignment]
    third_bound: float = 0.0

    def __post_init__(self):
        self.hessian = np.asarray(self.hessian, dtype=np.float64)
        self.minimizer = as_params(self.minimizer)
        _check_spd(self.hessian)
        d = self.minimizer.shape[0]
        if self.third is None:
            self.third = np.zeros((d, d, d))
        self.third = np.asarray(self.third, dtype=np.float64)
        if self.third.shape != (d, d, d):
            raise DimensionMismatch(f"third tensor must have shape {(d, d, d)}, got {self.third.shape}")
        if not np.allclose(self.third, symmetrize_tensor(self.third), atol=1e-10):
            raise ValueError("third tensor must be symmetric under index permutations")

    @property
    def dim(self) -> int:
        return self.minimizer.shape[0]

    def loss(self, theta: np.ndarray) -> float:
        delta = as_params(theta, self.dim) - self.minimizer
        quad = 0.5 * float(delta @ self.hessian @ delta)
        cubic = float(np.einsum("abc,a,b,c->", self.third, delta, delta, delta)) / 6.0
        return quad + cubic + self.offset

    def grad(self, theta: np.ndarray) -> np.ndarray:
        delta = as_params(theta, self.dim) - self.minimizer
        return self.hessian @ delta + 0.5 * np.einsum("abc,b,c->a", self.third, delta, delta)

    def hvp(self, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
        v = as_params(v, self.dim)
        return self.hessian_at(theta) @ v

    def hessian_at(self, theta: np.ndarray) -> np.ndarray:
        delta = as_params(theta, self.dim) - self.minimizer
        return self.hessian + np.einsum("abc,c->ab", self.third, delta)

    def third_tensor(self) -> np.ndarray:
        return self.third

    def scaled(self, alpha: float) -> "CubicTask":
        if alpha <= 0:
            raise ValueError(f"weight must be positive, got {alpha}")
        return CubicTask(
            alpha * self.hessian,
            self.minimizer.copy(),
            alpha * self.offset,
            alpha * self.third,
            alpha * self.third_bound,
        )


def random_cubic_task(
    dim: int,
    rng: RngStream,
    third_bound: float = 0.5,
    curvature_range: tuple[float, float] = (0.8, 3.0),
) -> CubicTask:
    """Random SPD quadratic part plus a random symmetric tensor rescaled to the requested bound."""
    gen = rng.generator
    A = random_spd_matrix(dim, rng, curvature_range)
    minimizer = gen.standard_normal(dim)
    T = symmetrize_tensor(gen.standard_normal((dim, dim, dim)))
    if third_bound == 0.0:
        T = np.zeros((dim, dim, dim))
    else:
        current = tensor_operator_bound(T, rng=rng)
        if current > 0:
            T = T * (third_bound / current)
    return CubicTask(A, minimizer, 0.0, T, third_bound)


def random_spd_matrix(dim: int, rng: RngStream, eig_range: tuple[float, float] = (0.5, 3.0)) -> np.ndarray:
    """SPD matrix with eigenvalues sampled uniformly in eig_range, random orthogonal frame."""
    gen = rng.generator
    Q, _ = np.linalg.qr(gen.standard_normal((dim, dim)))
    lo, hi = eig_range
    eigs = gen.uniform(lo, hi, size=dim)
    return (Q * eigs) @ Q.T


@dataclass
class TaskFamily:
    """Isotropic quadratic family: minimizers scatter around basin_mean with total variance `variance`."""

    basin_mean: np.ndarray
    variance: float
    curvature: float
    depth: float = 0.0

    def __post_init__(self):
        self.basin_mean = as_params(self.basin_mean)
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")
        if self.curvature <= 0:
            raise ValueError(f"curvature must be > 0, got {self.curvature}")

    @property
    def dim(self) -> int:
        return self.basin_mean.shape[0]

    def sample_minimizer(self, rng: RngStream) -> np.ndarray:
        # Per-coordinate std sigma/sqrt(d) so E||theta* - mu||^2 equals the family variance.
        d = self.dim
        scale = np.sqrt(self.variance / d)
        return self.basin_mean + scale * rng.generator.standard_normal(d)

    def sample_task(self, rng: RngStream) -> QuadraticTask:
        A = self.curvature * np.eye(self.dim)
        return QuadraticTask(A, self.sample_minimizer(rng), self.depth)


@dataclass
class TaskSet:
    """K tasks plus the (already folded) mixture weights; L_train is the plain average."""

    tasks: list
    weights: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if len(self.tasks) < 1:
            raise ValueError("a task set needs at least one task")
        dims = {t.dim for t in self.tasks}
        if len(dims) != 1:
            raise DimensionMismatch(f"tasks disagree on dimension: {sorted(dims)}")
        if self.weights is None:
            self.weights = np.ones(len(self.tasks))
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (len(self.tasks),):
                raise DimensionMismatch("one weight per task required")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
                raise ValueError("weights must be finite and non-negative")
            if not np.allclose(self.weights, 1.0):
                self.tasks = [t.scaled(w) for t, w in zip(self.tasks, self.weights)]

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, k: int):
        return self.tasks[k]

    @property
    def dim(self) -> int:
        return self.tasks[0].dim

    def scaled(self, alpha: float) -> "TaskSet":
        """Scale every task loss by alpha (used by the scale-pathology checks)."""
        return TaskSet([t.scaled(alpha) for t in self.tasks])


def task_loss(task, theta: np.ndarray) -> float:
    return task.loss(theta)


def task_grad(task, theta: np.ndarray) -> np.ndarray:
    return task.grad(theta)


def task_hvp(task, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
    return task.hvp(theta, v)


def train_loss(ts: TaskSet, theta: np.ndarray) -> float:
    return sum(t.loss(theta) for t in ts.tasks) / len(ts)


def train_grad(ts: TaskSet, theta: np.ndarray) -> np.ndarray:
    g = np.zeros(ts.dim)
    for t in ts.tasks:
        g += t.grad(theta)
    return g / len(ts)


def sample_family(family: TaskFamily, K: int, rng: RngStream) -> TaskSet:
    """K i.i.d. isotropic quadratics with shared curvature and depth."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return TaskSet([family.sample_task(rng) for _ in range(K)])


def stationary_point(ts: TaskSet) -> np.ndarray:
    """Solve sum_k A_k (theta - theta*_k) = 0 for a set of quadratic-part tasks.

    Exact for quadratics; callers wanting stationary points of cubic/MLP sets
    should run a descent instead.
    """
    A_sum = np.zeros((ts.dim, ts.dim))
    rhs = np.zeros(ts.dim)
    for t in ts.tasks:
        if not isinstance(t, QuadraticTask):
            raise TypeError("stationary_point expects quadratic tasks")
        A_sum += t.hessian
        rhs += t.hessian @ t.minimizer
    try:
        theta = np.linalg.solve(A_sum, rhs)
    except np.linalg.LinAlgError as exc:  # cannot occur under the SPD precondition; guarded anyway
        raise SingularSystem("summed Hessian is singular") from exc
    return theta


# --- JSON serialization -------------------------------------------------
#
# Matrices are stored row-major; third-derivative tensors store only the
# canonical i<=j<=k entries (symmetry canonicalization). Weights recorded at
# construction are kept as provenance; the serialized tasks are already
# weight-folded, so round-tripping does not fold twice.


def _tensor_to_canonical(T: np.ndarray) -> dict:
    d = T.shape[0]
    entries = {}
    for i in range(d):
        for j in range(i, d):
            for k in range(j, d):
                v = T[i, j, k]
                if v != 0.0:
                    entries[f"{i},{j},{k}"] = float(v)
    return entries


def _tensor_from_canonical(entries: dict, d: int) -> np.ndarray:
    T = np.zeros((d, d, d))
    for key, v in entries.items():
        i, j, k = (int(s) for s in key.split(","))
        for perm in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
            T[perm] = v
    return T


def task_to_dict(task) -> dict:
    if isinstance(task, CubicTask):
        return {
            "kind": "cubic",
            "hessian": task.hessian.reshape(-1).tolist(),
            "minimizer": task.minimizer.tolist(),
            "offset": task.offset,
            "third": _tensor_to_canonical(task.third),
            "third_bound": task.third_bound,
        }
    if isinstance(task, QuadraticTask):
        return {
            "kind": "quadratic",
            "hessian": task.hessian.reshape(-1).tolist(),
            "minimizer": task.minimizer.tolist(),
            "offset": task.offset,
        }
    raise TypeError(f"cannot serialize task of type {type(task).__name__}")


def task_from_dict(doc: dict):
    d = len(doc["minimizer"])
    A = np.asarray(doc["hessian"], dtype=np.float64).reshape(d, d)
    minimizer = np.asarray(doc["minimizer"], dtype=np.float64)
    if doc["kind"] == "quadratic":
        return QuadraticTask(A, minimizer, float(doc.get("offset", 0.0)))
    if doc["kind"] == "cubic":
        T = _tensor_from_canonical(doc.get("third", {}), d)
        return CubicTask(A, minimizer, float(doc.get("offset", 0.0)), T, float(doc.get("third_bound", 0.0)))
    raise ValueError(f"unknown task kind {doc['kind']!r}")


def taskset_to_json(ts: TaskSet) -> str:
    doc = {
        "tasks": [task_to_dict(t) for t in ts.tasks],
        "folded_weights": ts.weights.tolist(),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def taskset_from_json(text: str) -> TaskSet:
    doc = json.loads(text)
    tasks = [task_from_dict(t) for t in doc["tasks"]]
    ts = TaskSet(tasks)
    if "folded_weights" in doc:
        ts.weights = np.asarray(doc["folded_weights"], dtype=np.float64)
    return ts
