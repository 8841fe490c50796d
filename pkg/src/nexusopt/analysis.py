"""Measurement protocol: gradient-similarity matrices, parameter closeness,
task-minimizer location, first-order transfer, and the flatness/closeness
expansion of the downstream loss.

Curvature quantities along a segment are directional (the curvature of the
one-dimensional restriction), which is what makes the expansion an exact
equality for quadratic downstream losses. Quadratics evaluate it in closed
form, cubics at the segment endpoints (the directional curvature is affine
along the segment), everything else at 32 sampled points per segment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateGradient, MissingMinimizer
from .numerics import as_params
from .optimizers import AdamWState, adamw_step
from .tasks import CubicTask, QuadraticTask, TaskSet, train_grad

SEGMENT_SAMPLES = 32


def cosine_matrix(ts: TaskSet, theta: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """K x K matrix of pairwise cosine similarities between per-task gradients."""
    grads = [t.grad(theta) for t in ts.tasks]
    norms = [float(np.linalg.norm(g)) for g in grads]
    for k, n in enumerate(norms):
        if n < floor:
            raise DegenerateGradient(f"task {k} gradient norm {n:g} below floor {floor:g}", k)
    K = len(ts)
    S = np.empty((K, K))
    for i in range(K):
        for j in range(K):
            S[i, j] = float(grads[i] @ grads[j]) / (norms[i] * norms[j])
    return S


def mean_pairwise_cosine(S: np.ndarray) -> float:
    """Mean of the off-diagonal entries; nan for a single task."""
    K = S.shape[0]
    if K < 2:
        return float("nan")
    mask = ~np.eye(K, dtype=bool)
    return float(S[mask].mean())


def _directional_curvature(task, xi: np.ndarray, u: np.ndarray) -> float:
    return float(u @ task.hvp(xi, u))


def _segment_curvatures(task, a: np.ndarray, b: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Directional curvatures u^T H(xi) u at points xi along the segment [a, b]."""
    if isinstance(task, QuadraticTask):
        return np.array([_directional_curvature(task, a, u)])
    if isinstance(task, CubicTask):
        # affine in the segment parameter, extremes at the endpoints
        return np.array([_directional_curvature(task, a, u), _directional_curvature(task, b, u)])
    points = np.linspace(0.0, 1.0, SEGMENT_SAMPLES)
    return np.array([_directional_curvature(task, a + t * (b - a), u) for t in points])


@dataclass
class ClosenessReport:
    """Distances to each task minimizer plus the mean square and the curvature floor used."""

    per_task_distance: np.ndarray
    mean_sq: float
    curvature_floor: float


def resolve_minimizers(ts: TaskSet, minimizers=None) -> list:
    if minimizers is not None:
        if len(minimizers) != len(ts):
            raise MissingMinimizer(f"need {len(ts)} minimizers, got {len(minimizers)}")
        return [as_params(m, ts.dim) for m in minimizers]
    out = []
    for k, t in enumerate(ts.tasks):
        if isinstance(t, QuadraticTask):
            out.append(t.minimizer)
        else:
            raise MissingMinimizer(f"task {k} has no analytic minimizer; supply located ones")
    return out


def closeness(theta: np.ndarray, ts: TaskSet, minimizers=None) -> ClosenessReport:
    """Mean squared distance between theta and each task's minimizer."""
    theta = as_params(theta, ts.dim)
    mins = resolve_minimizers(ts, minimizers)
    distances = np.array([float(np.linalg.norm(theta - m)) for m in mins])
    floor = np.inf
    for t, m, dist in zip(ts.tasks, mins, distances):
        if dist <= 1e-15:
            continue
        u = (theta - m) / dist
        floor = min(floor, float(_segment_curvatures(t, theta, m, u).min()))
    return ClosenessReport(distances, float(np.mean(distances**2)), floor)


@dataclass
class LocateResult:
    theta: np.ndarray
    converged: bool
    steps: int
    grad_norm: float


def locate_task_minimizer(
    task,
    theta_init: np.ndarray,
    lr: float = 2e-5,
    tol: float = 1e-8,
    max_steps: int = 400_000,
    stall_window: int = 250,
) -> LocateResult:
    """Full-batch AdamW descent (weight decay 0) to the nearest minimizer.

    Fixed-step AdamW orbits the minimizer at a radius set by the learning
    rate, so once the gradient norm stalls the rate is halved and the descent
    continues; this reaches the stationarity tolerance on smooth tasks while
    keeping the protocol's starting rate. Non-convergence is reported in the
    result, not raised.
    """
    theta = as_params(theta_init, task.dim).copy()
    state = AdamWState.init(task.dim, weight_decay=0.0)
    best = np.inf
    best_at = 0
    gnorm = float(np.linalg.norm(task.grad(theta)))
    step = 0
    while step < max_steps:
        if gnorm <= tol:
            return LocateResult(theta, True, step, gnorm)
        state, theta = adamw_step(state, theta, task.grad(theta), lr)
        step += 1
        gnorm = float(np.linalg.norm(task.grad(theta)))
        if gnorm < best * 0.999:
            best, best_at = gnorm, step
        elif step - best_at >= stall_window:
            lr *= 0.5
            best, best_at = gnorm, step
            if lr < 1e-16:
                break
    return LocateResult(theta, gnorm <= tol, step, gnorm)


def newton_minimize(task, theta_init: np.ndarray, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Newton descent for tasks exposing hessian_at; used where analytic
    curvature is available and the basin is locally convex."""
    theta = as_params(theta_init, task.dim).copy()
    for _ in range(max_iter):
        g = task.grad(theta)
        if float(np.linalg.norm(g)) <= tol:
            return theta
        theta = theta - np.linalg.solve(task.hessian_at(theta), g)
    return theta


class TransferCheck(NamedTuple):
    lhs: float
    rhs: float
    residual: float


def first_order_transfer(theta: np.ndarray, ts: TaskSet, downstream, gamma: float) -> TransferCheck:
    """Downstream-loss decrease after one GD step on the training set vs. the
    first-order prediction gamma * <grad L_train, grad L_downstream>."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    theta = as_params(theta, ts.dim)
    g_train = train_grad(ts, theta)
    lhs = downstream.loss(theta) - downstream.loss(theta - gamma * g_train)
    rhs = gamma * float(g_train @ downstream.grad(theta))
    return TransferCheck(lhs, rhs, lhs - rhs)


@dataclass
class FlatnessClosenessBound:
    downstream_min_loss: float
    closeness_term: float
    flatness_term: float
    bound: float


def flatness_closeness_bound(theta_train: np.ndarray, downstream, minimizer=None) -> FlatnessClosenessBound:
    """Bound the downstream loss by min loss + closeness * flatness / 2.

    Flatness is the maximum directional curvature of the downstream loss along
    the segment from its minimizer to theta_train; with that reading the bound
    is an exact equality whenever the downstream loss is quadratic.
    """
    theta_train = as_params(theta_train)
    if minimizer is not None:
        theta_star = as_params(minimizer, len(theta_train))
    elif isinstance(downstream, QuadraticTask):
        theta_star = downstream.minimizer
    elif isinstance(downstream, CubicTask):
        theta_star = newton_minimize(downstream, downstream.minimizer)
    else:
        raise MissingMinimizer("supply a located minimizer for non-analytic downstream tasks")
    delta = theta_train - theta_star
    dist = float(np.linalg.norm(delta))
    min_loss = downstream.loss(theta_star)
    if dist <= 1e-15:
        return FlatnessClosenessBound(min_loss, 0.0, 0.0, min_loss)
    u = delta / dist
    flatness = float(_segment_curvatures(downstream, theta_star, theta_train, u).max())
    closeness_term = dist**2
    return FlatnessClosenessBound(min_loss, closeness_term, flatness, min_loss + 0.5 * closeness_term * flatness)
