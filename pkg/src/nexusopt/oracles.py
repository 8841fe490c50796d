"""Analytic ground truth for the theorem suite.

Exact expected pseudo-gradients by sequence enumeration, closed-form
similarity gradients, Taylor expansions of the inner-loop expectation,
error-bound constants, generalization-gap formulas, and convergence
contractions.

Two distinct "similarity gradient" objects appear and are easy to conflate:

* ``cosgrad_analytic`` is the gradient of the scalar map
  theta -> CosSim(grad L_i(theta), grad L_j(theta)). Writing h_i for the unit
  gradient, P_i for the projector h_i h_i^T and H_i for the Hessian, it is
  H_i (I - P_i) h_j / ||g_i||  +  H_j (I - P_j) h_i / ||g_j||  -- the Hessian
  acts on the *projected* unit gradient. It matches finite differences and
  vanishes identically for parallel gradients.

* ``alignment_pair_direction`` is J_i h_j + J_j h_i with
  J_i = (I - P_i) H_i / ||g_i|| the Jacobian of the normalized-gradient field
  (projection applied *after* the Hessian product). This is the quantity the
  inner loop's second-order dynamics actually produce, diagonal pairs
  included; it coincides with ``cosgrad_analytic`` when the Hessians commute
  with the gradient projectors (isotropic curvature), but not in general.

The expansion oracles below use the second form because they must reproduce
the exact enumeration to the stated order; the first form is kept for
verifying the similarity-gradient formula itself against finite differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradient, EnumerationTooLarge, NotStationary, StepSizeOutOfRange
from .nexus import NexusConfig, inner_loop
from .numerics import RngStream, as_params
from .optimizers import nsgd_step, sgd_step
from .tasks import QuadraticTask, TaskFamily, TaskSet, stationary_point, train_grad

DEFAULT_ENUMERATION_CAP = 256


# --------------------------------------------------------------------------
# Smoothness constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothnessConstants:
    """Region-dependent constants: gradient bounds, Hessian bound and
    Lipschitz constant, third-derivative bound."""

    grad_lower: float
    grad_upper: float
    hessian_bound: float
    hessian_lipschitz: float = 0.0
    third_bound: float = 0.0

    def __post_init__(self):
        if not 0 < self.grad_lower <= self.grad_upper:
            raise ValueError("need 0 < grad_lower <= grad_upper")
        if self.hessian_bound <= 0 or self.hessian_lipschitz < 0 or self.third_bound < 0:
            raise ValueError("invalid smoothness constants")


@dataclass(frozen=True)
class CurvatureBounds:
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if not 0 < self.lambda_min <= self.lambda_max:
            raise ValueError("need 0 < lambda_min <= lambda_max")

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min


def quadratic_smoothness_constants(ts: TaskSet, theta: np.ndarray, radius: float) -> SmoothnessConstants:
    """Exact constants for quadratic tasks over the ball of given radius around theta.

    The ball covers every point an inner loop of total step budget ``radius``
    can visit. The gradient lower bound uses
    ||A(x - t)|| >= ||A(theta - t)|| - lambda_max(A) * radius, which is a valid
    (possibly conservative) lower bound; Hessians are constant so rho = 0.
    """
    theta = as_params(theta, ts.dim)
    g_lower = np.inf
    g_upper = 0.0
    h_bound = 0.0
    for t in ts.tasks:
        if not isinstance(t, QuadraticTask):
            raise TypeError("quadratic_smoothness_constants expects quadratic tasks")
        lam_max = float(np.linalg.eigvalsh(t.hessian).max())
        gnorm = float(np.linalg.norm(t.grad(theta)))
        g_lower = min(g_lower, gnorm - lam_max * radius)
        g_upper = max(g_upper, gnorm + lam_max * radius)
        h_bound = max(h_bound, lam_max)
    if g_lower <= 0:
        raise DegenerateGradient(f"gradient lower bound {g_lower:g} not positive over the probed region")
    return SmoothnessConstants(g_lower, g_upper, h_bound, 0.0, 0.0)


def lipschitz_constants(c: SmoothnessConstants) -> tuple:
    """(L1, L2): Lipschitz constants of the normalized gradient and of its Jacobian."""
    L1 = c.hessian_bound / c.grad_lower
    L2 = (3.0 * c.hessian_bound**2 + c.hessian_lipschitz * c.grad_lower) / c.grad_lower**2
    return L1, L2


def second_order_error_bound(c: SmoothnessConstants, K: int, gamma: float) -> float:
    """Bound on the gap between the exact expected pseudo-gradient and its
    two-term expansion: (1/6) * (4L^2 + rho*G_min)/G_min^2 * K^3 gamma^3."""
    return (4.0 * c.hessian_bound**2 + c.hessian_lipschitz * c.grad_lower) / c.grad_lower**2 * K**3 * gamma**3 / 6.0


def third_order_error_bound(c: SmoothnessConstants, K: int, gamma: float) -> float:
    """Residual bound after the third-order term; vanishes with the third-derivative bound."""
    m3, L, g = c.third_bound, c.hessian_bound, c.grad_lower
    return (m3 / 24.0 + m3 * L / (8.0 * g)) * K**4 * gamma**4 + m3 * L**2 / (40.0 * g**2) * K**5 * gamma**5


def directional_sharpness_weight(K: int) -> float:
    """Weight of the generalized directional-sharpness term in the implicit
    third-order objective: (K-1)(2K-1) / (12 K^2)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return (K - 1) * (2 * K - 1) / (12.0 * K**2)


# --------------------------------------------------------------------------
# Normalized-gradient field derivatives
# --------------------------------------------------------------------------


def _unit_gradient(task, theta, floor=1e-12):
    g = task.grad(theta)
    n = float(np.linalg.norm(g))
    if n < floor:
        raise DegenerateGradient(f"gradient norm {n:g} below floor {floor:g}")
    return g, n, g / n


def cosgrad_analytic(task_i, task_j, theta: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Gradient of CosSim(grad L_i, grad L_j) with respect to theta.

    Needs only Hessian-vector products, so it works for any task kind
    (finite-difference HVPs for the MLP). Symmetric in (i, j); identically
    zero when the two gradients are parallel.
    """
    theta = as_params(theta)
    g_i, n_i, h_i = _unit_gradient(task_i, theta, floor)
    g_j, n_j, h_j = _unit_gradient(task_j, theta, floor)
    proj_j = h_j - (h_i @ h_j) * h_i
    proj_i = h_i - (h_j @ h_i) * h_j
    term_i = task_i.hvp(theta, proj_j) / n_i if np.linalg.norm(proj_j) > 0 else np.zeros_like(theta)
    term_j = task_j.hvp(theta, proj_i) / n_j if np.linalg.norm(proj_i) > 0 else np.zeros_like(theta)
    return term_i + term_j


def grad_jacobian_apply(task, theta: np.ndarray, v: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """J v where J is the Jacobian of theta -> grad L / ||grad L||."""
    theta = as_params(theta)
    _, n, h = _unit_gradient(task, theta, floor)
    Hv = task.hvp(theta, v)
    return (Hv - (h @ Hv) * h) / n


def alignment_pair_direction(task_i, task_j, theta: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """J_i h_j + J_j h_i: the per-pair alignment direction produced by the
    inner-loop dynamics (diagonal pairs i == j included by callers)."""
    theta = as_params(theta)
    _, _, h_i = _unit_gradient(task_i, theta, floor)
    _, _, h_j = _unit_gradient(task_j, theta, floor)
    return grad_jacobian_apply(task_i, theta, h_j, floor) + grad_jacobian_apply(task_j, theta, h_i, floor)


def normalized_grad_second_derivative(task, theta: np.ndarray, u: np.ndarray, v: np.ndarray,
                                      floor: float = 1e-12) -> np.ndarray:
    """D^2 of the normalized-gradient field along (u, v); needs the Hessian and,
    for cubic tasks, the constant third-derivative tensor."""
    theta = as_params(theta)
    _, n, h = _unit_gradient(task, theta, floor)
    H = task.hessian_at(theta)
    Hu, Hv = H @ u, H @ v
    proj = lambda x: x - (h @ x) * h
    out = -((h @ Hv) * proj(Hu) + (h @ Hu) * proj(Hv)) / n**2
    out = out - h * float(v @ H @ proj(Hu)) / n**2
    T = task.third_tensor()
    if T is not None:
        out = out + proj(np.einsum("abc,b,c->a", T, u, v)) / n
    return out


# --------------------------------------------------------------------------
# Exact expectation and its Taylor expansions
# --------------------------------------------------------------------------


def expected_pseudo_gradient_exact(
    ts: TaskSet,
    theta: np.ndarray,
    cfg: NexusConfig,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> np.ndarray:
    """Exact E[pseudo-gradient] by enumerating every index sequence.

    All n^M sequences of M inner steps over n tasks are equally likely under
    i.i.d. uniform sampling; each is run deterministically and the results are
    averaged in a fixed order, so the output is bit-reproducible.
    """
    theta = as_params(theta, ts.dim)
    n, M = len(ts), cfg.inner_steps
    count = n**M
    if count > enumeration_cap:
        raise EnumerationTooLarge(f"{n}^{M} = {count} sequences exceed cap {enumeration_cap}")
    fixed = NexusConfig(cfg.gamma, cfg.inner_steps, "fixed_sequence", cfg.variant, cfg.grad_floor)
    total = np.zeros(ts.dim)
    for seq in itertools.product(range(n), repeat=M):
        total += inner_loop(theta, ts, fixed, sequence=seq).value
    return total / count


def monte_carlo_pseudo_gradient(
    ts: TaskSet, theta: np.ndarray, cfg: NexusConfig, rng: RngStream, n_draws: int
) -> tuple:
    """Monte-Carlo estimate of E[pseudo-gradient]; returns (mean, per-coordinate SE)."""
    theta = as_params(theta, ts.dim)
    samples = np.empty((n_draws, ts.dim))
    for i in range(n_draws):
        samples[i] = inner_loop(theta, ts, cfg, rng=rng).value
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n_draws)
    return mean, se


def first_order_direction(ts: TaskSet, theta: np.ndarray, cfg: NexusConfig) -> np.ndarray:
    """gamma * (M/n) * sum of unit gradients (cosine) or raw gradients (dot)."""
    theta = as_params(theta, ts.dim)
    n, M = len(ts), cfg.inner_steps
    total = np.zeros(ts.dim)
    for t in ts.tasks:
        if cfg.variant == "cosine":
            total += _unit_gradient(t, theta, cfg.grad_floor)[2]
        else:
            total += t.grad(theta)
    return cfg.gamma * (M / n) * total


def interaction_term(ts: TaskSet, theta: np.ndarray, cfg: NexusConfig) -> np.ndarray:
    """The order-gamma^2 coefficient's direction sum.

    cosine: sum over all ordered pairs (i, j), diagonal included, of J_i h_j;
    dot:    same with H_i g_j. The expansion weight M(M-1)/(2 n^2) is applied
    by the caller.
    """
    theta = as_params(theta, ts.dim)
    total = np.zeros(ts.dim)
    if cfg.variant == "cosine":
        units = [_unit_gradient(t, theta, cfg.grad_floor)[2] for t in ts.tasks]
        s = np.sum(units, axis=0)
        for t in ts.tasks:
            total += grad_jacobian_apply(t, theta, s, cfg.grad_floor)
    else:
        grads = [t.grad(theta) for t in ts.tasks]
        s = np.sum(grads, axis=0)
        for t in ts.tasks:
            total += t.hvp(theta, s)
    return total


def second_order_direction(ts: TaskSet, theta: np.ndarray, cfg: NexusConfig) -> np.ndarray:
    """Two-term expansion of the expected pseudo-gradient.

    With M inner steps over n tasks the interaction weight is M(M-1)/(4 n^2)
    against the symmetrized pair sum -- for M = n = K this is the familiar
    (K-1)/(4K). The pair sum runs over all ordered pairs including i == j
    (repeated draws of the same task are perfectly correlated, and their
    contribution does not vanish); see the module docstring for why the pair
    direction is J_i h_j + J_j h_i rather than the similarity-map gradient.
    """
    n, M = len(ts), cfg.inner_steps
    weight = M * (M - 1) / (2.0 * n**2)
    return first_order_direction(ts, theta, cfg) - cfg.gamma**2 * weight * interaction_term(ts, theta, cfg)


def third_order_term(ts: TaskSet, theta: np.ndarray, cfg: NexusConfig) -> np.ndarray:
    """The exact gamma^3 coefficient of the expected pseudo-gradient (cosine variant).

    Three pieces: nested Jacobian products J_a J_b h_c over strictly ordered
    triples, and second-derivative contractions Q_a[h_b, h_c] split by whether
    the two earlier draws coincide (they are perfectly correlated when they
    do, which is why the diagonal and off-diagonal pieces carry different
    weights).
    """
    if cfg.variant != "cosine":
        raise ValueError("third_order_term is defined for the cosine variant")
    theta = as_params(theta, ts.dim)
    n, M = len(ts), cfg.inner_steps
    units = [_unit_gradient(t, theta, cfg.grad_floor)[2] for t in ts.tasks]
    total = np.zeros(ts.dim)
    c_diag = M * (M - 1) / (4.0 * n**2)
    for a, ta in enumerate(ts.tasks):
        for b in range(n):
            total += c_diag * normalized_grad_second_derivative(ta, theta, units[b], units[b], cfg.grad_floor)
    c_off = M * (M - 1) * (M - 2) / (6.0 * n**3)
    if c_off > 0:
        # the nested-Jacobian triple sum factorizes through s = sum_c h_c
        s = np.sum(units, axis=0)
        js = np.zeros(ts.dim)
        for tb in ts.tasks:
            js += grad_jacobian_apply(tb, theta, s, cfg.grad_floor)
        for a, ta in enumerate(ts.tasks):
            total += c_off * grad_jacobian_apply(ta, theta, js, cfg.grad_floor)
            for b in range(n):
                for c in range(n):
                    total += c_off * normalized_grad_second_derivative(ta, theta, units[b], units[c], cfg.grad_floor)
    return total


def third_order_tensor_term(ts: TaskSet, theta: np.ndarray, cfg: NexusConfig) -> np.ndarray:
    """The third-derivative-dependent piece of the gamma^3 coefficient.

    Exactly zero for quadratic task sets (the tensor vanishes); this is the
    part whose magnitude the third-derivative bound controls.
    """
    theta = as_params(theta, ts.dim)
    n, M = len(ts), cfg.inner_steps
    units = [_unit_gradient(t, theta, cfg.grad_floor)[2] for t in ts.tasks]
    total = np.zeros(ts.dim)
    c_diag = M * (M - 1) / (4.0 * n**2)
    c_off = M * (M - 1) * (M - 2) / (6.0 * n**3)
    for a, ta in enumerate(ts.tasks):
        T = ta.third_tensor()
        if T is None:
            continue
        g, nrm, h = _unit_gradient(ta, theta, cfg.grad_floor)
        proj = lambda x: x - (h @ x) * h
        for b in range(n):
            total += c_diag * proj(np.einsum("abc,b,c->a", T, units[b], units[b])) / nrm
            if c_off > 0:
                for c in range(n):
                    total += c_off * proj(np.einsum("abc,b,c->a", T, units[b], units[c])) / nrm
    return total


def third_order_direction(ts: TaskSet, theta: np.ndarray, cfg: NexusConfig) -> np.ndarray:
    """Three-term expansion: second-order direction plus the exact gamma^3 term."""
    return second_order_direction(ts, theta, cfg) + cfg.gamma**3 * third_order_term(ts, theta, cfg)


def gamma2_coefficient_from_enumeration(
    ts: TaskSet, theta: np.ndarray, cfg: NexusConfig, nodes=None
) -> np.ndarray:
    """Extract the gamma^2 coefficient of E[pseudo-gradient] from exact enumerations.

    For the dot variant on quadratics the expectation is a degree-M polynomial
    in gamma with zero constant term, so interpolation at M distinct nodes is
    exact; for the cosine variant the same extraction carries an O(gamma)
    contamination, which is itself invariant under loss rescaling.
    """
    M = cfg.inner_steps
    if nodes is None:
        nodes = [cfg.gamma * (k + 1) / M for k in range(M)]
    nodes = np.asarray(nodes, dtype=np.float64)
    if len(nodes) < M:
        raise ValueError(f"need at least {M} nodes for a degree-{M} polynomial")
    values = []
    for g in nodes:
        cfg_g = NexusConfig(float(g), cfg.inner_steps, cfg.sampling, cfg.variant, cfg.grad_floor)
        values.append(expected_pseudo_gradient_exact(ts, theta, cfg_g))
    V = np.vander(nodes, N=len(nodes) + 1, increasing=True)[:, 1:]  # columns gamma^1 .. gamma^len
    coeffs, *_ = np.linalg.lstsq(V, np.asarray(values), rcond=None)
    return coeffs[1]


# --------------------------------------------------------------------------
# Closeness chain, generalization gaps, convergence
# --------------------------------------------------------------------------


@dataclass
class ClosenessChainReport:
    closeness: float
    inner_product_bound: float
    cossim_bound: float
    lambda_min: float
    grad_upper: float

    @property
    def first_slack(self) -> float:
        return self.inner_product_bound - self.closeness

    @property
    def second_slack(self) -> float:
        return self.cossim_bound - self.inner_product_bound

    def holds(self, slack: float = -1e-10) -> bool:
        return self.first_slack >= slack and self.second_slack >= slack


def closeness_bound_check(ts: TaskSet, theta: np.ndarray | None = None) -> ClosenessChainReport:
    """Evaluate the closeness / inner-product / cosine-similarity chain at the
    stationary point of a quadratic task set."""
    theta = stationary_point(ts) if theta is None else as_params(theta, ts.dim)
    resid = float(np.linalg.norm(train_grad(ts, theta)))
    if resid > 1e-9:
        raise NotStationary(f"|train gradient| = {resid:g} > 1e-9 at the supplied point")
    K = len(ts)
    grads, dists, curvs = [], [], []
    for t in ts.tasks:
        grads.append(t.grad(theta))
        delta = theta - t.minimizer
        dist = float(np.linalg.norm(delta))
        dists.append(dist)
        if dist > 1e-15:
            u = delta / dist
            curvs.append(float(u @ t.hessian @ u))
    lam = min(curvs) if curvs else np.inf
    G = max(float(np.linalg.norm(g)) for g in grads)
    closeness_val = float(np.mean(np.asarray(dists) ** 2))
    cross = 0.0
    one_minus_cos = 0.0
    for i in range(K):
        for j in range(K):
            if i == j:
                continue
            dot = float(grads[i] @ grads[j])
            cross += -dot
            ni, nj = float(np.linalg.norm(grads[i])), float(np.linalg.norm(grads[j]))
            if ni > 0 and nj > 0:
                one_minus_cos += 1.0 - dot / (ni * nj)
            # zero-gradient pairs contribute nothing: the common-minimizer case
    middle = cross / (K * lam**2) if np.isfinite(lam) else 0.0
    right = G**2 * one_minus_cos / (K * lam**2) if np.isfinite(lam) else 0.0
    return ClosenessChainReport(closeness_val, middle, right, float(lam), G)


def quadratic_gap(a: float, K: int, sigma_sq: float) -> float:
    """Expected downstream generalization gap for the isotropic quadratic family."""
    if a <= 0 or K < 1 or sigma_sq < 0:
        raise ValueError("need a > 0, K >= 1, sigma_sq >= 0")
    return a * sigma_sq / K


def general_gap_bound(cb: CurvatureBounds, K: int, sigma_sq: float) -> float:
    """Strongly-convex generalization bound lambda_max (kappa^2 + 1) / (2K) * sigma^2."""
    if K < 1 or sigma_sq < 0:
        raise ValueError("need K >= 1, sigma_sq >= 0")
    return cb.lambda_max * (cb.kappa**2 + 1.0) / (2.0 * K) * sigma_sq


def monte_carlo_generalization_gap(
    family: TaskFamily, K: int, n_draws: int, rng: RngStream
) -> tuple:
    """Monte-Carlo estimate of the downstream gap; returns (mean, SE).

    Each draw samples fresh training minimizers and one downstream minimizer,
    places the trained parameter at the training stationary point (the mean of
    the minimizers for the isotropic family), and measures downstream loss
    minus training loss.
    """
    d, a = family.dim, family.curvature
    scale = np.sqrt(family.variance / d)
    gen = rng.generator
    train_mins = family.basin_mean + scale * gen.standard_normal((n_draws, K, d))
    down_mins = family.basin_mean + scale * gen.standard_normal((n_draws, d))
    theta_bar = train_mins.mean(axis=1)
    c_train = 0.5 * a * np.mean(np.sum((theta_bar[:, None, :] - train_mins) ** 2, axis=2), axis=1)
    down = 0.5 * a * np.sum((theta_bar - down_mins) ** 2, axis=1)
    gaps = down - c_train
    return float(gaps.mean()), float(gaps.std(ddof=1) / np.sqrt(n_draws))


def monte_carlo_anisotropic_gap(
    A: np.ndarray, basin_mean: np.ndarray, sigma_sq: float, K: int, n_draws: int, rng: RngStream
) -> tuple:
    """Same measurement with a shared anisotropic SPD Hessian."""
    basin_mean = as_params(basin_mean)
    d = basin_mean.shape[0]
    scale = np.sqrt(sigma_sq / d)
    gen = rng.generator
    train_mins = basin_mean + scale * gen.standard_normal((n_draws, K, d))
    down_mins = basin_mean + scale * gen.standard_normal((n_draws, d))
    theta_bar = train_mins.mean(axis=1)

    def quad(diff):
        return 0.5 * np.einsum("...a,ab,...b->...", diff, A, diff)

    c_train = np.mean(quad(theta_bar[:, None, :] - train_mins), axis=1)
    gaps = quad(theta_bar - down_mins) - c_train
    return float(gaps.mean()), float(gaps.std(ddof=1) / np.sqrt(n_draws))


def convergence_contraction(mu: float, L: float, gamma: float) -> float:
    """Per-step squared-distance contraction factor 1 - 2*gamma*mu*L/(L+mu)."""
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if not 0 < gamma <= 2.0 / (L + mu):
        raise StepSizeOutOfRange(f"gamma must lie in (0, {2.0 / (L + mu):g}], got {gamma}")
    return 1.0 - 2.0 * gamma * mu * L / (L + mu)


def measure_sgd_contraction(
    ts: TaskSet, theta0: np.ndarray, gamma: float, steps: int, rng: RngStream
) -> np.ndarray:
    """Per-step squared-distance ratios of task-sampled plain SGD toward the
    common minimizer (the raw-gradient inner dynamics the convergence theorem
    analyzes).

    The quadratic update map is linear in the displacement, so each step is
    taken from the renormalized displacement direction: the ratios are those
    of the real trajectory, but immune to the double-precision floor that a
    couple hundred optimal-rate contractions would otherwise hit (the raw
    distance underflows past machine precision after roughly 35 steps).
    """
    theta_star = ts.tasks[0].minimizer
    for t in ts.tasks:
        if float(np.linalg.norm(t.minimizer - theta_star)) > 1e-12:
            raise ValueError("tasks must share a common minimizer")
    theta0 = as_params(theta0, ts.dim)
    u = theta0 - theta_star
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        return np.zeros(steps)
    u = u / norm
    ratios = np.empty(steps)
    for m in range(steps):
        k = int(rng.generator.integers(0, len(ts)))
        stepped = sgd_step(theta_star + u, ts[k].grad(theta_star + u), gamma)
        w = stepped - theta_star
        ratios[m] = float(w @ w)
        wnorm = float(np.linalg.norm(w))
        if wnorm == 0.0:
            ratios[m + 1 :] = 0.0
            break
        u = w / wnorm
    return ratios


def nsgd_nexus_identity_check(
    theta0: np.ndarray, ts: TaskSet, gamma: float, n_pairs: int, rng: RngStream
) -> float:
    """Max parameter divergence between 2*n_pairs normalized-SGD steps and
    n_pairs two-inner-step outer iterations with a unit-step plain-SGD outer,
    consuming the same task order."""
    theta0 = as_params(theta0, ts.dim)
    order = rng.generator.integers(0, len(ts), size=2 * n_pairs)
    theta_nsgd = theta0.copy()
    theta_nexus = theta0.copy()
    cfg = NexusConfig(gamma, 2, "fixed_sequence", "cosine")
    max_div = 0.0
    for p in range(n_pairs):
        pair = order[2 * p : 2 * p + 2]
        for k in pair:
            theta_nsgd = nsgd_step(theta_nsgd, ts[int(k)].grad(theta_nsgd), gamma)
        pg = inner_loop(theta_nexus, ts, cfg, sequence=pair)
        theta_nexus = sgd_step(theta_nexus, pg.value, 1.0)
        max_div = max(max_div, float(np.linalg.norm(theta_nsgd - theta_nexus)))
    return max_div


# --------------------------------------------------------------------------
# Instance generators shared by the validation suites and tests
# --------------------------------------------------------------------------


def random_quadratic_taskset(
    dim: int, K: int, rng: RngStream, eig_range=(0.5, 3.0), center_scale: float = 1.0
) -> TaskSet:
    from .tasks import random_spd_matrix

    gen = rng.generator
    tasks = [
        QuadraticTask(random_spd_matrix(dim, rng, eig_range), center_scale * gen.standard_normal(dim))
        for _ in range(K)
    ]
    return TaskSet(tasks)


def random_probe_point(ts: TaskSet, rng: RngStream, min_grad: float = 0.3, tries: int = 64) -> np.ndarray:
    """A point where every task gradient is comfortably non-degenerate."""
    gen = rng.generator
    for _ in range(tries):
        theta = gen.standard_normal(ts.dim)
        if min(float(np.linalg.norm(t.grad(theta))) for t in ts.tasks) >= min_grad:
            return theta
    raise DegenerateGradient(f"could not find a probe point with gradient norms >= {min_grad}")


def common_minimizer_taskset(dim: int, K: int, mu: float, L: float, rng: RngStream) -> TaskSet:
    """Quadratics sharing one minimizer, eigenvalues spanning exactly [mu, L]."""
    gen = rng.generator
    theta_star = gen.standard_normal(dim)
    tasks = []
    for _ in range(K):
        Q, _ = np.linalg.qr(gen.standard_normal((dim, dim)))
        eigs = gen.uniform(mu, L, size=dim)
        eigs[0], eigs[-1] = mu, L
        tasks.append(QuadraticTask((Q * eigs) @ Q.T, theta_star.copy()))
    return TaskSet(tasks)
