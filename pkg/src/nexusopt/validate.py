"""Theorem-validation suites behind the `validate` CLI subcommand.

Each check runs deterministic seeded fixtures, compares a measured quantity
against an analytic bound or tolerance, and reports one record per check:
{check_name, status, measured, bound, tolerance}. The acceptance tests reuse
these entry points with the full-strength settings.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateGradient
from .nexus import NexusConfig
from .numerics import fd_gradient, rng_root, rng_substream
from .oracles import (
    CurvatureBounds,
    closeness_bound_check,
    common_minimizer_taskset,
    convergence_contraction,
    cosgrad_analytic,
    expected_pseudo_gradient_exact,
    general_gap_bound,
    measure_sgd_contraction,
    monte_carlo_anisotropic_gap,
    monte_carlo_generalization_gap,
    nsgd_nexus_identity_check,
    quadratic_gap,
    quadratic_smoothness_constants,
    random_probe_point,
    random_quadratic_taskset,
    second_order_direction,
    second_order_error_bound,
    third_order_direction,
    third_order_tensor_term,
)
from .tasks import TaskFamily, TaskSet, random_cubic_task, random_spd_matrix

SUITES = ("all", "second_order", "third_order", "closeness", "convergence", "nsgd_identity", "generalization")


@dataclass
class CheckResult:
    check_name: str
    status: str  # "pass" | "fail"
    measured: float
    bound: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _result(name, ok, measured, bound, tolerance, detail=""):
    return CheckResult(name, "pass" if ok else "fail", float(measured), float(bound), float(tolerance), detail)


def _loglog_slope(gammas, residuals) -> float:
    lg = np.log(np.asarray(gammas, dtype=float))
    lr = np.log(np.asarray(residuals, dtype=float))
    return float(np.polyfit(lg, lr, 1)[0])


# --------------------------------------------------------------------------


def check_second_order(
    seed: int = 10130,
    n_sets: int = 20,
    gammas=(1e-2, 1e-3),
    slope_range=(2.8, 3.2),
    gamma_override: float | None = None,
) -> list:
    """Residual of the two-term expansion vs. the exact enumeration, gated by
    the cubic-in-gamma error bound, plus a log-log slope check.

    ``gamma_override`` replaces the gamma grid (single value, no slope check);
    the huge-gamma negative control uses it.
    """
    root = rng_root(int(seed))
    results = []
    if gamma_override is not None:
        gammas = (gamma_override,)
    dims = (2, 5)
    Ks = (2, 3)
    worst_ratio = 0.0
    slopes = []
    for idx in range(n_sets):
        rng = rng_substream(root, f"set/{idx}")
        K = Ks[idx % len(Ks)]
        dim = dims[(idx // 2) % len(dims)]
        ts = random_quadratic_taskset(dim, K, rng)
        theta = random_probe_point(ts, rng_substream(rng, "probe"))
        residuals = []
        for gamma in gammas:
            cfg = NexusConfig(float(gamma), K)
            exact = expected_pseudo_gradient_exact(ts, theta, cfg)
            approx = second_order_direction(ts, theta, cfg)
            resid = float(np.linalg.norm(exact - approx))
            residuals.append(resid)
            try:
                consts = quadratic_smoothness_constants(ts, theta, K * float(gamma))
                bound = second_order_error_bound(consts, K, float(gamma))
            except DegenerateGradient:
                # the gradient floor assumption fails over the reachable region,
                # so the bound gives no coverage at all
                bound = 0.0
            worst_ratio = max(worst_ratio, resid / bound if bound > 0 else np.inf)
        if len(gammas) >= 2:
            slopes.append(_loglog_slope(gammas, residuals))
    results.append(
        _result("second_order_residual_within_bound", worst_ratio <= 1.0, worst_ratio, 1.0, 0.0,
                f"max residual/bound over {n_sets} quadratic sets, gammas {tuple(gammas)}")
    )
    if slopes:
        lo, hi = slope_range
        bad = [s for s in slopes if not lo <= s <= hi]
        results.append(
            _result("second_order_residual_slope", not bad,
                    min(slopes) if not bad else bad[0], hi, lo,
                    f"log-log residual slopes in [{lo}, {hi}] for all sets")
        )
    # similarity-gradient formula vs. central differences
    worst_rel = 0.0
    for idx in range(50):
        rng = rng_substream(root, f"cosgrad/{idx}")
        dim = dims[idx % 2]
        if idx % 2 == 0:
            ts = random_quadratic_taskset(dim, 2, rng)
        else:
            ts = TaskSet([random_cubic_task(dim, rng_substream(rng, str(j)), 0.4) for j in range(2)])
        theta = random_probe_point(ts, rng_substream(rng, "probe"))
        analytic = cosgrad_analytic(ts[0], ts[1], theta)

        def cossim(x):
            gi, gj = ts[0].grad(x), ts[1].grad(x)
            return float(gi @ gj) / (np.linalg.norm(gi) * np.linalg.norm(gj))

        fd = fd_gradient(cossim, theta, eps=1e-6)
        denom = max(float(np.linalg.norm(fd)), 1e-12)
        worst_rel = max(worst_rel, float(np.linalg.norm(analytic - fd)) / denom)
    results.append(
        _result("cossim_gradient_matches_fd", worst_rel <= 1e-6, worst_rel, 1e-6, 1e-6,
                "analytic similarity gradient vs central differences, 50 quadratic/cubic pairs")
    )
    return results


def check_third_order(
    seed: int = 9041,
    n_sets: int = 4,
    gammas=(1e-1, 1e-2, 1e-3),
    slope_range=(3.8, 4.2),
) -> list:
    """Cubic K=2 fixtures: after subtracting the full three-term expansion the
    residual must scale as gamma^4; quadratic sets must have an exactly zero
    tensor term."""
    root = rng_root(int(seed))
    results = []
    slopes = []
    for idx in range(n_sets):
        rng = rng_substream(root, f"cubic/{idx}")
        ts = TaskSet([random_cubic_task(3, rng_substream(rng, str(j)), 0.5) for j in range(2)])
        theta = random_probe_point(ts, rng_substream(rng, "probe"))
        residuals = []
        for gamma in gammas:
            cfg = NexusConfig(float(gamma), 2)
            exact = expected_pseudo_gradient_exact(ts, theta, cfg)
            residuals.append(float(np.linalg.norm(exact - third_order_direction(ts, theta, cfg))))
        slopes.append(_loglog_slope(gammas, residuals))
    lo, hi = slope_range
    bad = [s for s in slopes if not lo <= s <= hi]
    results.append(
        _result("third_order_residual_slope", not bad, min(slopes) if not bad else bad[0], hi, lo,
                f"cubic K=2 residual slopes over gammas {tuple(gammas)}")
    )
    rng = rng_substream(root, "quad")
    ts = random_quadratic_taskset(3, 2, rng)
    theta = random_probe_point(ts, rng_substream(rng, "probe"))
    tensor_term = third_order_tensor_term(ts, theta, NexusConfig(1e-2, 2))
    norm = float(np.linalg.norm(tensor_term))
    results.append(
        _result("third_order_tensor_term_zero_on_quadratics", norm == 0.0, norm, 0.0, 0.0,
                "the third-derivative piece vanishes exactly when the tensor is zero")
    )
    return results


def check_closeness(seed: int = 5150, n_sets: int = 100, Ks=(2, 4, 8), slack: float = -1e-10) -> list:
    root = rng_root(int(seed))
    worst = np.inf
    for idx in range(n_sets):
        rng = rng_substream(root, f"set/{idx}")
        K = Ks[idx % len(Ks)]
        dim = 2 + idx % 4
        ts = random_quadratic_taskset(dim, K, rng)
        report = closeness_bound_check(ts)
        worst = min(worst, report.first_slack, report.second_slack)
    ok = worst >= slack
    return [
        _result("closeness_chain_inequalities", ok, worst, slack, abs(slack),
                f"min slack over {n_sets} random SPD sets, K in {tuple(Ks)}")
    ]


def check_convergence(seed: int = 77, kappas=(2, 5, 10), K: int = 4, steps: int = 200) -> list:
    root = rng_root(int(seed))
    results = []
    for kappa in kappas:
        mu, L = 1.0, float(kappa)
        gamma = 2.0 / (L + mu)
        factor = convergence_contraction(mu, L, gamma)
        rng = rng_substream(root, f"kappa/{kappa}")
        ts = common_minimizer_taskset(4, K, mu, L, rng)
        theta0 = ts[0].minimizer + rng.generator.standard_normal(4)
        ratios = measure_sgd_contraction(ts, theta0, gamma, steps, rng_substream(rng, "path"))
        worst = float(ratios.max())
        results.append(
            _result(f"convergence_per_step_kappa_{kappa}", worst <= factor + 1e-12, worst, factor, 1e-12,
                    f"max per-step squared-distance ratio over {steps} steps")
        )
        # the 200-step cumulative contraction underflows double precision, so compare logs
        log_cumulative = float(np.sum(np.log(ratios)))
        log_target = 2 * steps * math.log((kappa - 1) / (kappa + 1))
        results.append(
            _result(f"convergence_cumulative_kappa_{kappa}", log_cumulative <= log_target + 1e-9,
                    log_cumulative, log_target, 1e-9,
                    "log of the cumulative contraction at the optimal step size")
        )
    return results


def check_generalization(seed: int = 314, n_draws: int = 10_000) -> list:
    root = rng_root(int(seed))
    results = []
    grid = [(a, K, sig) for a in (0.5, 1.0, 2.0) for K, sig in ((2, 0.25), (4, 0.5), (8, 1.0))]
    worst_z = 0.0
    for a, K, sig in grid:
        family = TaskFamily(np.zeros(4), sig, a)
        mean, se = monte_carlo_generalization_gap(family, K, n_draws, rng_substream(root, f"{a}/{K}/{sig}"))
        z = abs(mean - quadratic_gap(a, K, sig)) / se
        worst_z = max(worst_z, z)
    results.append(
        _result("quadratic_gap_matches_theory", worst_z <= 3.0, worst_z, 3.0, 3.0,
                f"max |gap - a*sigma^2/K| / SE over 9 grid points, {n_draws} draws each")
    )
    worst_excess = -np.inf
    for kappa in (2.0, 5.0):
        rng = rng_substream(root, f"aniso/{kappa}")
        lam_min, lam_max = 1.0, kappa
        A = random_spd_matrix(4, rng, (lam_min, lam_max))
        eigs = np.linalg.eigvalsh(A)
        cb = CurvatureBounds(float(eigs.min()), float(eigs.max()))
        K, sig = 4, 0.5
        mean, se = monte_carlo_anisotropic_gap(A, np.zeros(4), sig, K, n_draws, rng_substream(rng, "mc"))
        bound = general_gap_bound(cb, K, sig)
        worst_excess = max(worst_excess, (mean + 3 * se) - bound)
    results.append(
        _result("strongly_convex_bound_holds", worst_excess <= 0.0, worst_excess, 0.0, 0.0,
                "measured anisotropic gap + 3 SE stays below the curvature bound")
    )
    return results


def check_nsgd_identity(seed: int = 12, n_instances: int = 10, n_pairs: int = 50) -> list:
    root = rng_root(int(seed))
    worst = 0.0
    for idx in range(n_instances):
        rng = rng_substream(root, f"inst/{idx}")
        ts = random_quadratic_taskset(3, 2, rng)
        theta0 = random_probe_point(ts, rng_substream(rng, "probe"))
        div = nsgd_nexus_identity_check(theta0, ts, gamma=0.05, n_pairs=n_pairs, rng=rng_substream(rng, "order"))
        worst = max(worst, div)
    return [
        _result("nsgd_equals_two_step_nexus", worst <= 1e-12, worst, 1e-12, 1e-12,
                f"max trajectory divergence over {n_instances} instances x {n_pairs} step pairs")
    ]


_SUITE_FNS = {
    "second_order": check_second_order,
    "third_order": check_third_order,
    "closeness": check_closeness,
    "convergence": check_convergence,
    "generalization": check_generalization,
    "nsgd_identity": check_nsgd_identity,
}


def validate_theorems(suite: str = "all", gamma_override: float | None = None) -> list:
    """Run one suite (or all) and return the list of CheckResults."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    names = list(_SUITE_FNS) if suite == "all" else [suite]
    results = []
    for name in names:
        fn = _SUITE_FNS[name]
        if name == "second_order" and gamma_override is not None:
            results.extend(fn(gamma_override=gamma_override))
        else:
            results.extend(fn())
    return results


def report_to_dict(results) -> dict:
    return {
        "checks": [asdict(r) for r in results],
        "all_passed": all(r.passed for r in results),
    }
