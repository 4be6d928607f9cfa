"""Closed-loop performance of static gains on the true noisy system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Diverged, NonConvergence, NumericalError, Unstable
from .riccati import CostSpec, LinearSystem, optimal_solution, sym

STABILITY_MARGIN = 1e-9
LYAP_TOL = 1e-12
OVERFLOW_GUARD = 1e8


@dataclass(frozen=True)
class PerformanceReport:
    K: np.ndarray
    stable: bool
    spectral_radius: float
    Sigma_K: np.ndarray | None = None
    J_K: float | None = None
    gap: float | None = None


def spectral_radius(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got {M.shape}")
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    return float(np.max(np.abs(eig))) if eig.size else 0.0


def closed_loop_matrix(true_sys: LinearSystem, K: np.ndarray) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (true_sys.m, true_sys.n):
        raise ValueError(f"gain must be {true_sys.m}x{true_sys.n}, got {K.shape}")
    return true_sys.A - true_sys.B @ K


def is_stabilizing(true_sys: LinearSystem, K: np.ndarray) -> bool:
    return spectral_radius(closed_loop_matrix(true_sys, K)) < 1 - STABILITY_MARGIN


def solve_lyapunov(true_sys: LinearSystem, K: np.ndarray, max_doublings: int = 200) -> np.ndarray:
    """Stationary state covariance under ``u = -Kx``.

    Accumulates ``sum_t L^t (sigma_w^2 I) (L')^t`` by squaring (Smith doubling):
    after k rounds the partial sum covers ``2^k`` terms.
    """
    L = closed_loop_matrix(true_sys, K)
    if spectral_radius(L) >= 1 - STABILITY_MARGIN:
        raise Unstable(f"closed loop has spectral radius {spectral_radius(L):.6g}")
    W = true_sys.sigma_w**2 * np.eye(true_sys.n)
    Sigma = W.copy()
    Lk = L.copy()
    for _ in range(max_doublings):
        Sigma = sym(Sigma + Lk @ Sigma @ Lk.T)
        Lk = Lk @ Lk
        residual = np.linalg.norm(L @ Sigma @ L.T + W - Sigma, 2)
        if residual <= LYAP_TOL * max(1.0, np.linalg.norm(Sigma, 2)):
            return Sigma
    raise NonConvergence("Lyapunov accumulation did not converge")


def infinite_horizon_cost(true_sys: LinearSystem, cost: CostSpec, K: np.ndarray) -> float:
    """Average stage cost ``trace((Q + K'RK) Sigma_K)``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Sigma = solve_lyapunov(true_sys, K)
    return float(np.trace((cost.Q + K.T @ cost.R @ K) @ Sigma))


def empirical_cost(
    true_sys: LinearSystem,
    cost: CostSpec,
    K: np.ndarray,
    T: int,
    trials: int,
    seed: int,
    x0: np.ndarray | None = None,
) -> tuple[float, float]:
    """Monte-Carlo estimate of the average cost; returns (mean, standard error).

    Trial ``l`` draws from ``default_rng([seed, l])`` so the result does not
    depend on how trials are scheduled.
    """
    if T < 1 or trials < 1:
        raise ValueError("T and trials must be >= 1")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    L = closed_loop_matrix(true_sys, K)
    n = true_sys.n
    noise = np.stack(
        [
            np.random.default_rng([seed, l]).standard_normal((T, n))
            for l in range(trials)
        ],
        axis=1,
    ) * true_sys.sigma_w
    x = np.zeros((trials, n)) if x0 is None else np.tile(np.asarray(x0, dtype=float), (trials, 1))
    weight = cost.Q + K.T @ cost.R @ K
    total = np.zeros(trials)
    for t in range(T):
        total += np.einsum("ti,ij,tj->t", x, weight, x)
        x = x @ L.T + noise[t]
        if not np.all(np.abs(x) < OVERFLOW_GUARD):
            raise Diverged(f"trajectory exceeded {OVERFLOW_GUARD:g} at t={t}")
    per_trial = total / T
    mean = float(per_trial.mean())
    stderr = float(per_trial.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return mean, stderr


def performance_gap(true_sys: LinearSystem, cost: CostSpec, K: np.ndarray, optimal=None) -> float:
    opt = optimal if optimal is not None else optimal_solution(true_sys, cost)
    return infinite_horizon_cost(true_sys, cost, K) - infinite_horizon_cost(true_sys, cost, opt.K_star)


def evaluate(true_sys: LinearSystem, cost: CostSpec, K: np.ndarray, optimal=None) -> PerformanceReport:
    """Stability, covariance, cost and gap in one report; never raises on instability."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    rho = spectral_radius(closed_loop_matrix(true_sys, K))
    if rho >= 1 - STABILITY_MARGIN:
        return PerformanceReport(K=K, stable=False, spectral_radius=rho)
    opt = optimal if optimal is not None else optimal_solution(true_sys, cost)
    Sigma = solve_lyapunov(true_sys, K)
    J = float(np.trace((cost.Q + K.T @ cost.R @ K) @ Sigma))
    J_star = infinite_horizon_cost(true_sys, cost, opt.K_star)
    return PerformanceReport(K=K, stable=True, spectral_radius=rho, Sigma_K=Sigma, J_K=J, gap=J - J_star)
