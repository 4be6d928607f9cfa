"""Epoch-doubling adaptive receding-horizon LQ control with regret accounting.

Time is split at ``t_k = 2^k``. During the first ``k0`` epochs the initial gain
``K0`` is applied with unit Gaussian exploration. At every ``t_k`` with
``k >= k0`` the model is re-fitted on the transitions of the previous epoch and
a new receding-horizon gain (terminal weight zero) is used until ``t_{k+1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, InvalidRate, RankDeficient, Unstable
from .performance import OVERFLOW_GUARD, is_stabilizing
from .riccati import CostSpec, LinearSystem, RhcConfig, mpc_gain, optimal_solution
from .sysid import fit_transitions, model_error

INFORMATIVE_TOL = 1e-6


def inverse_sqrt_schedule(t_k: int) -> float:
    """Exploration std with variance ``1 / sqrt(t_k)``."""
    return t_k**-0.25


@dataclass(frozen=True)
class AdaptiveConfig:
    K0: np.ndarray
    T_total: int
    k0: int = 3
    horizon_mode: str = "fixed"  # "fixed" or "adaptive_log"
    N: int | None = None
    gamma_bar: float | None = None
    seed: int = 0
    sigma_schedule: object = inverse_sqrt_schedule
    max_N: int = 200
    informative_tol: float = INFORMATIVE_TOL
    overflow_guard: float = OVERFLOW_GUARD
    oracle_model: bool = False

    def __post_init__(self):
        object.__setattr__(self, "K0", np.atleast_2d(np.asarray(self.K0, dtype=float)))
        if self.horizon_mode not in ("fixed", "adaptive_log"):
            raise ValueError(f"unknown horizon mode {self.horizon_mode!r}")
        if self.horizon_mode == "fixed" and (self.N is None or self.N < 1):
            raise ValueError("fixed horizon mode needs N >= 1")
        if self.horizon_mode == "adaptive_log" and self.gamma_bar is None:
            raise ValueError("adaptive_log mode needs gamma_bar")
        if self.k0 < 1:
            raise ValueError("k0 must be >= 1")
        if self.T_total < 2 ** (self.k0 + 1):
            raise ValueError(f"T_total must be >= 2^(k0+1) = {2 ** (self.k0 + 1)}")

    def horizon(self, t_k: int) -> int:
        if self.horizon_mode == "fixed":
            return int(self.N)
        return horizon_schedule(t_k, self.gamma_bar, self.max_N)

    @property
    def label(self) -> str:
        return f"fixed_N{self.N}" if self.horizon_mode == "fixed" else "adaptive_log"


@dataclass
class EpochRecord:
    k: int
    t_k: int
    N: int
    K: np.ndarray
    sigma: float
    A_hat: np.ndarray | None = None
    B_hat: np.ndarray | None = None
    eps_measured: float | None = None
    regressor_min_singular: float | None = None
    carried_over: bool = False


@dataclass
class RegretTrace:
    x: np.ndarray
    u: np.ndarray
    stage_cost: np.ndarray
    epoch: np.ndarray
    cumulative_regret: np.ndarray
    J_star: float
    epochs: list = field(default_factory=list)
    seed: int = 0
    mode: str = ""

    @property
    def T(self) -> int:
        return len(self.stage_cost)


def horizon_schedule(t_k: float, gamma_bar: float, max_N: int = 200) -> int:
    """``N = ceil(-log(t_k) / (4 log gamma_bar))``, clipped to ``[1, max_N]``."""
    if not 0 < gamma_bar < 1:
        raise InvalidRate(f"gamma_bar must lie in (0, 1), got {gamma_bar}")
    if t_k < 2:
        raise ValueError("t_k must be >= 2")
    raw = -math.log(t_k) / (4 * math.log(gamma_bar))
    # absorb rounding so that exact integers are not bumped up
    return int(min(max_N, max(1, math.ceil(raw - 1e-9))))


def epoch_of(t: int) -> int:
    return 0 if t < 1 else int(t).bit_length() - 1


def run_adaptive(true_sys: LinearSystem, cost: CostSpec, cfg: AdaptiveConfig, optimal=None) -> RegretTrace:
    if not is_stabilizing(true_sys, cfg.K0):
        raise Unstable("initial gain K0 does not stabilize the true system")
    opt = optimal if optimal is not None else optimal_solution(true_sys, cost)
    n, m, T = true_sys.n, true_sys.m, cfg.T_total
    w = true_sys.sigma_w * np.random.default_rng([cfg.seed, 0]).standard_normal((T, n))
    g = np.random.default_rng([cfg.seed, 1]).standard_normal((T, m))

    xs = np.zeros((T + 1, n))
    us = np.zeros((T, m))
    epochs = np.zeros(T, dtype=int)
    records: list[EpochRecord] = [EpochRecord(k=0, t_k=0, N=0, K=cfg.K0, sigma=1.0)]
    K, sigma = cfg.K0, 1.0
    A, B = true_sys.A, true_sys.B
    for t in range(T):
        k = epoch_of(t)
        if t >= 2 and t == 2**k and k >= cfg.k0:
            rec = _update(true_sys, cost, cfg, k, xs, us, records[-1])
            records.append(rec)
            K, sigma = rec.K, rec.sigma
        x = xs[t]
        u = -K @ x + sigma * g[t]
        us[t] = u
        epochs[t] = k
        xs[t + 1] = A @ x + B @ u + w[t]
        if not np.all(np.abs(xs[t + 1]) < cfg.overflow_guard):
            raise Diverged(f"state exceeded {cfg.overflow_guard:g} at t={t + 1} (epoch {k})")

    stage = cost.stage(xs[:T], us)
    return RegretTrace(
        x=xs[:T],
        u=us,
        stage_cost=stage,
        epoch=epochs,
        cumulative_regret=np.cumsum(stage - opt.J_star),
        J_star=opt.J_star,
        epochs=records,
        seed=cfg.seed,
        mode=cfg.label,
    )


def _update(true_sys, cost, cfg, k, xs, us, previous: EpochRecord) -> EpochRecord:
    t_k = 2**k
    N = cfg.horizon(t_k)
    sigma = float(cfg.sigma_schedule(t_k))
    if cfg.oracle_model:
        A_hat, B_hat, s_min = true_sys.A, true_sys.B, math.inf
    else:
        lo = 2 ** (k - 1)
        try:
            A_hat, B_hat, s_min = fit_transitions(xs[lo:t_k], us[lo:t_k], xs[lo + 1 : t_k + 1])
        except RankDeficient:
            s_min = 0.0
        if s_min < cfg.informative_tol:
            return EpochRecord(k=k, t_k=t_k, N=previous.N, K=previous.K, sigma=sigma,
                               regressor_min_singular=s_min, carried_over=True)
    nominal = true_sys.with_matrices(A_hat, B_hat)
    K = mpc_gain(nominal, cost, RhcConfig(N=N))
    return EpochRecord(
        k=k, t_k=t_k, N=N, K=K, sigma=sigma, A_hat=A_hat, B_hat=B_hat,
        eps_measured=model_error(true_sys, A_hat, B_hat), regressor_min_singular=s_min,
    )


def recompute_regret(trace: RegretTrace, cost: CostSpec, J_star: float) -> np.ndarray:
    return np.cumsum(cost.stage(trace.x, trace.u) - J_star)


def tail_slope(values: np.ndarray, tail_fraction: float = 0.5) -> float:
    """Least-squares slope of ``values`` against step index over the final fraction."""
    values = np.asarray(values, dtype=float)
    start = int(len(values) * (1 - tail_fraction))
    t = np.arange(start, len(values), dtype=float)
    if len(t) < 2:
        return 0.0
    return float(np.polyfit(t, values[start:], 1)[0])


def regret_summary(
    trace: RegretTrace,
    true_sys: LinearSystem | None = None,
    cost: CostSpec | None = None,
    tail_fraction: float = 0.5,
) -> tuple[float, float, float]:
    """``(final regret, regret / sqrt(T), tail slope of cumulative regret)``."""
    regret = trace.cumulative_regret
    if true_sys is not None and cost is not None:
        regret = recompute_regret(trace, cost, optimal_solution(true_sys, cost).J_star)
    final = float(regret[-1])
    return final, final / math.sqrt(trace.T), tail_slope(regret, tail_fraction)
