"""Scalar suboptimality bounds, decay rates and the horizon recommendation rule.

Bounds never raise when their preconditions fail: they return a
:class:`BoundReport` naming each violated condition so that experiments outside
the guaranteed regime can still record the (possibly meaningless) value.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ModelErrorTooLarge, RateProductNotContractive, SingularQ
from .riccati import CostSpec, LinearSystem, solve_dare

TIE_TOL = 1e-12


@dataclass(frozen=True)
class BoundContext:
    eps_m: float
    eps_p: float
    upsilon: float
    beta: float
    p_star_norm: float
    sigma_w: float = 1.0
    m_dim: int = 1
    r_min: float = 1.0
    r_max: float = 1.0
    q_min: float = 1.0
    assumption1: bool = True
    upsilon_adjusted: bool = False

    def __post_init__(self):
        if self.eps_m < 0 or self.eps_p < 0:
            raise ValueError("error bounds must be nonnegative")
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.p_star_norm <= 0 or self.r_min <= 0 or self.q_min <= 0:
            raise ValueError("norms and singular values must be positive")
        if self.r_max < self.r_min:
            raise ValueError("r_max must be >= r_min")
        if self.m_dim < 1:
            raise ValueError("m_dim must be >= 1")
        floor = max(1.0, self.eps_m)
        if self.upsilon < floor:
            object.__setattr__(self, "upsilon", floor)
            object.__setattr__(self, "upsilon_adjusted", True)

    @classmethod
    def from_system(
        cls,
        true_sys: LinearSystem,
        cost: CostSpec,
        eps_m: float = 0.0,
        eps_p: float = 0.0,
        P_star: np.ndarray | None = None,
    ) -> "BoundContext":
        """Context from the true matrices; upsilon is the smallest admissible value."""
        if P_star is None:
            P_star = solve_dare(true_sys, cost).P
        p_norm = float(np.linalg.norm(P_star, 2))
        ups = max(
            np.linalg.norm(true_sys.A, 2),
            np.linalg.norm(true_sys.B, 2),
            p_norm,
            1.0,
            eps_m,
        )
        return cls(
            eps_m=float(eps_m),
            eps_p=float(eps_p),
            upsilon=float(ups),
            beta=beta_star(P_star, cost.Q),
            p_star_norm=p_norm,
            sigma_w=true_sys.sigma_w,
            m_dim=true_sys.m,
            r_min=cost.r_min,
            r_max=cost.r_max,
            q_min=cost.q_min,
            assumption1=cost.assumption1 and true_sys.m <= true_sys.n,
        )

    def with_errors(self, eps_m: float | None = None, eps_p: float | None = None) -> "BoundContext":
        changes = {}
        if eps_m is not None:
            changes["eps_m"] = float(eps_m)
        if eps_p is not None:
            changes["eps_p"] = float(eps_p)
        return replace(self, **changes)

    @property
    def contraction(self) -> float:
        """``1 - 1/beta``, the per-step contraction of the Riccati iteration."""
        return 1.0 - 1.0 / self.beta


@dataclass(frozen=True)
class BoundReport:
    value: float
    preconditions_met: bool
    failed_conditions: list = field(default_factory=list)
    details: dict = field(default_factory=dict)


def _report(value, conditions: dict, **details) -> BoundReport:
    failed = [name for name, ok in conditions.items() if not ok]
    return BoundReport(value=float(value), preconditions_met=not failed, failed_conditions=failed, details=details)


class HorizonRecommendation(str, enum.Enum):
    INCREASE_TO_INFINITY = "IncreaseToInfinity"
    DECREASE_TO_ONE = "DecreaseToOne"
    INDIFFERENT = "Indifferent"


def beta_star(P_star: np.ndarray, Q: np.ndarray) -> float:
    q_min = float(np.linalg.eigvalsh(0.5 * (Q + np.transpose(Q))).min())
    if q_min <= 0:
        raise SingularQ("beta is undefined unless Q is positive definite")
    return float(np.linalg.norm(P_star, 2)) / q_min


def lipschitz_bound(ctx: BoundContext, i: int, diff_norm: float) -> float:
    """Bound on ``||R^(i)(P1) - R^(i)(P2)||`` given ``||P1 - P2||``."""
    return ctx.beta * ctx.contraction**i * diff_norm


def known_model_gap_bound(ctx: BoundContext, N: int) -> BoundReport:
    """Exact-model gap bound; decays like ``(1 - 1/beta)^(2N) eps_p^2``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    u, p = ctx.upsilon, ctx.p_star_norm
    drift = ctx.beta * ctx.contraction ** (N - 1) * ctx.eps_p
    value = (
        32 * ctx.m_dim * ctx.sigma_w**2 * u**4 * (math.sqrt(p) + 1) ** 2 * p
        * (ctx.r_max + u**3) * drift**2
    )
    conditions = {
        "assumption1": ctx.assumption1,
        "upsilon_covers_terminal_drift": u >= drift,
        "terminal_drift_small": drift <= ctx.r_min / (40 * u**4 * p**1.5),
    }
    return _report(value, conditions, drift=drift)


def psi(ctx: BoundContext) -> float:
    e, u = ctx.eps_m, ctx.upsilon
    return e * (1 + (e + 2 * u) ** 2 * (ctx.beta * ctx.eps_p + u))


def gamma1(ctx: BoundContext) -> float:
    return math.sqrt(ctx.beta) * psi(ctx) + math.sqrt(ctx.contraction)


def alpha_gamma2(ctx: BoundContext) -> tuple[float, float]:
    """Nominal-model norm inflation ``alpha`` and decay rate ``gamma2``."""
    limit = 1.0 / (8 * ctx.p_star_norm**2)
    if not ctx.eps_m < limit:
        raise ModelErrorTooLarge(f"eps_m={ctx.eps_m:.3g} must be below 1/(8||P*||^2)={limit:.3g}")
    alpha = (1 - 8 * ctx.p_star_norm**2 * ctx.eps_m) ** -0.5
    return alpha, math.sqrt(1 - 1 / (alpha * ctx.beta))


def psi_tilde(ctx: BoundContext) -> float:
    """Conservative bound on the one-step model-mismatch term at ``P*``."""
    e, u = ctx.eps_m, ctx.upsilon
    return (e**2 + 2 * u * e) * (u + (e + u) ** 2 * u**2)


def horizon_criterion(ctx: BoundContext) -> float:
    """``eps_p - psi_tilde / (1 - gamma1 gamma2)``; its sign says which way to move N."""
    _, g2 = alpha_gamma2(ctx)
    rate = gamma1(ctx) * g2
    if rate >= 1:
        raise RateProductNotContractive(f"gamma1*gamma2 = {rate:.6g} >= 1")
    return ctx.eps_p - psi_tilde(ctx) / (1 - rate)


def e_hat(ctx: BoundContext, i: int) -> BoundReport:
    """Bound on ``||R^(i)_nominal(P) - P*||`` for ``||P - P*|| <= eps_p``."""
    if i < 0:
        raise ValueError("i must be >= 0")
    limit = 1.0 / (8 * ctx.p_star_norm**2)
    conditions = {"assumption1": ctx.assumption1, "eps_m_below_alpha_limit": ctx.eps_m < limit}
    if not conditions["eps_m_below_alpha_limit"]:
        conditions["rate_product_contractive"] = False
        return _report(math.inf, conditions)
    alpha, g2 = alpha_gamma2(ctx)
    rate = gamma1(ctx) * g2
    conditions["rate_product_contractive"] = rate < 1
    pt = psi_tilde(ctx)
    details = {"alpha": alpha, "gamma1": gamma1(ctx), "gamma2": g2, "rate": rate, "psi_tilde": pt}
    if rate >= 1:
        return _report(math.inf, conditions, **details)
    limit_term = pt / (1 - rate)
    crit = ctx.eps_p - limit_term
    details["criterion"] = crit
    # same as rate^i eps_p + pt (1 - rate^i)/(1 - rate); this form keeps the
    # computed sequence monotone in i with direction sign(crit)
    value = math.sqrt(alpha) * ctx.beta * (limit_term + rate**i * crit)
    return _report(value, conditions, **details)


def mpc_gap_bound(ctx: BoundContext, N: int) -> BoundReport:
    """Performance-gap bound ``g(N)`` for the nominal receding-horizon gain."""
    if N < 1:
        raise ValueError("N must be >= 1")
    inner = e_hat(ctx, N - 1)
    u, p = ctx.upsilon, ctx.p_star_norm
    total = ctx.eps_m + inner.value
    conditions = {name: name not in inner.failed_conditions for name in
                  ("assumption1", "eps_m_below_alpha_limit", "rate_product_contractive")}
    conditions["total_error_small"] = total <= 1 / (40 * u**4 * p**2)
    if not math.isfinite(total):
        return _report(math.inf, conditions, e_hat=inner.value)
    value = 128 * ctx.m_dim * ctx.sigma_w**2 * (ctx.r_max + u**3) * u**4 * p**2 * total**2
    return _report(value, conditions, e_hat=inner.value)


def horizon_recommendation(ctx: BoundContext) -> HorizonRecommendation:
    crit = horizon_criterion(ctx)
    if abs(crit) <= TIE_TOL:
        return HorizonRecommendation.INDIFFERENT
    if crit > 0:
        return HorizonRecommendation.INCREASE_TO_INFINITY
    return HorizonRecommendation.DECREASE_TO_ONE


def gain_gap_bound(ctx: BoundContext, eps: float) -> float:
    """Bound on ``||K_nominal(F) - K*||`` for ``||F - P*|| <= eps``."""
    u, p = ctx.upsilon, ctx.p_star_norm
    return u**2 * (math.sqrt(p) + 1) * (3 * ctx.eps_m + 4 * eps) / ctx.r_min


def controller_gap_bound(ctx: BoundContext, eps: float) -> BoundReport:
    """Gap bound for ``K_nominal(F)`` with ``||F - P*|| <= eps``."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    u, p = ctx.upsilon, ctx.p_star_norm
    err = ctx.eps_m + eps
    value = (
        32 * ctx.m_dim * ctx.sigma_w**2 * (ctx.r_max + u**3) * u**4
        * (math.sqrt(p) + 1) ** 2 * p * err**2 / ctx.r_min**2
    )
    conditions = {
        "assumption1": ctx.assumption1,
        "upsilon_covers_eps": u >= eps,
        "total_error_small": 8 * u**4 * err / ctx.r_min <= 0.2 * p**-1.5,
    }
    return _report(value, conditions)


def simplified_bound(ctx: BoundContext, N: int) -> tuple[float, float]:
    """``(gamma_bar, (gamma_bar^(N-1) + eps_m)^2)``; the leading constant is not computed."""
    if N < 1:
        raise ValueError("N must be >= 1")
    gamma_bar = math.sqrt(1 - 1 / (ctx.beta * math.sqrt(2)))
    return gamma_bar, (gamma_bar ** (N - 1) + ctx.eps_m) ** 2
