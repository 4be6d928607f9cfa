"""Rollout generation and least-squares estimation of (A, B)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient
from .riccati import LinearSystem

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RolloutData:
    """``states[l, t]`` for t = 0..t_h and ``inputs[l, t]`` for t = 0..t_h-1."""

    states: np.ndarray
    inputs: np.ndarray
    seed: int | None = None

    @property
    def num_rollouts(self) -> int:
        return self.states.shape[0]

    @property
    def t_h(self) -> int:
        return self.inputs.shape[1]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "num_rollouts": self.num_rollouts,
            "t_h": self.t_h,
            "states": self.states.tolist(),
            "inputs": self.inputs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RolloutData":
        return cls(
            states=np.asarray(data["states"], dtype=float),
            inputs=np.asarray(data["inputs"], dtype=float),
            seed=data.get("seed"),
        )


@dataclass(frozen=True)
class EstimateResult:
    A_hat: np.ndarray
    B_hat: np.ndarray
    regressor_min_singular: float
    eps_measured: float | None = None


def generate_rollouts(
    true_sys: LinearSystem, sigma_u: float = 1.0, T: int = 100, t_h: int = 2, seed: int = 0
) -> RolloutData:
    """T independent experiments from ``x0 = 0`` driven by Gaussian inputs."""
    if T < 1 or t_h < 1:
        raise ValueError("need T >= 1 and t_h >= 1")
    rng = np.random.default_rng(seed)
    n, m = true_sys.n, true_sys.m
    u = sigma_u * rng.standard_normal((T, t_h, m))
    w = true_sys.sigma_w * rng.standard_normal((T, t_h, n))
    x = np.zeros((T, t_h + 1, n))
    for t in range(t_h):
        x[:, t + 1] = x[:, t] @ true_sys.A.T + u[:, t] @ true_sys.B.T + w[:, t]
    return RolloutData(states=x, inputs=u, seed=seed)


def fit_transitions(
    x_prev: np.ndarray, u_prev: np.ndarray, x_next: np.ndarray, rank_tol: float = RANK_TOL
) -> tuple[np.ndarray, np.ndarray, float]:
    """Least squares ``x_next ~ A x_prev + B u_prev`` over row-stacked samples."""
    Z = np.hstack([x_prev, u_prev])
    n = x_prev.shape[1]
    if Z.shape[0] < Z.shape[1]:
        raise RankDeficient(f"{Z.shape[0]} samples cannot determine {Z.shape[1]} regressors")
    s_min = float(np.linalg.svd(Z, compute_uv=False).min())
    if s_min < rank_tol:
        raise RankDeficient(f"regressor minimum singular value {s_min:.3g} below {rank_tol:g}")
    theta, *_ = np.linalg.lstsq(Z, x_next, rcond=None)
    AB = theta.T
    return AB[:, :n], AB[:, n:], s_min


def ls_estimate(data: RolloutData, truth: LinearSystem | None = None) -> EstimateResult:
    """Fit (A, B) from the final transition of every rollout only."""
    x_prev = data.states[:, -2]
    x_next = data.states[:, -1]
    u_prev = data.inputs[:, -1]
    A_hat, B_hat, s_min = fit_transitions(x_prev, u_prev, x_next)
    eps = None
    if truth is not None:
        eps = model_error(truth, A_hat, B_hat)
    return EstimateResult(A_hat=A_hat, B_hat=B_hat, regressor_min_singular=s_min, eps_measured=eps)


def model_error(truth: LinearSystem, A_hat: np.ndarray, B_hat: np.ndarray) -> float:
    return float(max(np.linalg.norm(A_hat - truth.A, 2), np.linalg.norm(B_hat - truth.B, 2)))


def residual(data: RolloutData, A: np.ndarray, B: np.ndarray) -> float:
    pred = data.states[:, -2] @ A.T + data.inputs[:, -1] @ B.T
    return float(np.sum((data.states[:, -1] - pred) ** 2))
