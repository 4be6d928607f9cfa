"""Riccati machinery for nominal receding-horizon LQ control.

Every function here is pure: inputs are never mutated and no state is cached
between calls. Matrices are plain ``numpy`` arrays; symmetric outputs are
symmetrized as ``(X + X.T) / 2`` before they are returned.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, InvalidRange, NonConvergence, NumericalError

PSD_RTOL = 1e-10
DARE_TOL = 1e-12
DARE_MAX_ITER = 100_000


def _frozen(x, ndim=2) -> np.ndarray:
    arr = np.array(x, dtype=float, copy=True)
    if arr.ndim == 1 and ndim == 2:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    arr.setflags(write=False)
    return arr


def sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def is_psd(X: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    X = sym(np.asarray(X, dtype=float))
    scale = max(np.linalg.norm(X, 2), 1.0)
    return bool(np.linalg.eigvalsh(X).min() >= -rtol * scale)


@dataclass(frozen=True)
class LinearSystem:
    """``x_{t+1} = A x_t + B u_t + w_t`` with ``w_t ~ N(0, sigma_w^2 I)``."""

    A: np.ndarray
    B: np.ndarray
    sigma_w: float = 1.0
    sigma_x: float = 0.0

    def __post_init__(self):
        A = _frozen(self.A)
        B = _frozen(self.B)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {A.shape}")
        if self.sigma_w < 0 or self.sigma_x < 0:
            raise ValueError("noise scales must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sigma_w", float(self.sigma_w))
        object.__setattr__(self, "sigma_x", float(self.sigma_x))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def with_matrices(self, A, B) -> "LinearSystem":
        return LinearSystem(A, B, self.sigma_w, self.sigma_x)


@dataclass(frozen=True)
class CostSpec:
    """Stage cost ``x'Qx + u'Ru``. Q and R are symmetrized on construction."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = sym(_frozen(self.Q))
        R = sym(_frozen(self.R))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionMismatch("Q and R must be square")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None
        if not is_psd(Q):
            raise ValueError("Q must be positive semidefinite")
        Q.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def q_min(self) -> float:
        return float(np.linalg.eigvalsh(self.Q).min())

    @property
    def r_min(self) -> float:
        return float(np.linalg.eigvalsh(self.R).min())

    @property
    def r_max(self) -> float:
        return float(np.linalg.eigvalsh(self.R).max())

    @property
    def q_positive_definite(self) -> bool:
        return self.q_min > 0

    @property
    def assumption1(self) -> bool:
        """Q >= I and R >= I (the scaling used by the known-bound results)."""
        tol = 1e-12
        return self.q_min >= 1 - tol and self.r_min >= 1 - tol

    def stage(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Stage cost for a single pair or row-stacked batches of pairs."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.Q, x) + np.einsum(
            "...i,ij,...j->...", u, self.R, u
        )


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    iterations: int
    residual: float


@dataclass(frozen=True)
class OptimalSolution:
    riccati: RiccatiSolution
    K_star: np.ndarray
    L_star: np.ndarray
    J_star: float

    @property
    def P_star(self) -> np.ndarray:
        return self.riccati.P


@dataclass(frozen=True)
class RhcConfig:
    N: int
    P_terminal: np.ndarray = field(default=None)

    def __post_init__(self):
        if int(self.N) < 1:
            raise InvalidRange(f"prediction horizon must be >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if self.P_terminal is not None:
            P = sym(_frozen(self.P_terminal))
            if not is_psd(P):
                raise ValueError("terminal weight must be positive semidefinite")
            P.setflags(write=False)
            object.__setattr__(self, "P_terminal", P)

    def terminal(self, n: int) -> np.ndarray:
        return np.zeros((n, n)) if self.P_terminal is None else self.P_terminal


def _check(sys: LinearSystem, cost: CostSpec, P: np.ndarray | None = None):
    if cost.Q.shape[0] != sys.n or cost.R.shape[0] != sys.m:
        raise DimensionMismatch(
            f"cost (Q {cost.Q.shape}, R {cost.R.shape}) does not match n={sys.n}, m={sys.m}"
        )
    if P is not None and np.shape(P) != (sys.n, sys.n):
        raise DimensionMismatch(f"expected {sys.n}x{sys.n} matrix, got {np.shape(P)}")


def input_weighting(sys: LinearSystem, cost: CostSpec) -> np.ndarray:
    """``S_B = B R^{-1} B'``."""
    return sym(sys.B @ np.linalg.solve(cost.R, sys.B.T))


def _solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = sla.lu_factor(M, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalError(str(exc)) from exc
    if np.any(np.abs(np.diag(lu[0])) == 0.0):
        raise NumericalError("singular matrix in Riccati map")
    return sla.lu_solve(lu, rhs)


def riccati_map(sys: LinearSystem, cost: CostSpec, P: np.ndarray) -> np.ndarray:
    """One step ``A'P(I + S_B P)^{-1}A + Q``."""
    _check(sys, cost, P)
    P = np.asarray(P, dtype=float)
    S = input_weighting(sys, cost)
    X = _solve(np.eye(sys.n) + S @ P, sys.A)
    return sym(sys.A.T @ P @ X + cost.Q)


def riccati_sequence(sys: LinearSystem, cost: CostSpec, P: np.ndarray, i: int) -> list:
    """``[P, R(P), ..., R^(i)(P)]``."""
    if i < 0:
        raise InvalidRange(f"iteration count must be >= 0, got {i}")
    _check(sys, cost, P)
    S = input_weighting(sys, cost)
    eye = np.eye(sys.n)
    seq = [np.array(P, dtype=float)]
    for _ in range(i):
        X = _solve(eye + S @ seq[-1], sys.A)
        seq.append(sym(sys.A.T @ seq[-1] @ X + cost.Q))
    return seq


def riccati_iterate(sys: LinearSystem, cost: CostSpec, P: np.ndarray, i: int) -> np.ndarray:
    return riccati_sequence(sys, cost, P, i)[-1]


def solve_dare(
    sys: LinearSystem,
    cost: CostSpec,
    tol: float = DARE_TOL,
    max_iter: int = DARE_MAX_ITER,
) -> RiccatiSolution:
    """Fixed-point iteration of the Riccati map from ``P0 = Q``.

    Stops when ``||P_{k+1} - P_k|| <= tol * max(1, ||P_{k+1}||)``. Failure to
    converge almost always means (A, B) is not stabilizable or (A, Q^{1/2}) is
    not detectable.
    """
    _check(sys, cost)
    S = input_weighting(sys, cost)
    eye = np.eye(sys.n)
    A, Q = sys.A, cost.Q
    P = np.array(Q, dtype=float)
    for k in range(1, max_iter + 1):
        P_next = sym(A.T @ P @ _solve(eye + S @ P, A) + Q)
        step = np.linalg.norm(P_next - P, 2)
        scale = max(1.0, np.linalg.norm(P_next, 2))
        if not np.isfinite(step):
            raise NonConvergence("Riccati iteration overflowed; system likely not stabilizable")
        P = P_next
        if step <= tol * scale:
            residual = float(np.linalg.norm(P - riccati_map(sys, cost, P), 2))
            return RiccatiSolution(P=P, iterations=k, residual=residual)
    raise NonConvergence(
        f"Riccati iteration did not converge in {max_iter} steps "
        "(check stabilizability/detectability)"
    )


def gain(sys: LinearSystem, cost: CostSpec, F: np.ndarray) -> np.ndarray:
    """``(R + B'FB)^{-1} B'FA``."""
    _check(sys, cost, F)
    F = np.asarray(F, dtype=float)
    BtF = sys.B.T @ F
    return _solve(cost.R + BtF @ sys.B, BtF @ sys.A)


def closed_loop(sys: LinearSystem, cost: CostSpec, P: np.ndarray) -> np.ndarray:
    """``(I + S_B P)^{-1} A``, equal to ``A - B gain(P)``."""
    _check(sys, cost, P)
    S = input_weighting(sys, cost)
    return _solve(np.eye(sys.n) + S @ np.asarray(P, dtype=float), sys.A)


def optimal_solution(
    sys: LinearSystem, cost: CostSpec, tol: float = DARE_TOL, max_iter: int = DARE_MAX_ITER
) -> OptimalSolution:
    sol = solve_dare(sys, cost, tol=tol, max_iter=max_iter)
    K = gain(sys, cost, sol.P)
    L = sys.A - sys.B @ K
    J = sys.sigma_w**2 * float(np.trace(sol.P))
    return OptimalSolution(riccati=sol, K_star=K, L_star=L, J_star=J)


def mpc_gain(nominal: LinearSystem, cost: CostSpec, rhc: RhcConfig) -> np.ndarray:
    """Static gain of the unconstrained N-step receding-horizon controller."""
    F = riccati_iterate(nominal, cost, rhc.terminal(nominal.n), rhc.N - 1)
    return gain(nominal, cost, F)


def _product(factors, n):
    out = np.eye(n)
    for L in factors:
        out = out @ L
    return out


def phi(sys: LinearSystem, cost: CostSpec, P: np.ndarray, j: int, i: int) -> np.ndarray:
    """Finite-horizon state-transition product ``L(R^(j)(P)) ... L(R^(i-1)(P))``."""
    if not 0 <= j <= i:
        raise InvalidRange(f"need 0 <= j <= i, got j={j}, i={i}")
    seq = riccati_sequence(sys, cost, P, max(i - 1, 0))
    return _product((closed_loop(sys, cost, seq[k]) for k in range(j, i)), sys.n)


def _same_shape(true_sys: LinearSystem, nominal: LinearSystem):
    if true_sys.A.shape != nominal.A.shape or true_sys.B.shape != nominal.B.shape:
        raise DimensionMismatch("true and nominal systems must share dimensions")


def perturbed_closed_loop(
    true_sys: LinearSystem, nominal: LinearSystem, cost: CostSpec, P: np.ndarray
) -> np.ndarray:
    """``W(P) [H(P) + L_true(P)]`` with ``W = I + (S_true - S_nom) P`` and
    ``H = (I + S_true P)^{-1} (A_nom - A_true)``."""
    _same_shape(true_sys, nominal)
    n = true_sys.n
    S_true = input_weighting(true_sys, cost)
    S_nom = input_weighting(nominal, cost)
    M = np.eye(n) + S_true @ P
    H = _solve(M, nominal.A - true_sys.A)
    L = _solve(M, true_sys.A)
    W = np.eye(n) + (S_true - S_nom) @ P
    return W @ (H + L)


def phi_bar(
    true_sys: LinearSystem,
    nominal: LinearSystem,
    cost: CostSpec,
    P: np.ndarray,
    j: int,
    i: int,
) -> np.ndarray:
    """Perturbed transition product evaluated along the true-model iterates."""
    if not 0 <= j <= i:
        raise InvalidRange(f"need 0 <= j <= i, got j={j}, i={i}")
    _same_shape(true_sys, nominal)
    seq = riccati_sequence(true_sys, cost, P, max(i - 1, 0))
    factors = (perturbed_closed_loop(true_sys, nominal, cost, seq[k]) for k in range(j, i))
    return _product(factors, true_sys.n)


def model_mismatch(
    true_sys: LinearSystem,
    nominal: LinearSystem,
    cost: CostSpec,
    P1: np.ndarray,
    P2: np.ndarray,
) -> np.ndarray:
    """Additive mismatch term between one nominal and one true Riccati step.

    ``R_nom(P1) - R_true(P2) = L_nom(P1)' (P1 - P2) Lbar(P2) + model_mismatch(P1, P2)``.
    """
    _same_shape(true_sys, nominal)
    n = true_sys.n
    eye = np.eye(n)
    A_hat, A = nominal.A, true_sys.A
    S_true = input_weighting(true_sys, cost)
    S_nom = input_weighting(nominal, cost)
    G = _solve(eye + S_true @ P2, eye)  # (I + S_true P2)^{-1}
    core = P2 @ G
    first = A_hat.T @ core @ A_hat - A.T @ core @ A
    left = _solve(eye + P1 @ S_nom, eye)  # (I + P1 S_nom)^{-1}
    second = A_hat.T @ left @ P2 @ (S_true - S_nom) @ P2 @ G @ A_hat
    return first + second


def riccati_difference_terms(
    true_sys: LinearSystem,
    nominal: LinearSystem,
    cost: CostSpec,
    P1: np.ndarray,
    P2: np.ndarray,
    i: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Split ``R^(i)_nom(P1) - R^(i)_true(P2)`` into a propagated initial
    difference and an accumulated model-mismatch sum.
    """
    if i < 0:
        raise InvalidRange(f"iteration count must be >= 0, got {i}")
    _same_shape(true_sys, nominal)
    n = true_sys.n
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    nom_seq = riccati_sequence(nominal, cost, P1, i)
    true_seq = riccati_sequence(true_sys, cost, P2, i)
    L_nom = [closed_loop(nominal, cost, X) for X in nom_seq[:i]]
    L_bar = [perturbed_closed_loop(true_sys, nominal, cost, X) for X in true_seq[:i]]

    def span(factors, j0):
        return _product(factors[j0:i], n)

    term_a = span(L_nom, 0).T @ (P1 - P2) @ span(L_bar, 0)
    term_b = np.zeros((n, n))
    for j in range(1, i + 1):
        k = i - j
        mis = model_mismatch(true_sys, nominal, cost, nom_seq[k], true_seq[k])
        term_b = term_b + span(L_nom, k + 1).T @ mis @ span(L_bar, k + 1)
    return term_a, term_b
