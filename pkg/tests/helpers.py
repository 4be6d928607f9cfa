"""Shared instance generators and independently coded oracles for the tests."""
import numpy as np

from rhcsub.bounds import BoundContext, mpc_gap_bound
from rhcsub.riccati import CostSpec, LinearSystem, is_psd, optimal_solution

REF_A = np.array([[1.0, 2.0], [1.0, 0.5]])
REF_B = np.array([[1.0], [0.5]])
REF_P = np.array([[2.4, 1.2], [1.2, 3.4]])


def reference_system(sigma_w=1.0):
    return LinearSystem(REF_A, REF_B, sigma_w=sigma_w)


def identity_cost(n, m):
    return CostSpec(np.eye(n), np.eye(m))


def unit(rng, shape):
    X = rng.normal(size=shape)
    return X / np.linalg.norm(X, 2)


def random_psd(rng, n, scale=1.0):
    X = rng.normal(size=(n, n))
    P = scale * X @ X.T / n
    return 0.5 * (P + P.T)


def random_system(rng, n=None, m=None, scaled=True):
    """Gaussian (A, B) with Q = R = I. With ``scaled`` the entries have
    variance 1/n, so the open loop is usually near the stability boundary."""
    n = int(rng.integers(2, 5)) if n is None else n
    m = int(rng.integers(1, n + 1)) if m is None else m
    s = 1 / np.sqrt(n) if scaled else 1.0
    sys = LinearSystem(rng.normal(size=(n, n)) * s, rng.normal(size=(n, m)) * s)
    return sys, identity_cost(n, m)


def nominal_near(rng, sys, eps_m):
    """A nominal model whose A and B errors both have spectral norm exactly ``eps_m``."""
    return sys.with_matrices(
        sys.A + eps_m * unit(rng, sys.A.shape), sys.B + eps_m * unit(rng, sys.B.shape)
    )


def dp_gains(A, B, Q, R, P_terminal, N):
    """Backward dynamic programming for the N-step LQ problem.

    Uses the completion-of-squares form
    ``V_k = Q + A'V A - A'V B (R + B'V B)^{-1} B'V A``; returns the feedback
    gains for steps 0..N-1 (index 0 is the first applied input).
    """
    V = np.array(P_terminal, dtype=float)
    gains = []
    for _ in range(N):
        H = R + B.T @ V @ B
        K = np.linalg.inv(H) @ B.T @ V @ A
        gains.append(K)
        V = Q + A.T @ V @ A - A.T @ V @ B @ K
        V = 0.5 * (V + V.T)
    return gains[::-1], V


def bound_instance(rng, max_tries=1000):
    """Sample a (true, nominal, P, N) instance satisfying the preconditions of
    ``mpc_gap_bound``. Model errors are a random fraction of the admissible
    limit ``1/(40 Y^4 ||P*||^2)``."""
    for _ in range(max_tries):
        n = int(rng.integers(2, 4))
        m = int(rng.integers(1, n + 1))
        A = unit(rng, (n, n)) * rng.uniform(0.1, 0.7)
        B = unit(rng, (n, m)) * rng.uniform(0.3, 1.0)
        sys = LinearSystem(A, B)
        cost = identity_cost(n, m)
        opt = optimal_solution(sys, cost)
        ctx0 = BoundContext.from_system(sys, cost, P_star=opt.P_star)
        lim = 1 / (40 * ctx0.upsilon**4 * ctx0.p_star_norm**2)
        nom = nominal_near(rng, sys, lim * 10 ** rng.uniform(-4, -1.5))
        eps_m = max(np.linalg.norm(nom.A - A, 2), np.linalg.norm(nom.B - B, 2))
        if rng.random() < 0.5:
            E = rng.normal(size=(n, n))
            E = E + E.T
            P = opt.P_star + lim * 10 ** rng.uniform(-3, 0) * E / np.linalg.norm(E, 2)
            P = 0.5 * (P + P.T)
            if not is_psd(P):
                continue
            N = int(rng.integers(1, 12))
        else:
            P = np.zeros((n, n))
            N = int(rng.integers(8, 30))
        eps_p = np.linalg.norm(P - opt.P_star, 2)
        ctx = BoundContext.from_system(sys, cost, eps_m=eps_m, eps_p=eps_p, P_star=opt.P_star)
        if mpc_gap_bound(ctx, N).preconditions_met:
            return dict(sys=sys, nominal=nom, cost=cost, opt=opt, P=P, N=N, ctx=ctx)
    raise RuntimeError("no admissible instance found")


def log_gap_tail_slope(gaps, J_star):
    """Slope of log(gap) on the final monotone stretch above the rounding floor."""
    gaps = np.asarray(gaps, dtype=float)
    N = np.arange(1, len(gaps) + 1)
    usable = np.isfinite(gaps) & (gaps > 1e-9 * J_star)
    rises = [k + 2 for k in range(len(gaps) - 1) if usable[k + 1] and not gaps[k + 1] < gaps[k]]
    sel = usable & (N > max(rises, default=0))
    if sel.sum() < 3:
        return None
    return float(np.polyfit(N[sel], np.log(gaps[sel]), 1)[0])
