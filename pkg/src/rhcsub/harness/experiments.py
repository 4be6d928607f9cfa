"""Experiment drivers: config model in, result model out.

Randomness is derived from the master seed by counters only
(``SeedSequence([seed, *counters])``), so the order in which cells or seeds are
executed, and the number of worker processes, cannot change any result.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import adaptive as adp
from ..bounds import (
    BoundContext,
    alpha_gamma2,
    controller_gap_bound,
    e_hat,
    gain_gap_bound,
    gamma1,
    horizon_recommendation,
    horizon_criterion,
    known_model_gap_bound,
    mpc_gap_bound,
    psi,
    psi_tilde,
    simplified_bound,
)
from ..errors import ConfigError, Diverged, ModelErrorTooLarge, RateProductNotContractive
from ..performance import empirical_cost, evaluate, is_stabilizing
from ..riccati import (
    CostSpec,
    LinearSystem,
    RhcConfig,
    gain,
    is_psd,
    mpc_gain,
    optimal_solution,
    solve_dare,
    sym,
)
from ..sysid import generate_rollouts, ls_estimate
from . import schemas as S

ARGMIN_RTOL = 1e-9


def derive_seed(master: int, *counters: int) -> int:
    """Counter-based child seed: the first 64-bit word of ``SeedSequence([master, *counters])``."""
    state = np.random.SeedSequence([int(master), *map(int, counters)]).generate_state(1, np.uint64)
    return int(state[0])


def _matrix(value, shape, field: str) -> np.ndarray:
    try:
        X = np.asarray(value, dtype=float)
    except ValueError:
        raise ConfigError(f"{field}: rows must have equal length") from None
    if X.shape != shape:
        raise ConfigError(f"{field}: expected shape {shape}, got {X.shape}")
    return X


def build_system(spec: S.SystemSpec, field: str = "system") -> LinearSystem:
    try:
        return LinearSystem(spec.A, spec.B, spec.sigma_w, spec.sigma_x)
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from None


def build_cost(spec: S.CostModel, sys: LinearSystem) -> CostSpec:
    Q = np.eye(sys.n) if spec.Q is None else _matrix(spec.Q, (sys.n, sys.n), "cost.Q")
    R = np.eye(sys.m) if spec.R is None else _matrix(spec.R, (sys.m, sys.m), "cost.R")
    try:
        return CostSpec(Q, R)
    except ValueError as exc:
        raise ConfigError(f"cost: {exc}") from None


def build_nominal(spec, sys: LinearSystem) -> LinearSystem:
    if spec is None:
        return sys
    nominal = build_system(spec, "nominal")
    if (nominal.n, nominal.m) != (sys.n, sys.m):
        raise ConfigError(f"nominal: dimensions {(nominal.n, nominal.m)} differ from system {(sys.n, sys.m)}")
    return nominal


def terminal_matrix(value, sys: LinearSystem, opt) -> np.ndarray:
    if value == "zero":
        return np.zeros((sys.n, sys.n))
    if value == "optimal":
        return opt.P_star
    P = _matrix(value, (sys.n, sys.n), "P_terminal")
    if not is_psd(sym(P)):
        raise ConfigError("P_terminal: must be positive semidefinite")
    return sym(P)


def _mat(X) -> list:
    return np.atleast_2d(np.asarray(X, dtype=float)).tolist()


def _opt_float(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---- dare / synthesize / evaluate ---------------------------------------------


def run_dare(cfg: S.DareConfig) -> S.DareResult:
    sys = build_system(cfg.system)
    cost = build_cost(cfg.cost, sys)
    sol = solve_dare(sys, cost, tol=cfg.tol, max_iter=cfg.max_iter)
    K = gain(sys, cost, sol.P)
    beta = float(np.linalg.norm(sol.P, 2) / cost.q_min) if cost.q_positive_definite else None
    return S.DareResult(
        P_star=_mat(sol.P),
        K_star=_mat(K),
        L_star=_mat(sys.A - sys.B @ K),
        J_star=sys.sigma_w**2 * float(np.trace(sol.P)),
        iterations=sol.iterations,
        residual=sol.residual,
        beta=beta,
        assumption1=cost.assumption1 and sys.m <= sys.n,
    )


def _synthesize(cfg, sys, cost, opt):
    nominal = build_nominal(cfg.nominal, sys)
    P = terminal_matrix(cfg.P_terminal, sys, opt)
    return mpc_gain(nominal, cost, RhcConfig(N=cfg.N, P_terminal=P))


def run_synthesize(cfg: S.SynthesizeConfig) -> S.SynthesizeResult:
    sys = build_system(cfg.system)
    cost = build_cost(cfg.cost, sys)
    opt = optimal_solution(sys, cost)
    K = _synthesize(cfg, sys, cost, opt)
    rep = evaluate(sys, cost, K, opt)
    return S.SynthesizeResult(
        N=cfg.N, K=_mat(K), stable=rep.stable, spectral_radius=rep.spectral_radius, gap=rep.gap
    )


def run_evaluate(cfg: S.EvaluateConfig) -> S.EvaluateResult:
    sys = build_system(cfg.system)
    cost = build_cost(cfg.cost, sys)
    opt = optimal_solution(sys, cost)
    K = _matrix(cfg.K, (sys.m, sys.n), "K") if cfg.K is not None else _synthesize(cfg, sys, cost, opt)
    rep = evaluate(sys, cost, K, opt)
    mean = stderr = None
    if cfg.empirical is not None and rep.stable:
        mean, stderr = empirical_cost(sys, cost, K, cfg.empirical.T, cfg.empirical.trials, cfg.seed)
    return S.EvaluateResult(
        K=_mat(rep.K),
        stable=rep.stable,
        spectral_radius=rep.spectral_radius,
        Sigma_K=None if rep.Sigma_K is None else _mat(rep.Sigma_K),
        J_K=rep.J_K,
        J_star=opt.J_star,
        gap=rep.gap,
        empirical_mean=mean,
        empirical_stderr=_opt_float(stderr),
    )


# ---- bound -------------------------------------------------------------------


def run_bound(cfg: S.BoundConfig) -> S.BoundResult:
    sys = build_system(cfg.system)
    cost = build_cost(cfg.cost, sys)
    opt = optimal_solution(sys, cost)
    eps_m = cfg.eps_m
    if eps_m is None:
        if cfg.nominal is None:
            eps_m = 0.0
        else:
            nom = build_nominal(cfg.nominal, sys)
            eps_m = max(np.linalg.norm(nom.A - sys.A, 2), np.linalg.norm(nom.B - sys.B, 2))
    eps_p = cfg.eps_p
    if eps_p is None:
        eps_p = float(np.linalg.norm(terminal_matrix(cfg.P_terminal, sys, opt) - opt.P_star, 2))
    ctx = BoundContext.from_system(sys, cost, eps_m=eps_m, eps_p=eps_p, P_star=opt.P_star)
    try:
        alpha, g2 = alpha_gamma2(ctx)
    except ModelErrorTooLarge:
        alpha = g2 = None
    try:
        crit = horizon_criterion(ctx)
        rec = horizon_recommendation(ctx).value
    except (ModelErrorTooLarge, RateProductNotContractive):
        crit = rec = None
    gamma_bar, _ = simplified_bound(ctx, 1)
    rows = []
    for N in cfg.horizons:
        g = mpc_gap_bound(ctx, N)
        known = known_model_gap_bound(ctx, N) if ctx.eps_m == 0 else None
        rows.append(
            S.BoundRow(
                N=N,
                e_hat=_opt_float(e_hat(ctx, N - 1).value),
                g=_opt_float(g.value),
                preconditions_met=g.preconditions_met,
                failed_conditions=g.failed_conditions,
                known_model_bound=None if known is None else known.value,
                simplified_shape=simplified_bound(ctx, N)[1],
            )
        )
    cgb = controller_gap_bound(ctx, cfg.eps)
    return S.BoundResult(
        eps_m=ctx.eps_m,
        eps_p=ctx.eps_p,
        beta=ctx.beta,
        upsilon=ctx.upsilon,
        p_star_norm=ctx.p_star_norm,
        psi=psi(ctx),
        gamma1=gamma1(ctx),
        alpha=alpha,
        gamma2=g2,
        psi_tilde=psi_tilde(ctx),
        gamma_bar=gamma_bar,
        criterion=crit,
        recommendation=rec,
        gain_gap_bound=gain_gap_bound(ctx, cfg.eps),
        controller_gap_bound=cgb.value,
        controller_gap_preconditions_met=cgb.preconditions_met,
        rows=rows,
    )


# ---- sweep -------------------------------------------------------------------


def perturbation_draw(seed: int, model_index: int, n: int, m: int, half_width: float):
    """Entrywise ``U(-half_width, half_width)`` perturbations of A then B."""
    rng = np.random.default_rng([seed, model_index])
    dA = rng.uniform(-half_width, half_width, (n, n))
    dB = rng.uniform(-half_width, half_width, (n, m))
    return dA, dB


def classify_argmin(horizons, gaps) -> tuple[int | None, str]:
    """Best horizon among stable entries; ties within ``ARGMIN_RTOL`` prefer the endpoints."""
    stable = [(N, g) for N, g in zip(horizons, gaps) if g is not None]
    if not stable:
        return None, "unstable"
    best = min(g for _, g in stable)
    tied = [N for N, g in stable if g <= best + ARGMIN_RTOL * max(abs(best), 1e-300)]
    N_max, N_min = max(horizons), min(horizons)
    if N_max in tied:
        return N_max, "max"
    if N_min in tied:
        return N_min, "one" if N_min == 1 else "interior"
    return tied[0], "interior"


def _sweep_model(args):
    cfg, i = args
    sys = build_system(cfg.system)
    cost = build_cost(cfg.cost, sys)
    opt = optimal_solution(sys, cost)
    P = terminal_matrix(cfg.P_terminal, sys, opt)
    dA, dB = perturbation_draw(cfg.seed, i, sys.n, sys.m, cfg.perturbation_range)
    nominal = sys.with_matrices(sys.A + dA, sys.B + dB)
    gaps = []
    for N in cfg.horizons:
        rep = evaluate(sys, cost, mpc_gain(nominal, cost, RhcConfig(N=N, P_terminal=P)), opt)
        gaps.append(rep.gap if rep.stable else None)
    return dA, dB, gaps


def run_sweep(cfg: S.SweepConfig) -> S.SweepResult:
    cells = _map(_sweep_model, [(cfg, i) for i in range(cfg.num_models)], cfg.jobs)
    finite = [g for _, _, gaps in cells for g in gaps if g is not None]
    scale = max(finite) if finite else None
    records, models = [], []
    for i, (dA, dB, gaps) in enumerate(cells):
        for N, g in zip(cfg.horizons, gaps):
            norm = None if g is None or not scale else g / scale
            records.append(S.SweepRecord(model_index=i, N=N, stable=g is not None, gap=g, normalized_gap=norm))
        argmin, cls = classify_argmin(cfg.horizons, gaps)
        models.append(
            S.SweepModel(
                model_index=i,
                dA=_mat(dA),
                dB=_mat(dB),
                complete=all(g is not None for g in gaps),
                argmin_N=argmin,
                argmin_class=cls,
            )
        )
    return S.SweepResult(seed=cfg.seed, horizons=list(cfg.horizons), records=records, models=models)


# ---- identify ----------------------------------------------------------------


def _identify_cell(args):
    cfg, ti, T, si = args
    sys = build_system(cfg.system)
    data = generate_rollouts(sys, cfg.sigma_u, T, cfg.t_h, derive_seed(cfg.seed, ti, si))
    return ls_estimate(data, truth=sys).eps_measured


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_identify(cfg: S.IdentifyConfig) -> S.IdentifyResult:
    cells = [(cfg, ti, T, si) for ti, T in enumerate(cfg.T_grid) for si in range(cfg.num_seeds)]
    errors = np.array(_map(_identify_cell, cells, cfg.jobs)).reshape(len(cfg.T_grid), cfg.num_seeds)
    rows = []
    for T, errs in zip(cfg.T_grid, errors):
        q25, med, q75 = np.percentile(errs, [25, 50, 75])
        rows.append(S.IdentifyRow(T=T, median=med, q25=q25, q75=q75, num_seeds=cfg.num_seeds))
    medians = np.array([r.median for r in rows])
    slope = None
    if len(rows) >= 2 and np.all(medians > 0):
        slope = loglog_slope(cfg.T_grid, medians)
    return S.IdentifyResult(rows=rows, loglog_slope=slope)


# ---- adaptive ----------------------------------------------------------------


def default_initial_gain(sys: LinearSystem, cost: CostSpec) -> np.ndarray:
    """A conservative stabilizing gain: the LQR gain for ten times the input weight."""
    return gain(sys, cost, solve_dare(sys, CostSpec(cost.Q, 10 * cost.R)).P)


def _adaptive_cell(args):
    cfg, mode, si = args
    sys = build_system(cfg.system)
    cost = build_cost(cfg.cost, sys)
    opt = optimal_solution(sys, cost)
    K0 = np.asarray(cfg.K0, dtype=float) if cfg.K0 is not None else default_initial_gain(sys, cost)
    gamma_bar = cfg.gamma_bar if cfg.gamma_bar is not None else _true_gamma_bar(sys, cost, opt)
    seed = derive_seed(cfg.seed, si)
    exponent = cfg.exploration_exponent
    acfg = adp.AdaptiveConfig(
        K0=K0,
        T_total=cfg.T_total,
        k0=cfg.k0,
        horizon_mode=mode.mode,
        N=mode.N,
        gamma_bar=gamma_bar,
        seed=seed,
        sigma_schedule=lambda t_k: t_k**-exponent,
        max_N=cfg.max_N,
        informative_tol=cfg.informative_tol,
        oracle_model=cfg.oracle_model,
    )
    try:
        trace = adp.run_adaptive(sys, cost, acfg, opt)
    except Diverged as exc:
        return S.AdaptiveRun(seed_index=si, seed=seed, mode=mode.label, status="diverged", message=str(exc))
    final, ratio, slope = adp.regret_summary(trace)
    cum = trace.cumulative_regret
    checkpoints = {str(2**p): float(cum[2**p - 1]) for p in range(1, 64) if 2**p <= trace.T}
    epochs = [
        S.EpochInfo(
            k=e.k,
            t_k=e.t_k,
            N=e.N,
            eps_measured=e.eps_measured,
            regressor_min_singular=_opt_float(e.regressor_min_singular),
            carried_over=e.carried_over,
            K=_mat(e.K),
        )
        for e in trace.epochs
    ]
    steps = None
    if cfg.include_steps:
        steps = np.column_stack(
            [np.arange(trace.T), trace.epoch, trace.stage_cost, cum]
        ).tolist()
    return S.AdaptiveRun(
        seed_index=si,
        seed=seed,
        mode=mode.label,
        status="ok",
        final_regret=final,
        sqrtT_ratio=ratio,
        linear_slope=slope,
        checkpoints=checkpoints,
        epochs=epochs,
        steps=steps,
    )


def _true_gamma_bar(sys, cost, opt) -> float:
    return simplified_bound(BoundContext.from_system(sys, cost, P_star=opt.P_star), 1)[0]


def run_adaptive_experiment(cfg: S.AdaptiveExperimentConfig) -> S.AdaptiveResult:
    sys = build_system(cfg.system)
    cost = build_cost(cfg.cost, sys)
    opt = optimal_solution(sys, cost)
    if cfg.K0 is not None and not is_stabilizing(sys, _matrix(cfg.K0, (sys.m, sys.n), "K0")):
        raise ConfigError("K0: initial gain does not stabilize the true system")
    gamma_bar = cfg.gamma_bar if cfg.gamma_bar is not None else _true_gamma_bar(sys, cost, opt)
    cells = [(cfg, mode, si) for mode in cfg.modes for si in range(cfg.num_seeds)]
    runs = _map(_adaptive_cell, cells, cfg.jobs)
    return S.AdaptiveResult(J_star=opt.J_star, gamma_bar=gamma_bar, runs=runs)


RUNNERS = {
    "dare": run_dare,
    "synthesize": run_synthesize,
    "evaluate": run_evaluate,
    "bound": run_bound,
    "sweep": run_sweep,
    "identify": run_identify,
    "adaptive": run_adaptive_experiment,
}


def run(cfg):
    return RUNNERS[cfg.kind](cfg)
