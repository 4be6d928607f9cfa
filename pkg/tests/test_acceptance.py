"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import json
import math
import time

import numpy as np

from helpers import bound_instance, dp_gains, log_gap_tail_slope, nominal_near, random_psd, random_system
from rhcsub.bounds import (
    BoundContext,
    HorizonRecommendation,
    beta_star,
    controller_gap_bound,
    e_hat,
    gain_gap_bound,
    horizon_recommendation,
    known_model_gap_bound,
    lipschitz_bound,
    mpc_gap_bound,
)
from rhcsub.cli import EXIT_OK, main
from rhcsub.errors import RateProductNotContractive
from rhcsub.harness import schemas as S
from rhcsub.harness.experiments import run_adaptive_experiment, run_identify, run_sweep
from rhcsub.performance import empirical_cost, evaluate, performance_gap
from rhcsub.riccati import (
    RhcConfig,
    closed_loop,
    gain,
    mpc_gain,
    optimal_solution,
    phi,
    riccati_difference_terms,
    riccati_iterate,
    riccati_map,
)


def test_criterion_1_algebraic_identities(verdict):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = {"one_step": 0.0, "multi_step": 0.0, "decomposition": 0.0}
    for _ in range(100):
        n = int(rng.integers(1, 5))
        sys, cost = random_system(rng, n=n, m=int(rng.integers(1, n + 1)))
        nom = nominal_near(rng, sys, rng.uniform(0, 0.1))
        P1, P2 = random_psd(rng, n, 2), random_psd(rng, n, 2)
        i = int(rng.integers(0, 9))

        lhs = riccati_map(sys, cost, P1) - riccati_map(sys, cost, P2)
        rhs = closed_loop(sys, cost, P1).T @ (P1 - P2) @ closed_loop(sys, cost, P2)
        worst["one_step"] = max(worst["one_step"], np.abs(lhs - rhs).max())

        lhs = riccati_iterate(sys, cost, P1, i) - riccati_iterate(sys, cost, P2, i)
        rhs = phi(sys, cost, P1, 0, i).T @ (P1 - P2) @ phi(sys, cost, P2, 0, i)
        worst["multi_step"] = max(worst["multi_step"], np.abs(lhs - rhs).max())

        a, b = riccati_difference_terms(sys, nom, cost, P1, P2, i)
        direct = riccati_iterate(nom, cost, P1, i) - riccati_iterate(sys, cost, P2, i)
        worst["decomposition"] = max(worst["decomposition"], np.abs(a + b - direct).max())
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-8 and elapsed < 10
    detail = ", ".join(f"{k} max err {v:.2e}" for k, v in worst.items())
    assert verdict(1, ok, f"{detail}; {elapsed:.1f}s"), detail


def test_criterion_2_oracle_equivalence(verdict):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        sys, cost = random_system(rng)
        P = random_psd(rng, sys.n)
        N = int(rng.integers(1, 11))
        K = mpc_gain(sys, cost, RhcConfig(N=N, P_terminal=P))
        K_dp = dp_gains(sys.A, sys.B, cost.Q, cost.R, P, N)[0][0]
        worst = max(worst, np.abs(K - K_dp).max())

    # closed-form cost versus simulation on stabilizing receding-horizon gains
    zscores = []
    while len(zscores) < 5:
        sys, cost = random_system(rng)
        K = mpc_gain(sys, cost, RhcConfig(N=int(rng.integers(1, 6))))
        rep = evaluate(sys, cost, K)
        if not rep.stable or np.max(np.abs(np.linalg.eigvals(sys.A - sys.B @ K))) > 0.9:
            continue
        mean, se = empirical_cost(sys, cost, K, T=4096, trials=64, seed=len(zscores))
        zscores.append(abs(mean - rep.J_K) / se)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and max(zscores) <= 3 and elapsed < 60
    detail = f"max |K - K_dp| {worst:.2e}; max |J_emp - J_K|/se {max(zscores):.2f}; {elapsed:.1f}s"
    assert verdict(2, ok, detail), detail


def _floor(opt):
    # gaps below this are rounding noise in the difference of two O(J*) costs
    return 1e-11 * opt.J_star


def test_criterion_3_bound_validity(verdict):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    violations = []
    counts = dict.fromkeys(["known_model_gap", "nominal_mpc_gap", "riccati_contraction", "gain_gap", "controller_gap"], 0)
    for idx in range(50):
        inst = bound_instance(rng)
        sys, nom, cost, opt, P, N, ctx = (inst[k] for k in ("sys", "nominal", "cost", "opt", "P", "N", "ctx"))

        # nominal receding-horizon gain on the true plant
        rep = mpc_gap_bound(ctx, N)
        gap = performance_gap(sys, cost, mpc_gain(nom, cost, RhcConfig(N=N, P_terminal=P)), opt)
        counts["nominal_mpc_gap"] += 1
        if gap > rep.value + _floor(opt):
            violations.append(("nominal_mpc_gap", idx, gap, rep.value))

        # exact model, same terminal weight
        known = known_model_gap_bound(ctx.with_errors(eps_m=0.0), N)
        if known.preconditions_met:
            counts["known_model_gap"] += 1
            gap = performance_gap(sys, cost, mpc_gain(sys, cost, RhcConfig(N=N, P_terminal=P)), opt)
            if gap > known.value + _floor(opt):
                violations.append(("known_model_gap", idx, gap, known.value))

        # Riccati iterates contract towards the fixed point
        d = np.linalg.norm(P - opt.P_star, 2)
        for i in range(0, 16, 3):
            counts["riccati_contraction"] += 1
            measured = np.linalg.norm(riccati_iterate(sys, cost, P, i) - opt.P_star, 2)
            if measured > lipschitz_bound(ctx, i, d) * (1 + 1e-9) + 1e-12:
                violations.append(("riccati_contraction", idx, measured, lipschitz_bound(ctx, i, d)))

        # gain from the nominal model and an approximate P*
        F = riccati_iterate(nom, cost, P, N - 1)
        eps = np.linalg.norm(F - opt.P_star, 2)
        K = gain(nom, cost, F)
        counts["gain_gap"] += 1
        bound = gain_gap_bound(ctx, eps)
        if np.linalg.norm(K - opt.K_star, 2) > bound:
            violations.append(("gain_gap", idx, np.linalg.norm(K - opt.K_star, 2), bound))
        ctrl = controller_gap_bound(ctx, eps)
        if ctrl.preconditions_met:
            counts["controller_gap"] += 1
            gap = performance_gap(sys, cost, K, opt)
            if gap > ctrl.value + _floor(opt):
                violations.append(("controller_gap", idx, gap, ctrl.value))
        assert e_hat(ctx, N - 1).value >= eps
    elapsed = time.perf_counter() - start
    ok = not violations and min(counts.values()) > 0 and elapsed < 120
    detail = f"{len(violations)} violations over checks {counts}; {elapsed:.1f}s"
    assert verdict(3, ok, detail), (detail, violations[:5])


def test_criterion_4_known_model_rate(verdict):
    rng = np.random.default_rng(4)
    ratios = []
    while len(ratios) < 20:
        sys, cost = random_system(rng)
        opt = optimal_solution(sys, cost)
        gaps = []
        for N in range(1, 61):
            rep = evaluate(sys, cost, mpc_gain(sys, cost, RhcConfig(N=N)), opt)
            gaps.append(rep.gap if rep.stable else np.inf)
        if not np.isfinite(gaps[-1]):
            continue
        slope = log_gap_tail_slope(gaps, opt.J_star)
        if slope is None:
            continue
        beta = beta_star(opt.P_star, cost.Q)
        predicted = 2 * math.log(1 - 1 / beta)
        ratios.append(slope / predicted)
    med = float(np.median(ratios))
    ok = 0.5 <= med <= 2.0
    detail = (f"median measured/predicted log-gap slope {med:.2f} over 20 systems "
              f"(band [0.5, 2]; range {min(ratios):.2f}..{max(ratios):.2f})")
    assert verdict(4, ok, detail), detail


def test_criterion_5_perturbed_model_sweep(verdict):
    horizons = list(range(1, 16))
    fractions, interior_seeds = [], []
    for seed in range(50):
        res = run_sweep(S.SweepConfig(seed=seed, horizons=horizons, num_models=20, perturbation_range=0.5))
        stable = [m for m in res.models if m.argmin_class != "unstable"]
        if seed < 20:
            edge = sum(m.argmin_class in ("one", "max") for m in stable)
            fractions.append(edge / len(stable) if stable else 0.0)
        if any(m.argmin_class == "interior" for m in stable):
            interior_seeds.append(seed)
    med = float(np.median(fractions))
    ok = med >= 0.7 and len(interior_seeds) > 0
    detail = f"median edge-argmin fraction {med:.2f} over 20 seeds; interior argmin in {len(interior_seeds)}/50 seeds"
    assert verdict(5, ok, detail), detail


def test_criterion_6_identification_scaling(verdict):
    start = time.perf_counter()
    res = run_identify(S.IdentifyConfig(T_grid=[2**6, 2**8, 2**10, 2**12], num_seeds=20))
    elapsed = time.perf_counter() - start
    ok = abs(res.loglog_slope + 0.5) <= 0.15 and elapsed < 60
    detail = f"log-log slope {res.loglog_slope:.3f} (target -0.5 +/- 0.15); {elapsed:.1f}s"
    assert verdict(6, ok, detail), detail


def test_criterion_7_regret_phenomenology(verdict):
    start = time.perf_counter()
    cfg = S.AdaptiveExperimentConfig(T_total=2**14, num_seeds=20, seed=7, jobs=4)
    res = run_adaptive_experiment(cfg)
    fixed = [r for r in res.runs if r.mode == "fixed_N2"]
    adapt = [r for r in res.runs if r.mode == "adaptive_log"]
    ok_runs = all(r.status == "ok" for r in fixed + adapt)
    positive = sum(r.linear_slope > 0 for r in fixed if r.status == "ok")
    # one-sided sign test at 5%: at least 15 of 20 positive
    part_a = positive >= 15

    def med_ratio(T):
        return float(np.median([r.checkpoints[str(T)] / math.sqrt(T) for r in adapt if r.status == "ok"]))

    r10, r12, r14 = med_ratio(2**10), med_ratio(2**12), med_ratio(2**14)
    part_b = r14 <= 2 * r10
    elapsed = time.perf_counter() - start
    ok = ok_runs and part_a and part_b and elapsed < 600
    detail = (f"(a) fixed N=2 positive tail slopes {positive}/20; "
              f"(b) adaptive median Regret/sqrt(T) {r10:.2f}, {r12:.2f}, {r14:.2f} at 2^10, 2^12, 2^14; {elapsed:.0f}s")
    assert verdict(7, ok, detail), detail


def test_criterion_8_bound_monotonicity(verdict):
    rng = np.random.default_rng(8)
    checked, exceptions = 0, []
    while checked < 100:
        sys, cost = random_system(rng)
        base = BoundContext.from_system(sys, cost)
        lim = 1 / (8 * base.p_star_norm**2)
        ctx = base.with_errors(eps_m=lim * 10 ** rng.uniform(-8, -1), eps_p=base.p_star_norm * 10 ** rng.uniform(-6, 0))
        try:
            rec = horizon_recommendation(ctx)
        except RateProductNotContractive:
            continue
        values = np.array([mpc_gap_bound(ctx, N).value for N in range(1, 31)])
        steps = np.diff(values)
        sign = {HorizonRecommendation.INCREASE_TO_INFINITY: -1, HorizonRecommendation.DECREASE_TO_ONE: 1}.get(rec, 0)
        good = np.all(steps * sign > 0) if sign else np.all(steps == 0)
        if not good:
            wrong = bool(np.any(steps * sign < 0)) if sign else True
            exceptions.append((checked, rec.value, "wrong direction" if wrong else "tie"))
        checked += 1
    ok = not exceptions
    ties = sum(e[2] == "tie" for e in exceptions)
    detail = (f"{len(exceptions)} exceptions over {checked} contexts with gamma1*gamma2 < 1 "
              f"({ties} are exact floating-point ties, {len(exceptions) - ties} wrong direction)")
    assert verdict(8, ok, detail), (detail, exceptions[:5])


def test_criterion_9_cli_determinism(verdict, tmp_path):
    small = {
        "dare": {},
        "synthesize": {"N": 4, "P_terminal": "optimal"},
        "evaluate": {"N": 3, "empirical": {"T": 256, "trials": 8}},
        "bound": {"nominal": {"A": [[1.01, 2.0], [1.0, 0.5]], "B": [[1.0], [0.5]]}},
        "sweep": {"num_models": 5, "horizons": [1, 2, 3, 8]},
        "identify": {"T_grid": [32, 128], "num_seeds": 4},
        "adaptive": {"T_total": 256, "num_seeds": 3},
    }
    mismatched = []
    for kind, body in small.items():
        cfg = tmp_path / f"{kind}.json"
        cfg.write_text(json.dumps(body))
        for fmt in ("json", "csv"):
            for jobs in ("1", "2"):
                outs = []
                for rep in range(2):
                    out = tmp_path / f"{kind}-{fmt}-{jobs}-{rep}.out"
                    code = main([kind, "--config", str(cfg), "--seed", "2024", "--jobs", jobs,
                                 "--out", str(out), "--format", fmt])
                    assert code == EXIT_OK
                    outs.append(out.read_bytes())
                if outs[0] != outs[1]:
                    mismatched.append((kind, fmt, jobs))
    ok = not mismatched
    detail = f"{len(small)} experiment kinds x 2 formats x 2 job counts re-run; {len(mismatched)} byte mismatches"
    assert verdict(9, ok, detail), (detail, mismatched)
