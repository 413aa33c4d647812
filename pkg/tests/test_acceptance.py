"""Acceptance gate: ten headline guarantees at pinned tolerances.

Each criterion is one test that appends a single PASS/FAIL verdict line to
``RESULTS`` (echoed in the terminal summary by ``conftest``) and then
asserts.  Protocol constants — instance seeds, sweep sizes, tolerances —
are fixed here on purpose: they are the contract under test, not tunables.
"""

import itertools
import math
import time

import cvxpy as cp
import numpy as np

from kalsel import matrices
from kalsel.concentration import (
    ConstraintSpec,
    bounds_heterogeneous,
    bounds_steady_state,
    cap_satisfaction_bound,
    concentration_constant,
    domination_ratio,
    min_domination_ratio,
    minimum_sample_size,
    select_parameters_for_sample_size,
    select_sample_size,
)
from kalsel.errors import DomainError, InfeasibleSampleSizeError
from kalsel.greedy import GreedyConfig, greedy_select
from kalsel.instances import generate_instance
from kalsel.kalman import selection_steady_state, steady_state, warmup_sigma
from kalsel.matrices import (
    covariance_update,
    information_update,
    max_eigenvalue,
    min_eigenvalue,
    predict_covariance,
    spd_inverse,
    symmetrize,
)
from kalsel.optimizer import (
    grid_search,
    solve_steady_state_relaxation,
    solve_time_dependent,
    uniform_baseline,
)
from kalsel.sampling import CategoricalSampler, RngStream, draw_constrained, draw_homogeneous
from kalsel.sdp import solve_with_fallback
from kalsel.system import (
    LtiSystem,
    Partitioning,
    Selection,
    SensorPool,
    assemble_output,
    expected_information,
    selection_information,
)

DELTA = 0.05

RESULTS: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"[{name}] {'PASS' if ok else 'FAIL'} — {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# shared small generators


def simplex_mesh(n_c: int, steps: int = 10):
    """All probability vectors with entries in multiples of 1/steps."""
    for cuts in itertools.combinations(range(steps + n_c - 1), n_c - 1):
        counts = []
        prev = -1
        for c in cuts:
            counts.append(c - prev - 1)
            prev = c
        counts.append(steps + n_c - 2 - prev)
        yield np.asarray(counts, dtype=float) / steps


def compositions(total: int, parts: int):
    """All non-negative integer vectors of the given length summing to total."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in compositions(total - head, parts - 1):
            yield (head,) + rest


def multinomial_pmf(n: int, counts, p) -> float:
    coef = math.factorial(n)
    for c in counts:
        coef //= math.factorial(c)
    out = float(coef)
    for c, pj in zip(counts, p):
        if c:
            out *= pj**c
        # pj == 0 with c == 0 contributes the factor 1
    return out


# ---------------------------------------------------------------------------
# criteria


def test_ac01_steady_state_coverage_floor():
    tic = time.perf_counter()
    system, pool = generate_instance(3, 42, RngStream(2026))
    params = select_sample_size(pool, DELTA)
    bounds = bounds_steady_state(params, pool, system)
    sampler = CategoricalSampler(params.distribution)
    hits = 0
    for trial in range(500):
        sel = draw_homogeneous(sampler, params.sample_size, RngStream(2026, 1 + trial))
        p_sel = selection_steady_state(pool, sel, system, P0=bounds.U).P
        if bounds.contains(p_sel, tol=1e-8):
            hits += 1
    elapsed = time.perf_counter() - tic
    coverage = hits / 500.0
    record(
        "ac1 steady-state coverage",
        coverage >= 0.92 and elapsed <= 300.0,
        f"coverage {coverage:.1%} over 500 draws (floor 92%, stated floor 95% minus "
        f"binomial slack), n_s={params.sample_size}, runtime {elapsed:.1f}s (cap 300s)",
    )


def test_ac02_domination_program_matches_closed_form():
    rng = RngStream(7002)
    worst = 0.0
    for _ in range(20):
        m = 1 + int(rng.uniform() * 4)
        n_c = 2 + int(rng.uniform() * 9)
        rows = rng.uniforms(n_c * m).reshape(n_c, m) + 0.1
        variances = 0.25 + 0.75 * rng.uniforms(n_c)
        pool = SensorPool.from_arrays(rows, variances)
        weights = rng.uniforms(n_c) + 0.05
        p = weights / weights.sum()
        closed = domination_ratio(pool, p)
        rho = cp.Variable()
        ez = expected_information(pool, p)
        problem = cp.Problem(
            cp.Minimize(rho),
            [rho * ez >> pool.info_matrix(j) for j in range(1, n_c + 1)],
        )
        solve_with_fallback(problem)
        worst = max(worst, abs(float(rho.value) - closed))
    record(
        "ac2 domination ratio: SDP vs closed form",
        worst <= 1e-6,
        f"max |SDP - closed| = {worst:.3e} over 20 pools (tol 1e-6, n_c<=10, m<=4)",
    )


def test_ac03_scalar_fixed_point_value_and_uniqueness():
    system = LtiSystem(A=np.array([[0.5]]), Q=np.array([[0.5]]))
    theta = np.array([[1.0]])
    exact = (-5.0 + math.sqrt(33.0)) / 2.0
    from_small = steady_state(theta, system, P0=np.array([[0.01]])).P[0, 0]
    from_large = steady_state(theta, system, P0=np.array([[50.0]])).P[0, 0]
    err = abs(from_small - exact)
    spread = abs(from_small - from_large)
    record(
        "ac3 scalar fixed point",
        err <= 1e-9 and spread <= 1e-10,
        f"|P - (-5+sqrt(33))/2| = {err:.2e} (tol 1e-9), "
        f"init spread {spread:.2e} (tol 1e-10)",
    )


def test_ac04_cap_bound_below_exact_probability():
    cases = 0
    worst_excess = -math.inf
    for n_c in (1, 2, 3, 4):
        for p in simplex_mesh(n_c):
            support = p > 0.0
            for n_s in range(1, 7):
                for k_u in range(1, n_s + 1):
                    caps = tuple(int(k_u) if s else 0 for s in support)
                    spec = ConstraintSpec(caps=caps)
                    if not spec.admits(n_s):
                        continue
                    alpha = cap_satisfaction_bound(spec, n_s, p)
                    exact = math.fsum(
                        multinomial_pmf(n_s, counts, p)
                        for counts in compositions(n_s, n_c)
                        if all(c <= k for c, k in zip(counts, caps))
                    )
                    worst_excess = max(worst_excess, alpha - exact)
                    cases += 1
    sym = cap_satisfaction_bound(ConstraintSpec(caps=(1, 1)), 2, [0.5, 0.5])
    equality_err = abs(sym - 0.5)
    record(
        "ac4 cap bound <= exact probability",
        worst_excess <= 1e-12 and equality_err <= 1e-12,
        f"max(alpha - exact) = {worst_excess:.2e} over {cases} grid cases "
        f"(tol 1e-12); symmetric case |alpha - 0.5| = {equality_err:.1e}",
    )


def test_ac05_expected_attempts_match_theory():
    spec = ConstraintSpec(caps=(1, 1))
    sampler = CategoricalSampler([0.5, 0.5])
    alpha = cap_satisfaction_bound(spec, 2, [0.5, 0.5])
    total = 0
    for trial in range(10_000):
        sel = draw_constrained(sampler, 2, spec, RngStream(505, trial))
        total += sel.rejection_count
    mean = total / 10_000.0
    record(
        "ac5 rejection attempts",
        1.9 <= mean <= 2.1 and mean <= 1.1 / alpha,
        f"mean attempts {mean:.4f} over 1e4 runs (window [1.9, 2.1], exact 2); "
        f"1.1/alpha = {1.1 / alpha:.2f}",
    )


def test_ac06_policy_dominance_over_baselines():
    tic = time.perf_counter()
    n_s, trials = 200, 30
    wins = 0
    rows = []
    for i in range(10):
        system, pool = generate_instance(3, 42, RngStream(2024, i))
        result = grid_search(pool, system, n_s, DELTA, 5)
        params = result.best_parameters(pool)
        bounds = bounds_steady_state(params, pool, system)
        lam_upper = max_eigenvalue(bounds.U)
        sampler = CategoricalSampler(params.distribution)
        lams = []
        for t in range(trials):
            sel = draw_homogeneous(sampler, n_s, RngStream(2024, 1000 + i * 100 + t))
            lams.append(
                max_eigenvalue(selection_steady_state(pool, sel, system, P0=bounds.U).P)
            )
        mean_lam = math.fsum(lams) / trials
        greedy_lam = greedy_select(GreedyConfig(gamma=1.0, n_s=n_s), pool, system).lambda_bar
        beats_greedy = mean_lam <= greedy_lam
        try:
            uni = uniform_baseline(pool, n_s, DELTA, system)
            uniform_needs_more = max_eigenvalue(uni.bounds.U) > lam_upper
        except InfeasibleSampleSizeError:
            uniform_needs_more = True
        wins += beats_greedy and uniform_needs_more
        rows.append(f"{mean_lam:.4g}{'<=' if beats_greedy else '>'}{greedy_lam:.4g}")
    elapsed = time.perf_counter() - tic
    record(
        "ac6 policy dominance",
        wins >= 8,
        f"{wins}/10 instances: mean certified-policy score <= greedy score at "
        f"matched n_s={n_s} and uniform needs strictly more samples "
        f"({'; '.join(rows)}; runtime {elapsed:.0f}s)",
    )


def test_ac07_bound_gap_non_increasing_in_sample_count():
    sweep = (80, 140, 200, 260)
    worst_rise = -math.inf
    for seed in (1, 2, 3):
        system, pool = generate_instance(2, 6, RngStream(7100, seed))
        gaps = []
        for n_s in sweep:
            res = grid_search(pool, system, n_s, DELTA, 3)
            bounds = bounds_steady_state(res.best_parameters(pool), pool, system)
            gaps.append(max_eigenvalue(bounds.U) - max_eigenvalue(bounds.L))
        for earlier, later in zip(gaps, gaps[1:]):
            worst_rise = max(worst_rise, later - earlier)
    record(
        "ac7 gap tightening",
        worst_rise <= 1e-9,
        f"max increase of upper-lower gap across sweep {sweep} on 3 seeded "
        f"instances: {worst_rise:.3e} (tol 1e-9, negative = strictly tightening)",
    )


def test_ac08_heterogeneous_reduction_and_floor():
    system, pool = generate_instance(2, 6, RngStream(808))
    n_s = 160
    params = select_parameters_for_sample_size(pool, n_s, DELTA)
    homogeneous = bounds_steady_state(params, pool, system)
    single = Partitioning((pool.n_c,), (n_s,), (DELTA,))
    fused_single = bounds_heterogeneous(single, [params], pool, system)
    k1_diff = max(
        np.abs(fused_single.U - homogeneous.U).max(),
        np.abs(fused_single.L - homogeneous.L).max(),
        abs(fused_single.probability_floor - homogeneous.probability_floor),
    )
    split = Partitioning.even(pool.n_c, n_s, 2, DELTA)
    group_params = []
    for i in range(1, 3):
        sl = split.group_slice(i)
        sub = SensorPool.from_arrays(pool.rows[sl], pool.variances[sl])
        group_params.append(
            select_parameters_for_sample_size(
                sub, split.sample_counts[i - 1], split.confidences[i - 1]
            )
        )
    fused_split = bounds_heterogeneous(split, group_params, pool, system)
    floor_err = abs(fused_split.probability_floor - 0.95)
    record(
        "ac8 partitioned-pool reduction",
        k1_diff <= 1e-9 and floor_err <= 1e-12,
        f"K=1 fused vs homogeneous max diff {k1_diff:.2e} (tol 1e-9); "
        f"K=2 with per-group budget 1-0.95^(1/2): |floor - 0.95| = {floor_err:.1e} "
        f"(tol 1e-12)",
    )


def test_ac09_program_equivalence_and_relaxation_soundness():
    worst_identity = 0.0
    worst_lmi_deficit = 0.0
    for i in range(20):
        m = 2 + (i % 2)
        n_c = 4 + (i % 4)
        system, pool = generate_instance(m, n_c, RngStream(909, i))
        rho_star, _ = min_domination_ratio(pool)
        n_s = minimum_sample_size(rho_star, m, DELTA) + 40
        c0 = concentration_constant(n_s, m, DELTA)
        eps = 0.5 * (math.sqrt(rho_star * c0) + 1.0)
        rho = eps**2 / c0
        sigma = warmup_sigma(system, 2)
        timed = solve_time_dependent(sigma, eps, rho, n_s, pool, system)
        ez = expected_information(pool, timed.distribution)
        prior = predict_covariance(sigma, system.A, system.Q)
        upper = spd_inverse(spd_inverse(prior) + (1.0 - eps) * n_s * ez)
        worst_identity = max(
            worst_identity, abs(1.0 / timed.lambda_star - max_eigenvalue(upper))
        )
        relaxed = solve_steady_state_relaxation(eps, rho, n_s, pool, system)
        ez_s = expected_information(pool, relaxed.distribution)
        exact_upper = steady_state((1.0 - eps) * n_s * ez_s, system).P
        x = spd_inverse(exact_upper)
        q_inv = spd_inverse(system.Q)
        block = np.block(
            [
                [-x + q_inv + (1.0 - eps) * n_s * ez_s, q_inv @ system.A],
                [system.A.T @ q_inv, x + system.A.T @ q_inv @ system.A],
            ]
        )
        worst_lmi_deficit = max(
            worst_lmi_deficit, max(0.0, -min_eigenvalue(symmetrize(block)))
        )
    record(
        "ac9 program equivalence + relaxation soundness",
        worst_identity <= 1e-6 and worst_lmi_deficit <= 1e-8,
        f"max |1/lambda* - max-eig(U)| = {worst_identity:.3e} (tol 1e-6); "
        f"max block-LMI deficit at the exact fixed point = {worst_lmi_deficit:.3e} "
        f"(tol 1e-8) over 20 instances",
    )


def test_ac10_randomized_property_suites():
    failures: dict[str, int] = {}

    rng = RngStream(1010, 1)
    bad = 0
    for _ in range(1000):
        m = 1 + int(rng.uniform() * 4)
        k = 1 + int(rng.uniform() * 3)
        g = rng.uniforms(m * m).reshape(m, m) - 0.5
        cov = g @ g.T + 0.1 * np.eye(m)
        c_rows = rng.uniforms(k * m).reshape(k, m) - 0.5
        r = np.diag(0.2 + rng.uniforms(k))
        via_cov = covariance_update(cov, c_rows, r)
        via_info = information_update(cov, c_rows, r)
        if np.abs(via_cov - via_info).max() > 1e-8 * (1.0 + np.abs(via_cov).max()):
            bad += 1
    failures["update-equivalence"] = bad

    rng = RngStream(1010, 2)
    bad = 0
    for _ in range(1000):
        m = 1 + int(rng.uniform() * 3)
        a = rng.uniforms(m * m).reshape(m, m) - 0.3
        q = 0.4 * np.eye(m)
        g = rng.uniforms(m * m).reshape(m, m) - 0.5
        p_small = g @ g.T + 0.1 * np.eye(m)
        h = rng.uniforms(m * m).reshape(m, m) - 0.5
        p_large = p_small + h @ h.T
        t1 = rng.uniforms(m * m).reshape(m, m) - 0.5
        theta_small = t1 @ t1.T
        t2 = rng.uniforms(m * m).reshape(m, m) - 0.5
        theta_large = theta_small + t2 @ t2.T
        monotone = matrices.loewner_leq(
            matrices.riccati_step(p_small, theta_small, a, q),
            matrices.riccati_step(p_large, theta_small, a, q),
        )
        antitone = matrices.loewner_leq(
            matrices.riccati_step(p_small, theta_large, a, q),
            matrices.riccati_step(p_small, theta_small, a, q),
        )
        if not (monotone and antitone):
            bad += 1
    failures["riccati-monotonicity"] = bad

    rng = RngStream(1010, 3)
    bad = 0
    for _ in range(1000):
        m = 1 + int(rng.uniform() * 3)
        n_c = 2 + int(rng.uniform() * 5)
        pool = SensorPool.from_arrays(
            rng.uniforms(n_c * m).reshape(n_c, m) - 0.2,
            0.2 + rng.uniforms(n_c),
        )
        n_sel = 1 + int(rng.uniform() * 6)
        idx = tuple(1 + int(u * n_c) for u in rng.uniforms(n_sel))
        sel = Selection(indices=idx)
        c_mat, r_mat = assemble_output(pool, sel)
        direct = c_mat.T @ np.linalg.inv(r_mat) @ c_mat
        summed = selection_information(pool, sel)
        explicit = sum(pool.info_matrix(j) for j in idx)
        if (
            np.abs(direct - summed).max() > 1e-10 * (1.0 + np.abs(summed).max())
            or np.abs(explicit - summed).max() > 1e-10 * (1.0 + np.abs(summed).max())
        ):
            bad += 1
    failures["output-conjugation"] = bad

    rng = RngStream(1010, 4)
    bad = 0
    for _ in range(1000):
        n = int(rng.uniform() * 61)
        u = rng.uniform()
        p = 0.0 if u < 0.05 else 1.0 if u > 0.95 else rng.uniform()
        total = math.fsum(matrices.binomial_pmf(n, k, p) for k in range(n + 1))
        if abs(total - 1.0) > 1e-10:
            bad += 1
    failures["pmf-normalization"] = bad

    rng = RngStream(1010, 5)
    bad = 0
    for _ in range(1000):
        x = rng.uniform() * 3.0 - 2.0
        if x > 1.0:
            try:
                matrices.clamp_probability(x)
                bad += 1
            except DomainError:
                pass
            continue
        clamped = matrices.clamp_probability(x)
        if clamped != max(0.0, x) or not 0.0 <= clamped <= 1.0:
            bad += 1
        elif matrices.clamp_probability(clamped) != clamped:
            bad += 1
    failures["probability-clamp"] = bad

    rng = RngStream(1010, 6)
    bad = 0
    for _ in range(1000):
        seed = int(rng.uniform() * 2**32)
        stream = int(rng.uniform() * 64)
        count = 1 + int(rng.uniform() * 40)
        first = RngStream(seed, stream).uniforms(count)
        second = RngStream(seed, stream).uniforms(count)
        law = rng.uniforms(3) + 0.1
        law = law / law.sum()
        draw_a = CategoricalSampler(law).draw(RngStream(seed, stream + 1), 8)
        draw_b = CategoricalSampler(law).draw(RngStream(seed, stream + 1), 8)
        if not (np.array_equal(first, second) and np.array_equal(draw_a, draw_b)):
            bad += 1
    failures["replay-determinism"] = bad

    total_bad = sum(failures.values())
    summary = ", ".join(f"{name}: {count}" for name, count in failures.items())
    record(
        "ac10 randomized property suites",
        total_bad == 0,
        f"6 suites x 1000 cases, failures: {summary}",
    )
