"""Monte Carlo studies: policy comparison, partitioned pools, capped draws.

Every study is a pure function of an :class:`ExperimentConfig` (plus an
optional injected instance): all randomness flows through seeded streams
with a fixed allocation scheme, so a record replays bit-identically from
``(config, seed)``.

Stream allocation: stream 0 generates the instance; sweep cell ``ci``
(0-based, in row-major sweep order) owns the contiguous stream block
``1 + ci * (trials + 1)`` — trial ``t`` of the cell uses offset ``t`` and
the last slot feeds the cell's randomized-greedy run.  Cells and trials can
therefore execute in any order, or concurrently, without changing a single
drawn variate.

Each study returns a :class:`RunRecord` holding per-trial rows and per-cell
summary rows; summaries are produced by the same helper the cross-check
re-runs, so stored aggregates always match a recomputation from the rows.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import matrices
from .concentration import (
    ConstraintSpec,
    bounds_steady_state,
    cap_satisfaction_bound,
    constrained_floors,
)
from .errors import (
    AssumptionError,
    ConfigError,
    InfeasibleSampleSizeError,
    OptimizationError,
)
from .fileio import format_config, format_csv
from .greedy import GreedyConfig, greedy_select
from .instances import generate_instance
from .kalman import steady_state
from .optimizer import grid_search, grid_search_heterogeneous, uniform_baseline
from .sampling import CategoricalSampler, RngStream, draw_constrained, draw_homogeneous
from .system import (
    LtiSystem,
    Partitioning,
    SensorPool,
    selection_information,
)

# Monte Carlo cells whose acceptance bound is below this skip the attempt
# simulation: expected rejection work grows like 1/alpha.
MIN_SIMULATED_ALPHA = 0.05


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: {raw!r} is not an integer") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: {raw!r} is not a number") from None


def _parse_int_list(key: str, raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"config key {key!r}: empty list")
    return tuple(_parse_int(key, p) for p in parts)


@dataclass(frozen=True)
class ExperimentConfig:
    """Study knobs with desk-scale defaults.

    The defaults describe a three-state instance with a 42-candidate pool,
    a sample-count sweep from 40 to 400, and 100 Monte Carlo trials — a
    tenfold shrink of the reference large-scale setup that keeps the
    sample-to-candidate ratios while fitting a CI budget.
    """

    m: int = 3
    n_c: int = 42
    n_s_sweep: tuple[int, ...] = tuple(range(40, 401, 40))
    delta: float = 0.05
    n_p: int = 5
    k_sweep: tuple[int, ...] = (1, 2)
    gamma_greedy: float = 0.10
    uniform_factors: tuple[int, ...] = (1, 2, 4, 8)
    trials: int = 100
    seed: int = 0
    sigma2: float = 0.5
    q_scale: float = 0.5
    spectral_radius: float | None = None
    timing_repeats: int = 5
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_s_sweep", tuple(int(v) for v in self.n_s_sweep))
        object.__setattr__(self, "k_sweep", tuple(int(v) for v in self.k_sweep))
        object.__setattr__(
            self, "uniform_factors", tuple(int(v) for v in self.uniform_factors)
        )
        if int(self.m) < 1 or int(self.n_c) < 1:
            raise ConfigError("state dimension and pool size must be >= 1")
        if not self.n_s_sweep or any(v < 1 for v in self.n_s_sweep):
            raise ConfigError("sample-count sweep must be non-empty and positive")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"failure budget must lie in (0, 1), got {self.delta}")
        if int(self.n_p) < 1:
            raise ConfigError("accuracy grid needs at least one point")
        if not self.k_sweep or any(v < 1 for v in self.k_sweep):
            raise ConfigError("partition sweep must be non-empty and positive")
        if not 0.0 < self.gamma_greedy <= 1.0:
            raise ConfigError(f"greedy fraction must lie in (0, 1], got {self.gamma_greedy}")
        if not self.uniform_factors or any(v < 0 for v in self.uniform_factors):
            raise ConfigError("uniformity factors must be non-empty and non-negative")
        if int(self.trials) < 1:
            raise ConfigError(f"trial count must be >= 1, got {self.trials}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.sigma2 <= 0.0 or self.q_scale <= 0.0:
            raise ConfigError("noise scales must be positive")
        if self.spectral_radius is not None and self.spectral_radius <= 0.0:
            raise ConfigError("spectral radius override must be positive")
        if int(self.timing_repeats) < 1:
            raise ConfigError("timing needs at least one repeat")
        if int(self.workers) < 1:
            raise ConfigError("worker count must be >= 1")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ExperimentConfig":
        """Build a config from parsed key=value pairs; unknown keys are errors."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError("unknown config keys: " + ", ".join(unknown))
        kwargs: dict = {}
        for key, raw in mapping.items():
            if key in ("m", "n_c", "n_p", "trials", "seed", "timing_repeats", "workers"):
                kwargs[key] = _parse_int(key, raw)
            elif key in ("delta", "gamma_greedy", "sigma2", "q_scale"):
                kwargs[key] = _parse_float(key, raw)
            elif key in ("n_s_sweep", "k_sweep", "uniform_factors"):
                kwargs[key] = _parse_int_list(key, raw)
            elif key == "spectral_radius":
                kwargs[key] = None if raw in ("", "none") else _parse_float(key, raw)
        return cls(**kwargs)

    def to_mapping(self) -> dict[str, str]:
        """Key=value snapshot; inverse of :meth:`from_mapping`."""
        out: dict[str, str] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("n_s_sweep", "k_sweep", "uniform_factors"):
                out[f.name] = ",".join(str(v) for v in value)
            elif f.name == "spectral_radius":
                out[f.name] = "none" if value is None else repr(value)
            elif isinstance(value, float):
                out[f.name] = repr(value)
            else:
                out[f.name] = str(value)
        return out


@dataclass(frozen=True)
class RunRecord:
    """One study's reproducible output: raw rows plus per-cell summaries."""

    kind: str
    config_items: tuple[tuple[str, str], ...]
    trial_header: tuple[str, ...]
    trial_rows: tuple[tuple, ...]
    summary_header: tuple[str, ...]
    summary_rows: tuple[tuple, ...]

    def config_text(self) -> str:
        return format_config(dict(self.config_items))

    def trial_csv(self) -> str:
        return format_csv(self.trial_header, self.trial_rows)

    def summary_csv(self) -> str:
        return format_csv(self.summary_header, self.summary_rows)


def _mean_std(values: list[float]) -> tuple[float, float]:
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return mean, std


def summarize_trial_group(rows: list[tuple[float, int]]) -> tuple[float, float, float]:
    """(mean score, sample std, coverage rate) of (score, covered) pairs.

    Shared by the study builders and the redundancy cross-check so the two
    always agree bit-for-bit.
    """
    scores = [float(s) for s, _ in rows]
    mean, std = _mean_std(scores)
    coverage = float(np.mean([c for _, c in rows]))
    return mean, std, coverage


def _resolve_instance(
    config: ExperimentConfig,
    system: LtiSystem | None,
    pool: SensorPool | None,
) -> tuple[LtiSystem, SensorPool]:
    if (system is None) != (pool is None):
        raise ConfigError("inject both the system and the pool, or neither")
    if system is None:
        return generate_instance(
            config.m,
            config.n_c,
            RngStream(config.seed, stream=0),
            sigma2=config.sigma2,
            q_scale=config.q_scale,
            spectral_radius=config.spectral_radius,
        )
    if system.m != config.m or pool.n_c != config.n_c:
        raise ConfigError(
            f"injected instance is {pool.n_c} candidates / {system.m} states, "
            f"config says {config.n_c} / {config.m}"
        )
    return system, pool


def _cell_stream_base(config: ExperimentConfig, cell: int) -> int:
    return 1 + cell * (config.trials + 1)


def _timed_solves(solve, repeats: int) -> tuple[object, float]:
    """First result plus the median solve time over ``repeats`` runs."""
    first, first_ms = solve()
    times = [first_ms]
    for _ in range(repeats - 1):
        times.append(solve()[1])
    return first, float(statistics.median(times))


COMPARISON_TRIAL_HEADER = ("n_s", "trial", "lambda_p_s", "covered")
COMPARISON_SUMMARY_HEADER = (
    "n_s",
    "status",
    "epsilon",
    "lambda_u",
    "lambda_l",
    "mean_lambda_p_s",
    "std_lambda_p_s",
    "coverage_rate",
    "greedy_lambda",
    "randomized_greedy_lambda",
    "uniform_lambda_u",
    "solve_time_ms",
)


def run_policy_comparison(
    config: ExperimentConfig,
    *,
    system: LtiSystem | None = None,
    pool: SensorPool | None = None,
) -> RunRecord:
    """Sweep the sample count and score every policy on one instance.

    Per sweep cell: the optimized law's certified sandwich
    (``lambda_u``/``lambda_l``), Monte Carlo draws of the realized
    steady-state score with a per-trial coverage indicator, deterministic
    and randomized greedy scores, and the uniform law's certified upper
    bound (infinite when uniform sampling is infeasible at that count).
    Infeasible cells become status rows; they never abort the sweep.
    """
    system, pool = _resolve_instance(config, system, pool)
    trial_rows: list[tuple] = []
    summary_rows: list[tuple] = []
    nan = math.nan
    for ci, n_s in enumerate(config.n_s_sweep):
        base = _cell_stream_base(config, ci)
        try:
            result, solve_ms = _timed_solves(
                lambda: _solved_cell(pool, system, n_s, config),
                config.timing_repeats,
            )
        except (InfeasibleSampleSizeError, OptimizationError) as exc:
            summary_rows.append(
                (n_s, f"infeasible: {exc}", nan, nan, nan, nan, nan, nan, nan, nan, nan, nan)
            )
            continue
        params, bounds = result
        lam_u = matrices.max_eigenvalue(bounds.U)
        lam_l = matrices.max_eigenvalue(bounds.L)
        sampler = CategoricalSampler(params.distribution)

        def one_trial(t: int) -> tuple[float, int]:
            rng = RngStream(config.seed, stream=base + t)
            sel = draw_homogeneous(sampler, n_s, rng)
            theta = selection_information(pool, sel)
            p_s = steady_state(theta, system, P0=bounds.U).P
            covered = matrices.loewner_leq(
                bounds.L, p_s, matrices.LOEWNER_TOL
            ) and matrices.loewner_leq(p_s, bounds.U, matrices.LOEWNER_TOL)
            return matrices.max_eigenvalue(p_s), int(covered)

        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as ex:
                outcomes = list(ex.map(one_trial, range(config.trials)))
        else:
            outcomes = [one_trial(t) for t in range(config.trials)]
        for t, (score, covered) in enumerate(outcomes, start=1):
            trial_rows.append((n_s, t, score, covered))
        mean, std, coverage = summarize_trial_group(outcomes)

        det = greedy_select(GreedyConfig(gamma=1.0, n_s=n_s), pool, system)
        rand = greedy_select(
            GreedyConfig(
                gamma=config.gamma_greedy,
                n_s=n_s,
                rng=RngStream(config.seed, stream=base + config.trials),
            ),
            pool,
            system,
        )
        try:
            uniform_u = matrices.max_eigenvalue(
                uniform_baseline(pool, n_s, config.delta, system).bounds.U
            )
        except InfeasibleSampleSizeError:
            uniform_u = math.inf
        summary_rows.append(
            (
                n_s,
                "ok",
                params.epsilon,
                lam_u,
                lam_l,
                mean,
                std,
                coverage,
                det.lambda_bar,
                rand.lambda_bar,
                uniform_u,
                solve_ms,
            )
        )
    return RunRecord(
        kind="policy-comparison",
        config_items=tuple(config.to_mapping().items()),
        trial_header=COMPARISON_TRIAL_HEADER,
        trial_rows=tuple(trial_rows),
        summary_header=COMPARISON_SUMMARY_HEADER,
        summary_rows=tuple(summary_rows),
    )


def _solved_cell(pool, system, n_s, config):
    res = grid_search(
        pool, system, n_s, config.delta, config.n_p, mode="steady-state"
    )
    params = res.best_parameters(pool)
    bounds = bounds_steady_state(params, pool, system)
    total_ms = sum(pt.solve_time_ms for pt in res.points)
    return (params, bounds), total_ms


def recompute_comparison_aggregates(record: RunRecord) -> dict[int, tuple[float, float, float]]:
    """Aggregates derived afresh from the trial rows, keyed by sample count.

    The redundancy check: these must equal the stored summary columns
    exactly, since both run through :func:`summarize_trial_group`.
    """
    grouped: dict[int, list[tuple[float, int]]] = {}
    for n_s, _trial, score, covered in record.trial_rows:
        grouped.setdefault(int(n_s), []).append((float(score), int(covered)))
    return {n_s: summarize_trial_group(rows) for n_s, rows in grouped.items()}


HETERO_TRIAL_HEADER = ("n_s", "k", "group", "solve_time_ms", "epsilon")
HETERO_SUMMARY_HEADER = (
    "n_s",
    "k",
    "status",
    "lambda_u",
    "probability_floor",
    "mean_group_solve_ms",
)


def run_heterogeneous_study(
    config: ExperimentConfig,
    *,
    system: LtiSystem | None = None,
    pool: SensorPool | None = None,
) -> RunRecord:
    """Cross partition counts with sample counts on one instance.

    Each cell splits the pool evenly into ``k`` groups with the failure
    budget spread so the fused floor stays at ``1 - delta``, runs the
    per-group searches, and reports the fused upper bound plus per-group
    solve times (median over the timing repeats).  Every partition count
    must divide both the pool size and every swept sample count.
    """
    for k in config.k_sweep:
        if config.n_c % k:
            raise ConfigError(f"partition count {k} does not divide pool size {config.n_c}")
        for n_s in config.n_s_sweep:
            if n_s % k:
                raise ConfigError(
                    f"partition count {k} does not divide sample count {n_s}"
                )
    system, pool = _resolve_instance(config, system, pool)
    trial_rows: list[tuple] = []
    summary_rows: list[tuple] = []
    for n_s in config.n_s_sweep:
        for k in config.k_sweep:
            part = Partitioning.even(config.n_c, n_s, k, config.delta)

            def solve():
                het = grid_search_heterogeneous(part, pool, system, config.n_p)
                per_group = [
                    sum(pt.solve_time_ms for pt in res.points)
                    for res in het.per_partition
                ]
                return het, float(np.mean(per_group))

            try:
                het, med_ms = _timed_solves(solve, config.timing_repeats)
            except (InfeasibleSampleSizeError, OptimizationError) as exc:
                summary_rows.append(
                    (n_s, k, f"infeasible: {exc}", math.nan, math.nan, math.nan)
                )
                continue
            for g, (res, params) in enumerate(
                zip(het.per_partition, het.parameters), start=1
            ):
                group_ms = sum(pt.solve_time_ms for pt in res.points)
                trial_rows.append((n_s, k, g, group_ms, params.epsilon))
            summary_rows.append(
                (
                    n_s,
                    k,
                    "ok",
                    matrices.max_eigenvalue(het.bounds.U),
                    het.bounds.probability_floor,
                    med_ms,
                )
            )
    return RunRecord(
        kind="heterogeneous-study",
        config_items=tuple(config.to_mapping().items()),
        trial_header=HETERO_TRIAL_HEADER,
        trial_rows=tuple(trial_rows),
        summary_header=HETERO_SUMMARY_HEADER,
        summary_rows=tuple(summary_rows),
    )


CONSTRAINED_TRIAL_HEADER = ("n_s", "k_u", "trial", "attempts")
CONSTRAINED_SUMMARY_HEADER = (
    "n_s",
    "k_u",
    "status",
    "alpha",
    "floor_joint",
    "floor_conditional",
    "expected_attempts_bound",
    "mean_attempts",
)


def run_constrained_study(
    config: ExperimentConfig,
    *,
    system: LtiSystem | None = None,
    pool: SensorPool | None = None,
) -> RunRecord:
    """Tabulate cap-satisfaction bounds over (sample count, uniform cap).

    For each sample count the optimized law is designed once; each cap
    cell then reports the acceptance bound ``alpha``, both probability
    floors, and — when ``alpha`` is large enough to simulate affordably —
    the empirical mean number of rejection-sampling attempts next to its
    ``1/alpha`` bound.  Cap-window violations are recorded per cell.
    """
    system, pool = _resolve_instance(config, system, pool)
    trial_rows: list[tuple] = []
    summary_rows: list[tuple] = []
    nan = math.nan
    n_cells_per_ns = len(config.uniform_factors)
    for si, n_s in enumerate(config.n_s_sweep):
        try:
            res = grid_search(
                pool, system, n_s, config.delta, config.n_p, mode="steady-state"
            )
            law = res.best_parameters(pool).distribution
        except (InfeasibleSampleSizeError, OptimizationError) as exc:
            for k_u in config.uniform_factors:
                summary_rows.append(
                    (n_s, k_u, f"infeasible: {exc}", nan, nan, nan, nan, nan)
                )
            continue
        sampler = CategoricalSampler(law)
        for fi, k_u in enumerate(config.uniform_factors):
            cell = si * n_cells_per_ns + fi
            base = _cell_stream_base(config, cell)
            spec = ConstraintSpec.uniform(pool.n_c, k_u)
            try:
                alpha = cap_satisfaction_bound(spec, n_s, law)
            except AssumptionError as exc:
                summary_rows.append(
                    (n_s, k_u, f"assumption violated: {exc}", nan, nan, nan, nan, nan)
                )
                continue
            floors = constrained_floors(alpha, config.delta)
            if alpha >= MIN_SIMULATED_ALPHA:
                attempts = []
                for t in range(config.trials):
                    sel = draw_constrained(
                        sampler, n_s, spec, RngStream(config.seed, stream=base + t)
                    )
                    attempts.append(sel.rejection_count)
                    trial_rows.append((n_s, k_u, t + 1, sel.rejection_count))
                mean_attempts = float(np.mean(attempts))
            else:
                mean_attempts = nan
            summary_rows.append(
                (
                    n_s,
                    k_u,
                    "ok",
                    alpha,
                    floors.intersection_floor,
                    floors.conditional_floor,
                    floors.expected_draws_bound,
                    mean_attempts,
                )
            )
    return RunRecord(
        kind="constrained-study",
        config_items=tuple(config.to_mapping().items()),
        trial_header=CONSTRAINED_TRIAL_HEADER,
        trial_rows=tuple(trial_rows),
        summary_header=CONSTRAINED_SUMMARY_HEADER,
        summary_rows=tuple(summary_rows),
    )
