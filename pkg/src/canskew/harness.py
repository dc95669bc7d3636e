"""Monte Carlo sweeps, curve metrics, and the estimation-consistency study.

``monte_carlo_ps`` runs the warmup once per curve and branches the detector
state per (trial, grid point): trials redraw only the attack-stream noise, and
grid points translate that trial's arrivals analytically. Success counts are
integers, so aggregation order cannot change the result.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackSpec, attack_arrivals
from .clock import (
    ClockSpec,
    InsufficientDataError,
    MessageSchedule,
    NoiseModel,
    Trace,
    quantize,
    synthesize_trace,
)
from .curves import SuccessCurve
from .ids import IdsConfig, Variant, batch_arrivals, clone_state, init_state, process_batch, run_ids

__all__ = [
    "SyntheticSource",
    "ExperimentConfig",
    "ConsistencyCase",
    "ConsistencyResult",
    "default_grid",
    "monte_carlo_ps",
    "epsilon_msi",
    "ade",
    "consistency_study",
]


@dataclass(frozen=True)
class SyntheticSource:
    """A synthetic normal-traffic generator: schedule + target clock + noise."""

    schedule: MessageSchedule
    clock: ClockSpec = field(default_factory=ClockSpec)
    noise: NoiseModel = field(default_factory=NoiseModel)


@dataclass(frozen=True)
class ExperimentConfig:
    ids: IdsConfig
    warmup_batches: int = 1000
    trials: int = 100
    horizon: int = 60
    grid: np.ndarray = None
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.warmup_batches < 1:
            raise ValueError("warmup_batches must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        grid = self.grid
        if grid is None:
            raise ValueError("grid must be provided")
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid must be a non-empty 1-d array")
        object.__setattr__(self, "grid", grid)


def default_grid(period, half_width_us=50.0, step_us=1.0):
    """Default delta-T grid: +/-50 us in 1 us steps at T = 100 ms, scaled
    linearly with the period."""
    scale = period / 0.1
    half = half_width_us * 1e-6 * scale
    step = step_us * 1e-6 * scale
    n = int(round(half / step))
    return np.arange(-n, n + 1) * step


def _warmup_state(arrivals, cfg, period):
    """Initialize and warm up a detector on (warmup_batches + 1) * N arrivals."""
    n = cfg.ids.batch_size
    need = (cfg.warmup_batches + 1) * n
    if len(arrivals) < need:
        raise InsufficientDataError(f"warmup needs {need} arrivals, got {len(arrivals)}")
    batches = arrivals[:need].reshape(cfg.warmup_batches + 1, n)
    state = init_state(cfg.ids, batches[0], period=period)
    for k in range(1, cfg.warmup_batches + 1):
        process_batch(state, batches[k], armed=False)
    return state


def _survives(base_state, arrivals, horizon, batch_size):
    """True when no alarm fires over the attack horizon."""
    state = clone_state(base_state)
    batches = arrivals.reshape(horizon, batch_size)
    for k in range(horizon):
        if process_batch(state, batches[k], armed=True).alarm:
            return False
    return True


def monte_carlo_ps(source, attack, cfg, vary="delta_t", message_id=None, period=None):
    """Experimental success curve: fraction of trials with no alarm during the
    attack horizon, per grid point.

    ``source`` is a SyntheticSource (trials redraw attack noise over a shared
    warmup) or a recorded Trace (trials slide the attack start across the log;
    requires message_id and period). ``vary`` selects which AttackSpec field
    the grid sweeps: "delta_t" or "mistiming".
    """
    if vary not in ("delta_t", "mistiming"):
        raise ValueError(f"vary must be 'delta_t' or 'mistiming', got {vary!r}")
    if isinstance(source, SyntheticSource):
        return _monte_carlo_synthetic(source, attack, cfg, vary)
    if isinstance(source, Trace):
        if message_id is None or period is None:
            raise ValueError("replay mode requires message_id and period")
        return _monte_carlo_replay(source, message_id, period, attack, cfg, vary)
    raise TypeError(f"source must be SyntheticSource or Trace, got {type(source).__name__}")


def _grid_shift_units(attack, vary, count):
    """Per-arrival translation applied per unit of the swept parameter.

    Sweeping delta_t stretches every inter-transmission gap, so arrival j
    moves by 1 + j/(1 + attacker skew); sweeping mistiming moves the whole
    stream rigidly.
    """
    if vary == "delta_t":
        j = np.arange(count, dtype=np.float64)
        return 1.0 + j / (1.0 + attack.attacker_clock.skew)
    return np.ones(count, dtype=np.float64)


def _sweep_one_trial(base_state, arrivals0, shift_units, grid, qstep, horizon, batch_size):
    successes = np.zeros(len(grid), dtype=np.int64)
    for gi, g in enumerate(grid):
        arr = quantize(arrivals0 + g * shift_units, qstep)
        if _survives(base_state, arr, horizon, batch_size):
            successes[gi] = 1
    return successes


def _monte_carlo_synthetic(source, attack, cfg, vary):
    n = cfg.ids.batch_size
    period = source.schedule.period
    rng = np.random.default_rng(cfg.seed)
    normal_seed = int(rng.integers(0, 2**63))
    trial_seeds = rng.integers(0, 2**63, size=cfg.trials)

    normal_count = (cfg.warmup_batches + 1) * n
    normal = synthesize_trace(source.schedule, source.clock, source.noise, normal_count, normal_seed)
    base_state = _warmup_state(normal.arrivals(source.schedule.message_id), cfg, period)

    qstep = attack.attacker_noise.quantization_step
    base_spec = dataclasses.replace(
        attack,
        **{vary: 0.0},
        attack_batches=cfg.horizon,
        attacker_noise=dataclasses.replace(attack.attacker_noise, quantization_step=0.0),
    )
    count = cfg.horizon * n
    shift_units = _grid_shift_units(attack, vary, count)

    successes = np.zeros(len(cfg.grid), dtype=np.int64)
    for seed in trial_seeds:
        trial_rng = np.random.default_rng(int(seed))
        arrivals0 = attack_arrivals(
            base_spec, source.schedule, source.clock, source.noise.delay_mean,
            normal_count, n, trial_rng,
        )
        successes += _sweep_one_trial(base_state, arrivals0, shift_units, cfg.grid, qstep, cfg.horizon, n)
    return SuccessCurve(grid=cfg.grid, p_success=successes / cfg.trials,
                        trials=cfg.trials, horizon=cfg.horizon, source="EXPERIMENTAL")


def _monte_carlo_replay(trace, message_id, period, attack, cfg, vary):
    n = cfg.ids.batch_size
    a = trace.arrivals(message_id)
    warmup_len = (cfg.warmup_batches + 1) * n
    if len(a) < warmup_len + cfg.trials - 1:
        raise InsufficientDataError(
            f"replay needs {warmup_len + cfg.trials - 1} arrivals of id {message_id:#x}, got {len(a)}"
        )
    rng = np.random.default_rng(cfg.seed)
    trial_seeds = rng.integers(0, 2**63, size=cfg.trials)
    qstep = attack.attacker_noise.quantization_step
    base_spec = dataclasses.replace(
        attack,
        **{vary: 0.0},
        attack_batches=cfg.horizon,
        attacker_noise=dataclasses.replace(attack.attacker_noise, quantization_step=0.0),
    )
    count = cfg.horizon * n
    shift_units = _grid_shift_units(attack, vary, count)
    schedule = MessageSchedule(message_id, period)

    successes = np.zeros(len(cfg.grid), dtype=np.int64)
    for i, seed in enumerate(trial_seeds):
        window = a[i : i + warmup_len]
        state = _warmup_state(window, cfg, period)
        mu_hat, _ = state.inter_arrival_stats()
        # anchor the spoofed stream at the recorded stream's own cadence
        target_skew = period / mu_hat - 1.0
        trial_rng = np.random.default_rng(int(seed))
        arrivals0 = attack_arrivals(
            base_spec,
            dataclasses.replace(schedule, start_time=float(window[0])),
            ClockSpec(skew=target_skew),
            0.0,
            warmup_len,
            n,
            trial_rng,
        )
        # re-anchor: the recorded last arrival replaces the synthetic one
        arrivals0 = arrivals0 - (float(window[0]) + (warmup_len - 1) * mu_hat) + float(window[-1])
        successes += _sweep_one_trial(state, arrivals0, shift_units, cfg.grid, qstep, cfg.horizon, n)
    return SuccessCurve(grid=cfg.grid, p_success=successes / cfg.trials,
                        trials=cfg.trials, horizon=cfg.horizon, source="EXPERIMENTAL")


def epsilon_msi(curve, epsilon):
    """Width of the grid region where success stays above 1 - epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    mask = curve.p_success > 1.0 - epsilon
    if not np.any(mask):
        return 0.0
    qualifying = curve.grid[mask]
    return float(qualifying.max() - qualifying.min())


def _trapezoid(y, x):
    return float(np.trapezoid(y, x)) if hasattr(np, "trapezoid") else float(np.trapz(y, x))


def ade(predicted, experimental):
    """Area deviation error in percent: 100 * int|P_pred - P_exp| / int P_exp.

    Curves on different grids are compared on the experimental grid, with the
    prediction resampled by linear interpolation.
    """
    x = experimental.grid
    p_exp = experimental.p_success
    if predicted.grid.shape == x.shape and np.allclose(predicted.grid, x):
        p_pred = predicted.p_success
    else:
        p_pred = np.interp(x, predicted.grid, predicted.p_success)
    denom = _trapezoid(p_exp, x)
    if denom <= 0.0:
        raise ValueError("experimental curve has zero area")
    return 100.0 * _trapezoid(np.abs(p_pred - p_exp), x) / denom


@dataclass(frozen=True)
class ConsistencyCase:
    label: str
    skews_ppm: tuple
    sigma_ppm: float | None  # None when fewer than 2 estimates (insufficient variation)


@dataclass(frozen=True)
class ConsistencyResult:
    cases: dict  # variant value -> list of ConsistencyCase

    def to_csv(self):
        lines = ["variant,case,sigma_ppm,skews_ppm"]
        for variant, cases in self.cases.items():
            for c in cases:
                sigma = "" if c.sigma_ppm is None else f"{c.sigma_ppm:.6g}"
                lines.append(f"{variant},{c.label},{sigma}," + " ".join(f"{s:.6g}" for s in c.skews_ppm))
        return "\n".join(lines) + "\n"


def _final_skew_ppm(arrivals, config, period):
    n = config.batch_size
    k = len(arrivals) // n
    if k < 2:
        raise InsufficientDataError(f"need >= 2 batches of {n}, got {len(arrivals)} arrivals")
    trace = Trace(times=np.asarray(arrivals), ids=np.zeros(len(arrivals), dtype=np.uint32))
    report = run_ids(trace, 0, config, warmup_batches=k - 1, period=period)
    return report.final_state.rls.skew * 1e6


def _sigma(values):
    return float(np.std(values, ddof=1)) if len(values) >= 2 else None


def consistency_study(traces, message_id, batch_sizes, config, period):
    """Spread of the final skew estimate under estimator perturbations.

    Case 1 varies the batch size, case 2 the batch start offset (1..N-1 at the
    first batch size), case 3 the trace (when several are given); each case
    reports the std of the final RLS skew in ppm, per detector variant.
    """
    if isinstance(traces, Trace):
        traces = [traces]
    if not batch_sizes:
        raise ValueError("batch_sizes must be non-empty")
    result = {}
    for variant in (Variant.SOTA, Variant.NTP):
        cases = []
        a = traces[0].arrivals(message_id)

        skews = []
        for n in batch_sizes:
            cfg_n = dataclasses.replace(config, variant=variant, batch_size=n)
            skews.append(_final_skew_ppm(a, cfg_n, period))
        cases.append(ConsistencyCase("batch_size", tuple(skews), _sigma(skews)))

        cfg_v = dataclasses.replace(config, variant=variant, batch_size=batch_sizes[0])
        skews = []
        for offset in range(1, cfg_v.batch_size):
            skews.append(_final_skew_ppm(a[offset:], cfg_v, period))
        cases.append(ConsistencyCase("start_offset", tuple(skews), _sigma(skews)))

        skews = []
        for trace in traces:
            skews.append(_final_skew_ppm(trace.arrivals(message_id), cfg_v, period))
        cases.append(ConsistencyCase("trace", tuple(skews), _sigma(skews)))
        result[variant.value] = cases
    return ConsistencyResult(cases=result)
