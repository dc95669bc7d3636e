"""Masquerade and cloaking attack trace generation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clock import (
    ClockSpec,
    NoiseModel,
    Trace,
    inter_arrival_stats,
    quantize,
    receiver_period,
)

__all__ = [
    "AttackSpec",
    "compute_delta_t0",
    "estimate_delta_t0",
    "cloaked_trace",
    "append_attack",
    "attack_arrivals",
    "shift_inter_arrivals",
]


@dataclass(frozen=True)
class AttackSpec:
    """Parameters of a cloaking/masquerade attack.

    delta_t0 is the skew-matching extra inter-transmission delay; delta_t the
    residual deviation from it; mistiming perturbs only the gap before the
    first attack message. start_batch counts batches of the consuming IDS
    (batch 0 is its initialization batch), so the attack begins after
    start_batch * N normal messages.
    """

    delta_t0: float
    delta_t: float = 0.0
    mistiming: float = 0.0
    start_batch: int = 1
    attack_batches: int = 1
    attacker_clock: ClockSpec = field(default_factory=ClockSpec)
    attacker_noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.start_batch < 1:
            raise ValueError("start_batch must be >= 1")
        if self.attack_batches < 1:
            raise ValueError("attack_batches must be >= 1")


def compute_delta_t0(skew_a, skew_b, period):
    """Extra inter-transmission delay that makes attacker A's stream look
    like target B's: ((S_A - S_B) / (1 + S_B)) * T."""
    if skew_b <= -1.0:
        raise ValueError(f"target skew must be > -1, got {skew_b}")
    return (skew_a - skew_b) / (1.0 + skew_b) * period


def estimate_delta_t0(trace, message_id, period, attacker_clock):
    """Empirical delta_t0: the target's period as measured by the attacker's
    local clock, minus the nominal period."""
    mean_ia, _ = inter_arrival_stats(trace, message_id)
    return (1.0 + attacker_clock.skew) * mean_ia - period


def attack_arrivals(spec, schedule, target_clock, target_delay_mean, normal_count, batch_size, rng):
    """Receiver-time arrivals of the spoofed stream following the normal part."""
    mu = receiver_period(schedule.period, target_clock.skew)
    # next expected arrival instant of the suppressed target message
    anchor = schedule.start_time + (normal_count - 1) * mu + target_delay_mean
    noise = spec.attacker_noise
    # center so the mean boundary gap is exactly mu + delta_t + mistiming
    base = anchor + mu + spec.delta_t + spec.mistiming - noise.delay_mean
    mu_attack = (schedule.period + spec.delta_t0 + spec.delta_t) / (1.0 + spec.attacker_clock.skew)
    count = spec.attack_batches * batch_size
    j = np.arange(count, dtype=np.float64)
    nominal = base + j * mu_attack
    eps = rng.normal(0.0, spec.attacker_clock.jitter_std, count) if spec.attacker_clock.jitter_std > 0 else 0.0
    delay = rng.normal(noise.delay_mean, noise.delay_std, count) if noise.delay_std > 0 else noise.delay_mean
    return quantize(nominal - eps + delay, noise.quantization_step)


def append_attack(normal, spec, schedule, target_clock, target_noise, batch_size, seed):
    """Append the spoofed stream to an already-synthesized normal trace."""
    normal_count = len(normal.arrivals(schedule.message_id))
    if normal_count < spec.start_batch * batch_size:
        raise ValueError("normal trace is shorter than start_batch batches")
    rng = np.random.default_rng(seed)
    attack = attack_arrivals(spec, schedule, target_clock, target_noise.delay_mean, normal_count, batch_size, rng)
    times = np.concatenate([normal.times, attack])
    ids = np.concatenate([normal.ids, np.full(len(attack), schedule.message_id, dtype=np.uint32)])
    return Trace(times=times, ids=ids)


def cloaked_trace(spec, schedule, target_clock, target_noise, normal_count, batch_size, seed):
    """Normal stream from the target's clock followed by the cloaked spoofed
    stream; the boundary gap is mu + delta_t + mistiming."""
    from .clock import synthesize_trace

    if normal_count < spec.start_batch * batch_size:
        raise ValueError(f"normal_count must be >= start_batch * batch_size = {spec.start_batch * batch_size}")
    rng = np.random.default_rng(seed)
    normal_seed, attack_seed = rng.integers(0, 2**63, size=2)
    normal = synthesize_trace(schedule, target_clock, target_noise, normal_count, int(normal_seed))
    return append_attack(normal, spec, schedule, target_clock, target_noise, batch_size, int(attack_seed))


def shift_inter_arrivals(trace, message_id, delta_t, from_index):
    """Add delta_t to every inter-arrival of one id from gap ``from_index``
    on (gap j separates arrivals j-1 and j); earlier arrivals untouched."""
    a = trace.arrivals(message_id)
    if not 1 <= from_index < len(a):
        raise IndexError(f"from_index must be in [1, {len(a) - 1}], got {from_index}")
    shifted = a.copy()
    shifted[from_index:] += delta_t * np.arange(1, len(a) - from_index + 1)
    times = trace.times.copy()
    times[trace.ids == message_id] = shifted
    order = np.argsort(times, kind="stable")
    return Trace(times=times[order], ids=trace.ids[order], inserted=trace.inserted[order])
