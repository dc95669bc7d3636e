"""Closed-form and recursive attack-success-probability models.

The SOTA detector gets a closed-form Gaussian bound on the first-batch
normalized error plus a linear decay rate; the NTP detector gets a
deterministic state forecast feeding a backward recursion over the joint
CUSUM control-limit state.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .curves import SuccessCurve
from .ids import IdsConfig, Variant

__all__ = [
    "Snapshot",
    "SotaPrediction",
    "NtpForecast",
    "CusumRecursionConfig",
    "take_snapshot",
    "gaussian_cdf",
    "sota_initial_error",
    "sota_tau",
    "sota_success_prob",
    "lplus_max",
    "ntp_forecast",
    "cusum_success_recursion",
    "ntp_success_prob",
    "success_curve",
    "snapshot_to_csv",
    "snapshot_from_csv",
]


def gaussian_cdf(x, mean=0.0, std=1.0):
    """Normal CDF via the complementary error function (abs. error < 1e-12)."""
    if std <= 0.0:
        return 0.0 if x < mean else (0.5 if x == mean else 1.0)
    return 0.5 * math.erfc((mean - x) / (std * math.sqrt(2.0)))


@dataclass(frozen=True)
class Snapshot:
    """Frozen detector state at batch m-1, right before an attack at batch m."""

    config: IdsConfig
    period: float | None
    mu: float                 # pre-attack mean inter-arrival
    sigma: float              # pre-attack inter-arrival std
    prev_batch_mean: float    # mu[m-1] (SOTA offset estimator)
    o_acc: float              # O_acc[m-1]
    t: float                  # t[m-1]
    skew: float               # S[m-1]
    mu_cusum: float
    sigma_cusum: float
    reference_errors: tuple
    eta_last: float = 0.0     # realized noise of the last pre-attack arrival
    o_acc_history: tuple = ()
    t_history: tuple = ()
    start_batch: int = 1      # m

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("snapshot requires sigma > 0")
        if self.sigma_cusum <= 0.0:
            raise ValueError("snapshot requires sigma_cusum > 0")


@dataclass(frozen=True)
class SotaPrediction:
    mu_e: float
    sigma_e: float
    tau: float
    p_success: float


@dataclass(frozen=True)
class CusumRecursionConfig:
    grid_resolution: int = 100
    horizon: int = 60

    def __post_init__(self):
        if self.grid_resolution < 10:
            raise ValueError("grid_resolution must be >= 10")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class NtpForecast:
    """Deterministic per-batch forecast of the NTP detector under attack,
    plus the Gaussian parameters of each batch's normalized error."""

    batches: np.ndarray
    t_hat: np.ndarray
    o_acc_hat: np.ndarray
    skew_hat: np.ndarray
    e_hat: np.ndarray
    mu_cusum_hat: np.ndarray
    sigma_cusum_hat: np.ndarray
    e_n_mean: np.ndarray
    e_n_std: np.ndarray

    def to_csv(self):
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([
            "batch", "t_hat", "o_acc_hat", "skew_hat", "e_hat",
            "mu_cusum_hat", "sigma_cusum_hat", "e_n_mean", "e_n_std",
        ])
        for i in range(len(self.batches)):
            writer.writerow([
                int(self.batches[i]),
                *(f"{col[i]:.12g}" for col in (
                    self.t_hat, self.o_acc_hat, self.skew_hat, self.e_hat,
                    self.mu_cusum_hat, self.sigma_cusum_hat, self.e_n_mean, self.e_n_std,
                )),
            ])
        return buf.getvalue()


def take_snapshot(report, state, m, delay_mean=0.0):
    """Freeze the detector at batch m-1 from a finished (or paused) run;
    ``report`` may be None when only the state is at hand."""
    if report is not None and len(report.rows) < m - 1:
        raise ValueError(f"report covers {len(report.rows)} batches, need >= {m - 1}")
    if state.batch_index != m - 1:
        raise ValueError(f"state is at batch {state.batch_index}, snapshot wants m-1 = {m - 1}")
    mu, sigma = state.inter_arrival_stats()
    return Snapshot(
        config=state.config,
        period=state.period,
        mu=mu,
        sigma=sigma,
        prev_batch_mean=state.prev_batch_mean,
        o_acc=state.o_acc,
        t=state.elapsed,
        skew=state.rls.skew,
        mu_cusum=state.cusum.mu_cusum,
        sigma_cusum=state.cusum.sigma_cusum,
        reference_errors=tuple(state.cusum.reference_errors),
        eta_last=delay_mean,
        o_acc_history=tuple(state.o_acc_history),
        t_history=tuple(state.t_history),
        start_batch=m,
    )


def sota_initial_error(snapshot, delta_t):
    """Mean and std of the unnormalized identification error in the first
    attack batch (SOTA)."""
    n = snapshot.config.batch_size
    s = snapshot.skew
    shifted = snapshot.mu + delta_t
    t_m0 = shifted  # modeled gap into the first attack batch
    mu_e = (
        snapshot.o_acc
        + 0.5 * n * abs(shifted - snapshot.prev_batch_mean)
        - s * (snapshot.t + t_m0 + (n - 1) * shifted)
    )
    var_e = 0.5 * ((n - 2.0 * s) / (n - 1.0) + 2.0 * s * s - 2.0 * s) * snapshot.sigma**2
    return mu_e, math.sqrt(var_e)


def sota_tau(snapshot, delta_t):
    """Per-batch decay rate of the normalized error after the attack (SOTA)."""
    n = snapshot.config.batch_size
    shifted = snapshot.mu + delta_t
    return abs(
        (snapshot.sigma * math.sqrt(n / (math.pi * (n - 1))) - snapshot.skew * n * shifted)
        / snapshot.sigma_cusum
    )


def lplus_max(e_n0, tau, kappa):
    """Peak value of the upper control limit for a linearly decaying
    normalized-error sequence starting at e_n0."""
    if e_n0 <= kappa:
        return 0.0
    if tau <= 0.0:
        return math.inf
    return (e_n0 - kappa) ** 2 / (2.0 * tau) + (e_n0 - kappa) / 2.0


def sota_success_prob(snapshot, delta_t):
    """Closed-form cloaking success probability against the SOTA detector."""
    cfg = snapshot.config
    mu_e, sigma_e = sota_initial_error(snapshot, delta_t)
    tau = sota_tau(snapshot, delta_t)
    kappa = cfg.sensitivity
    big_gamma = cfg.detection_threshold
    if tau > 0.0:
        hi = (-tau + math.sqrt(tau * tau + 8.0 * tau * big_gamma)) / 2.0 + kappa
    else:
        # non-decaying sub-kappa errors never charge the limits
        hi = kappa
    lo = -hi
    mean = (mu_e - snapshot.mu_cusum) / snapshot.sigma_cusum
    std = sigma_e / snapshot.sigma_cusum
    p = gaussian_cdf(hi, mean, std) - gaussian_cdf(lo, mean, std)
    return SotaPrediction(mu_e=mu_e, sigma_e=sigma_e, tau=tau, p_success=min(max(p, 0.0), 1.0))


def ntp_forecast(snapshot, delta_t, horizon):
    """Forecast the NTP detector's state over ``horizon`` attack batches.

    Noise terms are taken at their means, the RLS output is approximated by
    the lambda-weighted least-squares slope over the full history, and the
    CUSUM reference statistics are advanced by their own update rule.
    """
    if snapshot.period is None:
        raise ValueError("NTP forecast requires the nominal period in the snapshot")
    if not snapshot.o_acc_history:
        raise ValueError("NTP forecast requires the pre-attack O_acc/t history")
    cfg = snapshot.config
    n = cfg.batch_size
    lam = cfg.rls_lambda
    period = snapshot.period
    offset = period - snapshot.mu  # per-period offset O
    sigma_eta = snapshot.sigma / math.sqrt(2.0)

    a_sum = 0.0
    b_sum = 0.0
    for o_i, t_i in zip(snapshot.o_acc_history, snapshot.t_history):
        a_sum = lam * a_sum + o_i * t_i
        b_sum = lam * b_sum + t_i * t_i
    skew_prev = a_sum / b_sum

    ref = list(snapshot.reference_errors)
    ref_sum = sum(ref)
    ref_sumsq = sum(e * e for e in ref)
    ref_n = len(ref)
    mu_c = snapshot.mu_cusum
    sigma_c = snapshot.sigma_cusum

    m = snapshot.start_batch
    cols = {k: [] for k in ("t", "o", "s", "e", "mu", "sig", "mean", "std")}
    for j in range(1, horizon + 1):
        t_hat = snapshot.t + j * n * (snapshot.mu + delta_t)
        o_hat = snapshot.o_acc + j * n * (offset - delta_t)
        e_hat = o_hat - skew_prev * t_hat
        mean_en = (e_hat - mu_c) / sigma_c
        std_en = abs(1.0 + skew_prev) * sigma_eta / sigma_c
        cols["t"].append(t_hat)
        cols["o"].append(o_hat)
        cols["e"].append(e_hat)
        cols["mu"].append(mu_c)
        cols["sig"].append(sigma_c)
        cols["mean"].append(mean_en)
        cols["std"].append(std_en)
        if abs(mean_en) <= cfg.update_threshold:
            ref_n += 1
            ref_sum += e_hat
            ref_sumsq += e_hat * e_hat
            mu_c = ref_sum / ref_n
            if ref_n >= 2:
                var = max(0.0, (ref_sumsq - ref_n * mu_c * mu_c) / (ref_n - 1))
                sigma_c = max(math.sqrt(var), 1e-12)  # same floor as the detector
        a_sum = lam * a_sum + o_hat * t_hat
        b_sum = lam * b_sum + t_hat * t_hat
        skew_prev = a_sum / b_sum
        cols["s"].append(skew_prev)
    return NtpForecast(
        batches=np.arange(m, m + horizon),
        t_hat=np.array(cols["t"]),
        o_acc_hat=np.array(cols["o"]),
        skew_hat=np.array(cols["s"]),
        e_hat=np.array(cols["e"]),
        mu_cusum_hat=np.array(cols["mu"]),
        sigma_cusum_hat=np.array(cols["sig"]),
        e_n_mean=np.array(cols["mean"]),
        e_n_std=np.array(cols["std"]),
    )


def cusum_success_recursion(error_densities, big_gamma, kappa, cfg):
    """Probability that neither CUSUM limit exceeds the detection threshold
    within the horizon, by backward recursion over the limit state.

    ``error_densities`` is a sequence of (mean, std) Gaussian parameters of
    the normalized error, one per attack batch, in batch order. Requires the
    modeling assumption kappa >= Gamma, under which at most one control limit
    is nonzero at a time and the state space collapses to the two axes of
    [0, Gamma]^2.
    """
    if kappa < big_gamma:
        raise ValueError(f"recursion assumes kappa >= Gamma, got kappa={kappa}, Gamma={big_gamma}")
    densities = list(error_densities)
    n = len(densities)
    if n == 0:
        raise ValueError("need at least one error density")
    big_m = cfg.grid_resolution
    h = big_gamma / big_m
    z = np.linspace(0.0, big_gamma, big_m + 1)
    u_mid = (np.arange(big_m) + 0.5) * h  # cell midpoints for quadrature

    g_plus = np.ones(big_m + 1)   # g(z, 0)
    g_minus = np.ones(big_m + 1)  # g(0, z)

    def norm_pdf(x, mean, std):
        return np.exp(-0.5 * ((x - mean) / std) ** 2) / (std * math.sqrt(2.0 * math.pi))

    def norm_cdf(x, mean, std):
        return ndtr((x - mean) / std)

    for mean, std in reversed(densities):
        if std <= 0.0:
            raise ValueError("error densities must have positive std")
        g_mid_minus = 0.5 * (g_minus[:-1] + g_minus[1:])
        g_mid_plus = 0.5 * (g_plus[:-1] + g_plus[1:])
        g00 = g_minus[0]

        # term 1: lower limit lands in (0, Gamma];  r = z_minus - kappa - u
        f1 = norm_pdf(z[:, None] - kappa - u_mid[None, :], mean, std)
        term1 = h * f1 @ g_mid_minus
        # term 3: upper limit lands in (0, Gamma];  r = kappa - z_plus + u
        f3 = norm_pdf(kappa - z[:, None] + u_mid[None, :], mean, std)
        term3 = h * f3 @ g_mid_plus
        # term 2: both limits reset to zero
        p_mid_plus = norm_cdf(kappa - z, mean, std) - norm_cdf(-kappa, mean, std)
        p_mid_minus = norm_cdf(kappa, mean, std) - norm_cdf(z - kappa, mean, std)

        new_g_plus = term1[0] + g00 * p_mid_plus + term3
        new_g_minus = term1 + g00 * p_mid_minus + term3[0]
        g_plus = np.clip(new_g_plus, 0.0, 1.0)
        g_minus = np.clip(new_g_minus, 0.0, 1.0)

    return float(g_minus[0])


def ntp_success_prob(snapshot, delta_t, horizon, cfg=None):
    """Cloaking success probability against the NTP detector."""
    if cfg is None:
        cfg = CusumRecursionConfig(horizon=horizon)
    forecast = ntp_forecast(snapshot, delta_t, horizon)
    densities = list(zip(forecast.e_n_mean, forecast.e_n_std))
    p = cusum_success_recursion(densities, snapshot.config.detection_threshold,
                                snapshot.config.sensitivity, cfg)
    return min(max(p, 0.0), 1.0)


def success_curve(snapshot, delta_t_grid, horizon=60, recursion_cfg=None):
    """Predicted success-probability curve over a delta-T grid, using the
    model matching the snapshot's detector variant."""
    grid = np.asarray(delta_t_grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("delta_t_grid must be non-empty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("delta_t_grid must be sorted")
    if snapshot.config.variant is Variant.SOTA:
        p = np.array([sota_success_prob(snapshot, dt).p_success for dt in grid])
    else:
        p = np.array([ntp_success_prob(snapshot, dt, horizon, recursion_cfg) for dt in grid])
    return SuccessCurve(grid=grid, p_success=p, trials=0, horizon=horizon, source="PREDICTED")


_SCALAR_FIELDS = (
    "period", "mu", "sigma", "prev_batch_mean", "o_acc", "t", "skew",
    "mu_cusum", "sigma_cusum", "eta_last",
)
_LIST_FIELDS = ("reference_errors", "o_acc_history", "t_history")


def snapshot_to_csv(snapshot):
    """Serialize a snapshot as key,value CSV (lists space-separated)."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    cfg = snapshot.config
    writer.writerow(["key", "value"])
    writer.writerow(["variant", cfg.variant.value])
    writer.writerow(["batch_size", cfg.batch_size])
    writer.writerow(["rls_lambda", repr(cfg.rls_lambda)])
    writer.writerow(["update_threshold", repr(cfg.update_threshold)])
    writer.writerow(["detection_threshold", repr(cfg.detection_threshold)])
    writer.writerow(["sensitivity", repr(cfg.sensitivity)])
    writer.writerow(["start_batch", snapshot.start_batch])
    for name in _SCALAR_FIELDS:
        value = getattr(snapshot, name)
        writer.writerow([name, "" if value is None else repr(value)])
    for name in _LIST_FIELDS:
        writer.writerow([name, " ".join(repr(v) for v in getattr(snapshot, name))])
    return buf.getvalue()


def snapshot_from_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or header[:2] != ["key", "value"]:
        raise ValueError("expected header 'key,value'")
    raw = {row[0]: row[1] for row in reader if row}
    try:
        config = IdsConfig(
            variant=Variant(raw["variant"]),
            batch_size=int(raw["batch_size"]),
            rls_lambda=float(raw["rls_lambda"]),
            update_threshold=float(raw["update_threshold"]),
            detection_threshold=float(raw["detection_threshold"]),
            sensitivity=float(raw["sensitivity"]),
        )
        kwargs = {"config": config, "start_batch": int(raw.get("start_batch", 1))}
        for name in _SCALAR_FIELDS:
            value = raw[name]
            kwargs[name] = None if value == "" else float(value)
        for name in _LIST_FIELDS:
            value = raw.get(name, "")
            kwargs[name] = tuple(float(v) for v in value.split()) if value else ()
    except KeyError as exc:
        raise ValueError(f"snapshot file is missing field {exc}") from exc
    return Snapshot(**kwargs)
