"""Success-probability models: closed-form SOTA bound, NTP forecast, and the
CUSUM control-limit recursion."""
import math

import numpy as np
import pytest
from scipy.special import ndtr

from canskew.clock import synthesize_trace
from canskew.formal import (
    CusumRecursionConfig,
    Snapshot,
    cusum_success_recursion,
    gaussian_cdf,
    lplus_max,
    ntp_forecast,
    ntp_success_prob,
    snapshot_from_csv,
    snapshot_to_csv,
    sota_initial_error,
    sota_success_prob,
    sota_tau,
    success_curve,
    take_snapshot,
)
from canskew.harness import ExperimentConfig, _warmup_state
from canskew.ids import Variant
from conftest import MESSAGE_ID, PERIOD, make_config


def manual_snapshot(variant=Variant.SOTA, **overrides):
    fields = dict(
        config=make_config(variant),
        period=PERIOD,
        mu=PERIOD,
        sigma=1.0,
        prev_batch_mean=PERIOD,
        o_acc=0.0,
        t=2000.0,
        skew=0.0,
        mu_cusum=0.0,
        sigma_cusum=1.0,
        reference_errors=(),
    )
    fields.update(overrides)
    return Snapshot(**fields)


@pytest.fixture(scope="module")
def warm_states(schedule, target_clock, noise):
    trace = synthesize_trace(schedule, target_clock, noise, 301 * 20, seed=21)
    arrivals = trace.arrivals(MESSAGE_ID)
    states = {}
    for variant in Variant:
        cfg = ExperimentConfig(ids=make_config(variant), warmup_batches=300,
                               trials=1, horizon=1, grid=np.array([0.0]))
        states[variant] = _warmup_state(arrivals, cfg, PERIOD)
    return states


@pytest.fixture(scope="module")
def sota_snapshot(warm_states):
    return take_snapshot(None, warm_states[Variant.SOTA], 301)


@pytest.fixture(scope="module")
def ntp_snapshot(warm_states):
    return take_snapshot(None, warm_states[Variant.NTP], 301)


class TestGaussianCdf:
    def test_matches_reference(self):
        xs = np.linspace(-8, 8, 201)
        for x in xs:
            assert gaussian_cdf(float(x)) == pytest.approx(float(ndtr(x)), abs=1e-13)

    def test_location_scale(self):
        assert gaussian_cdf(3.0, mean=3.0, std=2.0) == pytest.approx(0.5, abs=1e-15)
        assert gaussian_cdf(5.0, mean=3.0, std=2.0) == pytest.approx(float(ndtr(1.0)), abs=1e-13)


class TestSnapshot:
    def test_requires_positive_sigmas(self):
        with pytest.raises(ValueError):
            manual_snapshot(sigma=0.0)
        with pytest.raises(ValueError):
            manual_snapshot(sigma_cusum=0.0)

    def test_snapshot_reproduces_state_fields(self, warm_states):
        state = warm_states[Variant.NTP]
        snap = take_snapshot(None, state, state.batch_index + 1)
        assert snap.o_acc == state.o_acc
        assert snap.t == state.elapsed
        assert snap.skew == state.rls.skew
        assert snap.mu_cusum == state.cusum.mu_cusum

    def test_snapshot_deterministic(self, warm_states):
        state = warm_states[Variant.SOTA]
        m = state.batch_index + 1
        assert take_snapshot(None, state, m) == take_snapshot(None, state, m)

    def test_snapshot_sigma_matches_inter_arrival_stats(self, warm_states, schedule, target_clock, noise):
        state = warm_states[Variant.SOTA]
        snap = take_snapshot(None, state, state.batch_index + 1)
        trace = synthesize_trace(schedule, target_clock, noise, 301 * 20, seed=21)
        diffs = np.diff(trace.arrivals(MESSAGE_ID))
        assert snap.sigma == pytest.approx(float(np.std(diffs, ddof=1)), rel=0.01)

    def test_wrong_batch_index_rejected(self, warm_states):
        with pytest.raises(ValueError):
            take_snapshot(None, warm_states[Variant.SOTA], 5)

    def test_csv_round_trip(self, ntp_snapshot):
        restored = snapshot_from_csv(snapshot_to_csv(ntp_snapshot))
        assert restored == ntp_snapshot


class TestSotaInitialError:
    def test_vanishing_terms(self):
        snap = manual_snapshot(o_acc=1.5e-3)
        mu_e, sigma_e = sota_initial_error(snap, 0.0)
        assert mu_e == pytest.approx(1.5e-3, abs=1e-15)
        assert sigma_e == pytest.approx(math.sqrt(20.0 / 38.0), rel=1e-12)

    def test_unit_sigma_value(self):
        _, sigma_e = sota_initial_error(manual_snapshot(), 0.0)
        assert sigma_e == pytest.approx(0.7255, abs=2e-4)

    def test_mu_e_even_in_batch_mean_gap(self):
        snap = manual_snapshot(sigma=25e-6)
        up, _ = sota_initial_error(snap, +4e-4)
        down, _ = sota_initial_error(snap, -4e-4)
        assert up == pytest.approx(down, abs=1e-15)

    def test_monte_carlo_first_batch_error(self):
        # simulate e[m] = O_acc + |O_avg[m]| with a shift large enough that
        # the folded mean equals the shifted mean
        rng = np.random.default_rng(6)
        n, sigma_eta, shift = 20, 25e-6, 5e-4
        snap = manual_snapshot(sigma=math.sqrt(2) * sigma_eta, o_acc=2e-3,
                               mu=PERIOD, prev_batch_mean=PERIOD - shift)
        trials = 100_000
        eta = rng.normal(0.0, sigma_eta, (trials, n))
        i = np.arange(n)
        arrivals = i * PERIOD + eta  # gap vs prev_batch_mean is the shift
        o_avg = np.mean(arrivals[:, 1:] - (arrivals[:, :1] + i[1:] * snap.prev_batch_mean), axis=1)
        e = snap.o_acc + np.abs(o_avg)
        mu_e, sigma_e = sota_initial_error(snap, 0.0)
        assert float(e.mean()) == pytest.approx(mu_e, rel=0.02)
        assert float(e.std(ddof=1)) == pytest.approx(sigma_e, rel=0.02)


class TestSotaTau:
    def test_zero_skew_form(self):
        snap = manual_snapshot(sigma=2.0, sigma_cusum=4.0)
        expected = 2.0 * math.sqrt(20.0 / (math.pi * 19.0)) / 4.0
        assert sota_tau(snap, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_reference_value(self):
        assert sota_tau(manual_snapshot(), 0.0) == pytest.approx(0.5787, abs=2e-4)

    def test_nonnegative(self):
        snap = manual_snapshot(skew=5e-3)
        for dt in (-1e-3, 0.0, 1e-3):
            assert sota_tau(snap, dt) >= 0.0


class TestLplusMax:
    def test_worked_case(self):
        assert lplus_max(10.0, 0.5, 8.0) == pytest.approx(5.0, rel=1e-12)

    def test_below_kappa_never_charges(self):
        assert lplus_max(7.9, 0.5, 8.0) == 0.0

    def test_zero_tau_diverges(self):
        assert lplus_max(9.0, 0.0, 8.0) == math.inf


class TestSotaSuccessProb:
    def test_hand_computed_boundary(self):
        # tau=0.5, Gamma=5, kappa=8: hi = (-0.5 + 4.5)/2 + 8 = 10
        snap = manual_snapshot(sigma_cusum=1.0, sigma=1.0)
        # force tau = 0.5 via sigma/sigma_cusum choice: sigma*sqrt(20/(19pi)) = 0.5787*sigma
        snap = manual_snapshot(sigma=0.5 / math.sqrt(20.0 / (math.pi * 19.0)))
        pred = sota_success_prob(snap, 0.0)
        assert pred.tau == pytest.approx(0.5, rel=1e-12)
        assert pred.p_success == pytest.approx(1.0, abs=1e-6)

    def test_large_delta_t_fails(self, sota_snapshot):
        assert sota_success_prob(sota_snapshot, 5e-3).p_success == pytest.approx(0.0, abs=1e-9)

    def test_probability_bounds(self, sota_snapshot):
        for dt in np.linspace(-1e-3, 1e-3, 41):
            p = sota_success_prob(sota_snapshot, float(dt)).p_success
            assert 0.0 <= p <= 1.0

    def test_monotone_in_mean_magnitude(self):
        base = manual_snapshot(sigma=25e-6, sigma_cusum=1e-4, mu=PERIOD, prev_batch_mean=PERIOD)
        probs = [sota_success_prob(base, dt).p_success for dt in np.linspace(0.0, 2e-3, 30)]
        assert all(b <= a + 1e-12 for a, b in zip(probs, probs[1:]))


class TestCusumRecursion:
    def test_kappa_must_dominate_gamma(self):
        with pytest.raises(ValueError):
            cusum_success_recursion([(0.0, 1.0)], 5.0, 4.0, CusumRecursionConfig())

    def test_single_batch_collapses_to_cdf(self):
        cfg = CusumRecursionConfig(grid_resolution=100)
        for mean in (0.0, 7.0, 11.0):
            expected = float(ndtr(13.0 - mean) - ndtr(-13.0 - mean))
            got = cusum_success_recursion([(mean, 1.0)], 5.0, 8.0, cfg)
            assert got == pytest.approx(expected, abs=1e-3)

    def test_mass_inside_dead_zone_gives_one(self):
        cfg = CusumRecursionConfig(grid_resolution=60)
        densities = [(0.0, 0.3)] * 10  # mass well within [-(kappa-Gamma), kappa-Gamma]
        assert cusum_success_recursion(densities, 5.0, 8.0, cfg) == pytest.approx(1.0, abs=1e-9)

    def test_against_monte_carlo(self):
        rng = np.random.default_rng(14)
        kappa, big_gamma, n = 8.0, 5.0, 20
        for mean in (7.0, 9.0):
            seqs = rng.normal(mean, 1.0, (10_000, n))
            lp = np.zeros(10_000)
            lm = np.zeros(10_000)
            alive = np.ones(10_000, dtype=bool)
            for k in range(n):
                lp = np.maximum(0.0, lp + seqs[:, k] - kappa)
                lm = np.maximum(0.0, lm - seqs[:, k] - kappa)
                alive &= (np.maximum(lp, lm) <= big_gamma)
            mc = float(alive.mean())
            pred = cusum_success_recursion([(mean, 1.0)] * n, big_gamma, kappa,
                                           CusumRecursionConfig(grid_resolution=100))
            assert pred == pytest.approx(mc, abs=0.03)

    def test_grid_convergence(self):
        densities = [(9.0, 1.0)] * 20
        p100 = cusum_success_recursion(densities, 5.0, 8.0, CusumRecursionConfig(grid_resolution=100))
        p200 = cusum_success_recursion(densities, 5.0, 8.0, CusumRecursionConfig(grid_resolution=200))
        assert abs(p100 - p200) <= 0.01


class TestNtpForecast:
    def test_o_acc_identity(self, ntp_snapshot):
        fc = ntp_forecast(ntp_snapshot, 0.0, 60)
        n = ntp_snapshot.config.batch_size
        drift = ntp_snapshot.o_acc - (ntp_snapshot.start_batch - 1) * n * PERIOD + ntp_snapshot.t
        # identity O_acc = kNT - t holds up to the run's own constant offset
        for k, (t_hat, o_hat) in enumerate(zip(fc.t_hat, fc.o_acc_hat), start=ntp_snapshot.start_batch):
            assert o_hat == pytest.approx(k * n * PERIOD - t_hat + drift, abs=1e-9)

    def test_zero_offset_trivial_forecast(self):
        n, t_now = 20, 100 * 20 * PERIOD
        history_t = [k * n * PERIOD for k in range(1, 101)]
        snap = manual_snapshot(
            Variant.NTP, mu=PERIOD, sigma=1e-6, o_acc=0.0, t=t_now,
            o_acc_history=tuple(0.0 for _ in history_t), t_history=tuple(history_t),
            start_batch=101,
        )
        fc = ntp_forecast(snap, 0.0, 5)
        assert np.allclose(fc.t_hat, [(101 + j) * n * PERIOD for j in range(5)], atol=1e-9)
        assert np.allclose(fc.o_acc_hat, 0.0, atol=1e-12)
        assert np.allclose(fc.e_hat, 0.0, atol=1e-12)

    def test_lambda_one_recovers_exact_slope(self):
        # with mu = T the forecast continues the exact line when
        # delta_t = -slope*mu/(1+slope), so a perfect LS slope gives e_hat = 0
        n, slope = 20, 2e-4
        history_t = [k * n * PERIOD for k in range(1, 51)]
        history_o = [slope * t for t in history_t]
        snap = manual_snapshot(
            Variant.NTP, config=make_config(Variant.NTP, rls_lambda=1.0),
            mu=PERIOD, sigma=1e-6, o_acc=history_o[-1], t=history_t[-1],
            o_acc_history=tuple(history_o), t_history=tuple(history_t), start_batch=51,
        )
        fc = ntp_forecast(snap, -slope * PERIOD / (1 + slope), 1)
        assert fc.e_hat[0] == pytest.approx(0.0, abs=1e-12)

    def test_requires_history(self):
        snap = manual_snapshot(Variant.NTP)
        with pytest.raises(ValueError):
            ntp_forecast(snap, 0.0, 5)

    def test_forecast_tracks_simulated_errors(self, ntp_snapshot, warm_states, schedule,
                                               target_clock, attacker_clock, noise, matched_delta_t0):
        from canskew.attacks import AttackSpec, attack_arrivals
        from canskew.ids import clone_state, process_batch

        delta_t = 5e-6
        horizon = 60
        fc = ntp_forecast(ntp_snapshot, delta_t, horizon)
        spec = AttackSpec(delta_t0=matched_delta_t0, delta_t=delta_t, start_batch=301,
                          attack_batches=horizon, attacker_clock=attacker_clock)
        sims = np.zeros((100, horizon))
        for trial in range(100):
            rng = np.random.default_rng(1000 + trial)
            arrivals = attack_arrivals(spec, schedule, target_clock, 0.0, 301 * 20, 20, rng)
            state = clone_state(warm_states[Variant.NTP])
            for k, batch in enumerate(arrivals.reshape(horizon, 20)):
                sims[trial, k] = process_batch(state, batch, armed=True).e
        mean_e = sims.mean(axis=0)
        scale = np.max(np.abs(mean_e))
        assert np.all(np.abs(fc.e_hat - mean_e) <= 0.10 * scale)


class TestSuccessCurve:
    def test_sota_symmetric_when_unbiased(self):
        snap = manual_snapshot(sigma=25e-6, sigma_cusum=1e-4, mu=PERIOD, prev_batch_mean=PERIOD)
        grid = np.linspace(-1e-3, 1e-3, 41)
        curve = success_curve(snap, grid)
        assert np.allclose(curve.p_success, curve.p_success[::-1], atol=1e-9)

    def test_matched_point_near_one(self, ntp_snapshot, sota_snapshot):
        for snap in (ntp_snapshot, sota_snapshot):
            curve = success_curve(snap, np.array([0.0]), horizon=60)
            assert curve.p_success[0] >= 0.95

    def test_unimodal(self, ntp_snapshot):
        grid = np.arange(-20, 21) * 0.1e-6
        p = success_curve(ntp_snapshot, grid, horizon=30).p_success
        peak = int(np.argmax(p))
        assert np.all(np.diff(p[: peak + 1]) >= -1e-6)
        assert np.all(np.diff(p[peak:]) <= 1e-6)

    def test_grid_validation(self, ntp_snapshot):
        with pytest.raises(ValueError):
            success_curve(ntp_snapshot, np.array([]))
        with pytest.raises(ValueError):
            success_curve(ntp_snapshot, np.array([1e-6, -1e-6]))
