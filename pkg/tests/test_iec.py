import numpy as np
import pytest

from toilcast.iec import IecParams, check_timestep, simulate, steady_state, step
from toilcast.series import TimeSeries

P = IecParams(psi=5.0, delta_t_or_k=38.3, chi=0.8, k11=1.0, tau_o_min=180.0,
              tau_w_min=10.0)


def const_series(value, n, dt_s=300):
    ts = (np.arange(n, dtype=np.int64)) * dt_s
    return TimeSeries(ts, np.full(n, float(value)), dt_s)


class TestSteadyState:
    def test_rated_load_bracket_is_one(self):
        # at K=1 the loss bracket collapses to 1 regardless of psi and chi
        assert steady_state(1.0, 20.0, P) == pytest.approx(58.3, abs=1e-12)

    def test_no_load_hand_value(self):
        p = IecParams(psi=5.0, delta_t_or_k=38.3, chi=1.0, k11=1.0, tau_o_min=180.0,
                      tau_w_min=10.0)
        assert steady_state(0.0, 20.0, p) == pytest.approx(20.0 + 38.3 / 6.0, abs=1e-12)

    def test_large_psi_limit_at_no_load(self):
        p = IecParams(psi=1e9, delta_t_or_k=38.3, chi=0.8, k11=1.0, tau_o_min=180.0,
                      tau_w_min=10.0)
        assert steady_state(0.0, 20.0, p) == pytest.approx(20.0, abs=0.01)

    def test_negative_load_rejected(self):
        with pytest.raises(ValueError, match="K"):
            steady_state(-0.1, 20.0, P)


class TestStep:
    def test_steady_state_is_fixed_point(self):
        ss = steady_state(0.8, 15.0, P)
        assert abs(step(ss, 0.8, 15.0, 5.0, P) - ss) <= 1e-9

    def test_hand_update(self):
        # K=1 puts the drive at delta_t_or; starting at ambient, one minute
        # over k11*tau_o = 100 min moves 1% of the way
        p = IecParams(psi=5.0, delta_t_or_k=38.3, chi=0.8, k11=1.0, tau_o_min=100.0,
                      tau_w_min=10.0)
        got = step(20.0, 1.0, 20.0, 1.0, p)
        assert got == pytest.approx(20.0 + 0.01 * 38.3, abs=1e-12)

    def test_zero_dt_is_identity(self):
        assert step(47.3, 0.9, 12.0, 0.0, P) == 47.3

    def test_negative_dt_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            step(47.3, 0.9, 12.0, -1.0, P)


class TestCheckTimestep:
    def test_boundary_accepted(self):
        assert check_timestep(5.0, P) is True

    def test_boundary_exceeded(self):
        assert check_timestep(6.0, P) is False

    def test_small_step(self):
        assert check_timestep(0.5, P) is True

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(ValueError):
            check_timestep(0.0, P)


def closed_form(t_min, t0, t_ss, p):
    return t_ss + (t0 - t_ss) * np.exp(-t_min / (p.k11 * p.tau_o_min))


class TestSimulate:
    def test_constant_at_steady_state_stays(self):
        ss = steady_state(0.7, 10.0, P)
        K = const_series(0.7, 200)
        Ta = const_series(10.0, 200)
        traj = simulate(K, Ta, ss, 5.0, P)
        assert np.abs(traj.values - ss).max() <= 1e-9

    def run_vs_closed_form(self, dt_min):
        t_ss = steady_state(1.0, 20.0, P)
        t0 = t_ss + 4.0
        horizon_min = 10.0 * P.k11 * P.tau_o_min
        n = int(round(horizon_min / dt_min)) + 1
        dt_s = int(round(dt_min * 60))
        K = const_series(1.0, n, dt_s)
        Ta = const_series(20.0, n, dt_s)
        traj = simulate(K, Ta, t0, dt_min, P)
        exact = closed_form(K.timestamps / 60.0, t0, t_ss, P)
        return float(np.abs(traj.values - exact).max())

    def test_matches_closed_form(self):
        assert self.run_vs_closed_form(P.tau_o_min / 100.0) <= 0.01

    def test_first_order_convergence(self):
        e1 = self.run_vs_closed_form(P.tau_o_min / 100.0)
        e2 = self.run_vs_closed_form(P.tau_o_min / 200.0)
        assert 1.7 <= e1 / e2 <= 2.3

    def test_substepping_matches_fine_cadence_run(self):
        rng = np.random.default_rng(5)
        n = 80
        ts5 = np.arange(n, dtype=np.int64) * 300
        K5 = TimeSeries(ts5, rng.uniform(0.2, 1.1, n), 300)
        Ta5 = TimeSeries(ts5, rng.uniform(5.0, 20.0, n), 300)
        sub = simulate(K5, Ta5, 40.0, 2.5, P)  # two sub-steps per interval

        # same trajectory on an explicit 2.5-minute grid with held inputs
        ts_f = np.arange(2 * (n - 1) + 1, dtype=np.int64) * 150
        K_f = TimeSeries(ts_f, np.repeat(K5.values, 2)[:len(ts_f)], 150)
        Ta_f = TimeSeries(ts_f, np.repeat(Ta5.values, 2)[:len(ts_f)], 150)
        fine = simulate(K_f, Ta_f, 40.0, 2.5, P)
        assert np.array_equal(sub.values, fine.values[::2])

    def test_ambient_shift_equivariance(self):
        rng = np.random.default_rng(0)
        n = 300
        ts = np.arange(n, dtype=np.int64) * 300
        K = TimeSeries(ts, rng.uniform(0.2, 1.2, n), 300)
        Ta = TimeSeries(ts, rng.uniform(0.0, 20.0, n), 300)
        c = 7.5
        base = simulate(K, Ta, 30.0, 5.0, P)
        shifted = simulate(K, TimeSeries(ts, Ta.values + c, 300), 30.0 + c, 5.0, P)
        assert np.abs(shifted.values - (base.values + c)).max() <= 1e-9

    def test_monotone_relaxation(self):
        # inside the explicit-Euler stability region the distance to steady
        # state never grows under constant inputs
        t_ss = steady_state(0.5, 10.0, P)
        n = 500
        K = const_series(0.5, n)
        Ta = const_series(10.0, n)
        for t0 in (t_ss + 25.0, t_ss - 25.0):
            traj = simulate(K, Ta, t0, 5.0, P)
            gap = np.abs(traj.values - t_ss)
            assert (np.diff(gap) <= 1e-12).all()

    def test_misaligned_inputs_rejected(self):
        K = const_series(1.0, 10)
        Ta = TimeSeries(K.timestamps + 300, np.full(10, 20.0), 300)
        with pytest.raises(ValueError, match="aligned"):
            simulate(K, Ta, 30.0, 5.0, P)

    def test_step_rule_enforced_with_override(self):
        K = const_series(1.0, 10)
        Ta = const_series(20.0, 10)
        tight = IecParams(psi=5.0, delta_t_or_k=38.3, chi=0.8, k11=1.0,
                          tau_o_min=180.0, tau_w_min=4.0)
        with pytest.raises(ValueError, match="tau_w"):
            simulate(K, Ta, 30.0, 5.0, tight)
        traj = simulate(K, Ta, 30.0, 5.0, tight, enforce_timestep=False)
        assert len(traj) == 10

    def test_dt_must_divide_series_step(self):
        K = const_series(1.0, 10)
        Ta = const_series(20.0, 10)
        with pytest.raises(ValueError, match="divide"):
            simulate(K, Ta, 30.0, 3.0, P)


class TestParams:
    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError, match="psi"):
            IecParams(psi=0.0, delta_t_or_k=38.3, chi=0.8, k11=1.0, tau_o_min=180.0,
                      tau_w_min=10.0)

    def test_chi_range(self):
        with pytest.raises(ValueError, match="chi"):
            IecParams(psi=5.0, delta_t_or_k=38.3, chi=2.5, k11=1.0, tau_o_min=180.0,
                      tau_w_min=10.0)

    def test_json_round_trip(self, tmp_path):
        import json
        path = tmp_path / "iec.json"
        path.write_text(json.dumps({"psi": 5.0, "delta_t_or_k": 38.3, "chi": 0.8,
                                    "k11": 1.0, "tau_o_min": 180.0, "tau_w_min": 10.0,
                                    "comment": "illustrative"}))
        assert IecParams.from_json(path) == P

    def test_json_missing_key(self, tmp_path):
        path = tmp_path / "iec.json"
        path.write_text('{"psi": 5.0}')
        with pytest.raises(ValueError, match="missing"):
            IecParams.from_json(path)
