import numpy as np
import pytest

from toilcast.autodiff import Tensor, absolute, mean
from toilcast.models import (Mlp, MlpConfig, Tcn, TcnConfig, Tide, TideConfig,
                             TrainedModel, build_model, config_from_dict,
                             enforce_non_crossing, load_checkpoint, receptive_field,
                             save_checkpoint)
from toilcast.series import AffineScaler
from util import max_rel_err

RNG = np.random.default_rng(2024)


class TestMlp:
    def test_zeroed_network_returns_head_bias(self):
        cfg = MlpConfig(n_layers=2, n_neurons=4, lookback=3, n_channels=2)
        m = Mlp(cfg)
        params = m.init_params(0)
        for t in params.values():
            t.data = np.zeros_like(t.data)
        params["head.b"].data = np.array([3.75])
        out = m.forward(params, RNG.normal(size=(5, 6)))
        assert np.array_equal(out.data, np.full((5, 1), 3.75))

    def test_paper_best_configuration_runs(self):
        # 8 layers, 128 neurons, 4-hour look-back
        cfg = MlpConfig(n_layers=8, n_neurons=128, lookback=48, n_channels=3)
        m = Mlp(cfg)
        out = m.forward(m.init_params(1), RNG.normal(size=(2, 144)))
        assert out.shape == (2, 1) and np.isfinite(out.data).all()

    def test_quantile_head_output_length(self):
        cfg = MlpConfig(n_layers=2, n_neurons=8, lookback=4, n_channels=3,
                        quantiles=(0.01, 0.5, 0.99))
        m = Mlp(cfg)
        out = m.forward(m.init_params(0), RNG.normal(size=(1, 12)))
        assert out.shape == (1, 3)

    def test_shape_mismatch_rejected(self):
        cfg = MlpConfig(n_layers=1, n_neurons=4, lookback=3, n_channels=2)
        m = Mlp(cfg)
        with pytest.raises(ValueError, match="matmul"):
            m.forward(m.init_params(0), RNG.normal(size=(1, 5)))


class TestReceptiveField:
    def test_kernel2_five_blocks(self):
        assert receptive_field(TcnConfig(kernel=2, n_blocks=5, lookback=48)) == 63

    def test_kernel1_pointwise(self):
        assert receptive_field(TcnConfig(kernel=1, n_blocks=7, lookback=1)) == 1

    def test_kernel4_two_blocks(self):
        assert receptive_field(TcnConfig(kernel=4, n_blocks=2, lookback=19)) == 19

    def test_kernel2_one_block(self):
        assert receptive_field(TcnConfig(kernel=2, n_blocks=1, lookback=3)) == 3


class TestTcn:
    def test_auto_blocks_cover_lookback(self):
        for L in (24, 48, 96):
            t = Tcn(TcnConfig(kernel=2, n_filters=4, lookback=L))
            assert receptive_field(TcnConfig(kernel=2, n_blocks=t.n_blocks,
                                             lookback=L)) >= L

    def test_explicit_blocks_too_small_rejected(self):
        with pytest.raises(ValueError, match="receptive field"):
            Tcn(TcnConfig(kernel=2, n_blocks=2, lookback=48))

    def test_oldest_sample_reaches_output(self):
        cfg = TcnConfig(kernel=2, n_filters=8, lookback=48, n_channels=3)
        t = Tcn(cfg)
        params = t.init_params(3)
        x = RNG.normal(size=(1, 144))
        base = t.forward(params, x).data
        bumped = x.copy()
        bumped[0, 0] += 1.0  # oldest timestep, first channel
        assert not np.array_equal(t.forward(params, bumped).data, base)

    def test_causality_bitwise(self):
        cfg = TcnConfig(kernel=2, n_filters=4, lookback=12, n_channels=2)
        t = Tcn(cfg)
        params = t.init_params(5)
        x = RNG.normal(size=(1, 24))
        base = t.forward_sequence(params, x).data
        for step in (3, 7, 11):
            bumped = x.reshape(1, 12, 2).copy()
            bumped[0, step, :] += 5.0
            out = t.forward_sequence(params, bumped.reshape(1, 24)).data
            assert np.array_equal(out[0, :step], base[0, :step])
            assert not np.array_equal(out[0, step:], base[0, step:])

    def test_paper_best_configuration_runs(self):
        # kernel 2, 16 filters, 4-hour look-back
        cfg = TcnConfig(kernel=2, n_filters=16, lookback=48, n_channels=3)
        t = Tcn(cfg)
        out = t.forward(t.init_params(1), RNG.normal(size=(2, 144)))
        assert out.shape == (2, 1) and np.isfinite(out.data).all()


class TestTide:
    def test_shape_arithmetic(self):
        # L=48, H=1, r=2, r-tilde=4, p=8: decoder vector has 8 entries,
        # reshaped 8x1; one output per target
        cfg = TideConfig(temporal_width=4, decoder_output_dim=8, lookback=48,
                         horizon=1, n_targets=1, n_covariates=2)
        m = Tide(cfg)
        params = m.init_params(0)
        assert params["decoder1.dense2.w"].shape[1] == 8
        out = m.forward(params, RNG.normal(size=(2, 144)), RNG.normal(size=(2, 2)))
        assert out.shape == (2, 1)

    def test_residual_isolation(self):
        cfg = TideConfig(temporal_width=4, decoder_output_dim=8,
                         temporal_decoder_hidden=8, lookback=48, horizon=1,
                         n_targets=1, n_covariates=2)
        m = Tide(cfg)
        params = m.init_params(7)
        for name, t in params.items():
            if not name.startswith("global"):
                t.data = np.zeros_like(t.data)
        x = RNG.normal(size=(3, 144))
        fut = RNG.normal(size=(3, 2))
        lookback_only = x.reshape(3, 48, 3)[:, :, 0]
        expect = lookback_only @ params["global.w"].data + params["global.b"].data
        got = m.forward(params, x, fut).data
        assert np.abs(got - expect).max() <= 1e-12

    def test_multi_step_horizon_shapes(self):
        cfg = TideConfig(temporal_width=2, decoder_output_dim=3, lookback=6,
                         horizon=4, n_targets=2, n_covariates=2,
                         quantiles=(0.01, 0.5, 0.99))
        m = Tide(cfg)
        out = m.forward(m.init_params(0), RNG.normal(size=(2, 24)),
                        RNG.normal(size=(2, 8)))
        assert out.shape == (2, 4 * 2 * 3)

    def test_short_future_covariates_rejected(self):
        cfg = TideConfig(lookback=6, horizon=2, n_targets=1, n_covariates=2)
        m = Tide(cfg)
        with pytest.raises(ValueError, match="covariates"):
            m.forward(m.init_params(0), RNG.normal(size=(1, 18)),
                      RNG.normal(size=(1, 2)))  # needs 2 steps * 2 covariates


class TestNonCrossing:
    def test_sorted_unchanged(self):
        q = np.array([40.0, 45.0, 50.0])
        assert np.array_equal(enforce_non_crossing(q), q)

    def test_crossed_sorted(self):
        assert np.array_equal(enforce_non_crossing(np.array([45.0, 40.0, 50.0])),
                              [40.0, 45.0, 50.0])

    def test_degenerate_width_zero(self):
        q = np.array([42.0, 42.0, 42.0])
        out = enforce_non_crossing(q)
        assert np.array_equal(out, q) and out[-1] - out[0] == 0.0

    def test_idempotent(self):
        q = RNG.normal(size=(5, 2, 3))
        once = enforce_non_crossing(q)
        assert np.array_equal(enforce_non_crossing(once), once)


class TestShapeContract:
    @pytest.mark.parametrize("quantiles", [(), (0.01, 0.5, 0.99)])
    def test_all_families_emit_h_t_q(self, quantiles):
        L, H, T = 6, 2, 2
        n_q = max(1, len(quantiles))
        x = RNG.normal(size=(3, L * 4))
        fut = RNG.normal(size=(3, H * 2))
        mlp = Mlp(MlpConfig(n_layers=1, n_neurons=4, lookback=L, n_channels=4,
                            n_targets=T, horizon=H, quantiles=quantiles))
        tcn = Tcn(TcnConfig(kernel=2, n_filters=3, lookback=L, n_channels=4,
                            n_targets=T, horizon=H, quantiles=quantiles))
        tide = Tide(TideConfig(temporal_width=2, decoder_output_dim=3, lookback=L,
                               horizon=H, n_targets=T, n_covariates=2,
                               quantiles=quantiles))
        assert mlp.forward(mlp.init_params(0), x).shape == (3, H * T * n_q)
        assert tcn.forward(tcn.init_params(0), x).shape == (3, H * T * n_q)
        assert tide.forward(tide.init_params(0), x, fut).shape == (3, H * T * n_q)


class TestFullModelGradients:
    def test_mlp(self):
        rng = np.random.default_rng(211)
        cfg = MlpConfig(n_layers=2, n_neurons=4, lookback=4, n_channels=2)
        m = Mlp(cfg)
        params = m.init_params(11)
        x = rng.normal(size=(3, 8))
        y = rng.normal(size=(3, 1))
        loss = lambda: mean(absolute(m.forward(params, x) - Tensor(y)))
        assert max_rel_err(loss, params) <= 1e-4

    def test_tcn(self):
        rng = np.random.default_rng(212)
        cfg = TcnConfig(kernel=2, n_filters=3, lookback=6, n_channels=2)
        m = Tcn(cfg)
        params = m.init_params(12)
        x = rng.normal(size=(2, 12))
        y = rng.normal(size=(2, 1))
        loss = lambda: mean(absolute(m.forward(params, x) - Tensor(y)))
        assert max_rel_err(loss, params) <= 1e-4

    def test_tide(self):
        rng = np.random.default_rng(213)
        cfg = TideConfig(temporal_width=2, decoder_output_dim=3,
                         temporal_decoder_hidden=4, hidden_size=5, lookback=5,
                         horizon=2, n_targets=1, n_covariates=2)
        m = Tide(cfg)
        params = m.init_params(13)
        x = rng.normal(size=(2, 15))
        fut = rng.normal(size=(2, 4))
        y = rng.normal(size=(2, 2))
        loss = lambda: mean(absolute(m.forward(params, x, fut) - Tensor(y)))
        assert max_rel_err(loss, params) <= 1e-4


def make_trained(quantiles=(), family="ann"):
    scaler = AffineScaler({"top_oil": (0.01, 0.0), "ambient": (0.01, 0.0),
                           "load_factor": (1.0, 0.0), "temp_rise": (0.01, 0.0)})
    if family == "ann":
        cfg = MlpConfig(n_layers=1, n_neurons=4, lookback=4, n_channels=3,
                        quantiles=quantiles)
    else:
        cfg = TideConfig(temporal_width=2, decoder_output_dim=3, lookback=4,
                         n_covariates=2, quantiles=quantiles)
    model = build_model(family, cfg)
    return TrainedModel(family, cfg, model.init_params(5),
                        ("top_oil", "ambient", "load_factor"), ("top_oil",),
                        scaler, seed=5)


class TestTrainedModel:
    def test_predict_window_shape_and_units(self):
        tm = make_trained()
        window = RNG.normal(40.0, 5.0, size=(4, 3))
        out = tm.predict_window(window, RNG.normal(size=(1, 2)))
        assert out.shape == (1, 1, 1) and np.isfinite(out).all()

    def test_predict_enforces_non_crossing(self):
        tm = make_trained(quantiles=(0.01, 0.5, 0.99))
        window = RNG.normal(40.0, 5.0, size=(4, 3))
        out = tm.predict_window(window, RNG.normal(size=(1, 2)))
        assert out.shape == (1, 1, 3)
        assert (np.diff(out[0, 0]) >= 0).all()

    def test_tide_needs_future(self):
        tm = make_trained(family="tide")
        with pytest.raises(ValueError, match="covariates"):
            tm.predict_window(RNG.normal(size=(4, 3)), None)

    def test_wrong_window_shape_rejected(self):
        tm = make_trained()
        with pytest.raises(ValueError, match="window shape"):
            tm.predict_window(RNG.normal(size=(3, 3)))

    def test_checkpoint_round_trip(self, tmp_path):
        tm = make_trained(quantiles=(0.01, 0.5, 0.99))
        path = tmp_path / "model.checkpoint.json"
        save_checkpoint(path, tm)
        back = load_checkpoint(path)
        assert back.family == tm.family
        assert back.config == tm.config
        assert back.config_hash == tm.config_hash
        assert back.scaler == tm.scaler
        assert set(back.params) == set(tm.params)
        for name in tm.params:
            assert np.array_equal(back.params[name].data, tm.params[name].data)
        window = RNG.normal(40.0, 5.0, size=(4, 3))
        assert np.array_equal(back.predict_window(window), tm.predict_window(window))

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        tm = make_trained()
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(p1, tm)
        save_checkpoint(p2, tm)
        assert p1.read_bytes() == p2.read_bytes()


class TestConfigParsing:
    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="n_layer"):
            config_from_dict("ann", {"n_layer": 3})

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError, match="family"):
            config_from_dict("lstm", {})

    def test_quantile_list_coerced(self):
        cfg = config_from_dict("ann", {"quantiles": [0.01, 0.5, 0.99]})
        assert cfg.quantiles == (0.01, 0.5, 0.99)
