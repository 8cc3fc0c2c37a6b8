import json

import numpy as np
import pytest

from hardcore.dataset import compute_limits
from hardcore.features import FeatureBatch, build_features, compute_norms
from hardcore.magloss import shoelace_sum as scalar_shoelace
from hardcore.model import (
    AREA_BASE,
    AREA_SPAN,
    HardcoreConfig,
    HardcoreModel,
    ModelError,
    load_model,
    parameter_count,
    save_model,
)

from conftest import M, sine_dataset, sine_record


def make_model(dataset=None, config=None, seed=0):
    dataset = dataset or sine_dataset(n=10, seed=21)
    b_lim, h_lim = compute_limits(dataset.records)
    norms = compute_norms(dataset.records, b_lim, h_lim)
    model = HardcoreModel(
        config or HardcoreConfig(), norms, dataset.material_id, seed=seed
    )
    return model, dataset


def batch_for(model, dataset, records=None):
    records = list(records if records is not None else dataset.records)
    bundles = [build_features(r, model.norms) for r in records]
    return FeatureBatch(bundles, records)


class TestParameterCount:
    def test_final_topology_is_1755(self):
        assert parameter_count(HardcoreConfig()) == 1755

    def test_per_layer_breakdown(self):
        # independent hand count: conv v + g + bias, linear w + bias
        model, _ = make_model()
        sizes = {name: t.data.size for name, t in model.parameters()}
        assert sizes["conv0.v"] + sizes["conv0.g"] + sizes["conv0.bias"] == 564
        assert sizes["scalar_mlp.w"] + sizes["scalar_mlp.bias"] == 132
        assert sizes["conv1.v"] + sizes["conv1.g"] + sizes["conv1.bias"] == 880
        assert sizes["conv2.v"] + sizes["conv2.g"] + sizes["conv2.bias"] == 74
        assert sizes["p_mlp0.w"] + sizes["p_mlp0.bias"] == 96
        assert sizes["p_mlp1.w"] + sizes["p_mlp1.bias"] == 9
        assert sum(sizes.values()) == 1755

    def test_without_second_conv_layer(self):
        config = HardcoreConfig(cnn_channels=(12, 1))
        assert parameter_count(config) == 564 + 132 + (12 * 9 + 1 + 1) + 96 + 9
        assert parameter_count(config) == 911

    def test_minimal_single_kernel(self):
        for c_in in (1, 3, 5):
            config = HardcoreConfig(
                cnn_channels=(1,), kernel_size=1, dilation=1,
                scalar_mlp_width=None, p_mlp_hidden=None,
                series_channels=c_in,
            )
            assert parameter_count(config) == c_in + 2

    def test_matches_enumerated_tensors(self):
        for config in (
            HardcoreConfig(),
            HardcoreConfig(cnn_channels=(12, 1)),
            HardcoreConfig(cnn_channels=(4, 2, 1), kernel_size=3, dilation=2,
                           scalar_mlp_width=3),
            HardcoreConfig(scalar_mlp_width=None),
            HardcoreConfig(p_mlp_hidden=None),
        ):
            model, _ = make_model(config=config)
            assert model.n_parameters() == parameter_count(config)

    def test_invalid_configs_rejected(self):
        with pytest.raises(ModelError, match="1 channel"):
            HardcoreConfig(cnn_channels=(12, 8))
        with pytest.raises(ModelError, match="odd"):
            HardcoreConfig(kernel_size=8)
        with pytest.raises(ModelError, match="bias-merge"):
            HardcoreConfig(scalar_mlp_width=13)


class TestForward:
    def test_zero_parameters_leave_residual_path(self):
        model, dataset = make_model()
        for name, t in model.parameters():
            if name.endswith(".v"):
                continue  # directions must keep a nonzero norm
            t.data = np.zeros_like(t.data)
        batch = batch_for(model, dataset)
        h_hat_n, _, p_hat = model.predict(batch)
        b_n = batch.series[:, 1, :]
        expected = b_n - b_n.mean(axis=1, keepdims=True)
        assert np.allclose(h_hat_n, expected, atol=1e-15)

    def test_zeroed_p_mlp_gives_exactly_half_factor(self):
        # only the p-predictor zeroed: s = tanh(0) = 0, so the area factor
        # is exactly 1/2 while the h path stays non-degenerate
        model, dataset = make_model(seed=9)
        for w, b in model.p_mlp:
            w.data = np.zeros_like(w.data)
            b.data = np.zeros_like(b.data)
        batch = batch_for(model, dataset)
        _, h_hat, p_hat = model.predict(batch)
        b_raw = batch.series[:, 1, :] * batch.profile_scale[:, None]
        for n in range(len(batch)):
            trapezoid = scalar_shoelace(b_raw[n], h_hat[n])
            assert p_hat[n] == pytest.approx(
                batch.f[n] * 0.5 * trapezoid, rel=1e-12
            )

    def test_shift_invariance_of_p_and_equivariance_of_h(self):
        model, dataset = make_model()
        record = dataset.records[0]
        batch = batch_for(model, dataset, records=[record])
        _, h_base, p_base = model.predict(batch)
        rng = np.random.default_rng(3)
        for shift in rng.integers(1, M, size=4):
            shifted = type(record)(
                b=np.roll(record.b, shift),
                h=np.roll(record.h, shift),
                f=record.f, T=record.T, p=record.p,
                record_id=f"{record.record_id}+{shift}",
            )
            sbatch = batch_for(model, dataset, records=[shifted])
            _, h_shift, p_shift = model.predict(sbatch)
            assert p_shift[0] == pytest.approx(p_base[0], rel=1e-9)
            assert np.allclose(
                h_shift[0], np.roll(h_base[0], shift), atol=1e-9
            )

    def test_p_hat_consistent_with_area_module(self):
        # cross-module oracle: recompute the factor and trapezoid sum by hand
        model, dataset = make_model(seed=5)
        batch = batch_for(model, dataset)
        _, h_hat, p_hat = model.predict(batch)

        w1, b1 = model.p_mlp[0]
        w2, b2 = model.p_mlp[1]
        hidden = np.tanh(batch.scalars @ w1.data.T + b1.data)
        s = np.tanh(hidden @ w2.data.T + b2.data)[:, 0]
        factor = AREA_BASE + AREA_SPAN * s

        b_raw = batch.series[:, 1, :] * batch.profile_scale[:, None]
        for n in range(len(batch)):
            trapezoid = scalar_shoelace(b_raw[n], h_hat[n])
            assert p_hat[n] == pytest.approx(
                batch.f[n] * factor[n] * trapezoid, rel=1e-12
            )

    def test_h_hat_n_has_zero_time_mean(self):
        for seed in range(5):
            dataset = sine_dataset(n=20, seed=seed)
            model, _ = make_model(dataset=dataset, seed=seed)
            batch = batch_for(model, dataset)
            h_hat_n, _, _ = model.predict(batch)
            assert np.abs(h_hat_n.mean(axis=1)).max() < 1e-13

    def test_area_factor_strictly_inside_its_band(self):
        for seed in range(5):
            model, dataset = make_model(seed=seed)
            batch = batch_for(model, dataset)
            w1, b1 = model.p_mlp[0]
            w2, b2 = model.p_mlp[1]
            hidden = np.tanh(batch.scalars @ w1.data.T + b1.data)
            s = np.tanh(hidden @ w2.data.T + b2.data)[:, 0]
            factor = AREA_BASE + AREA_SPAN * s
            assert np.all(factor > 0.4) and np.all(factor < 0.6)

    def test_p_hat_monotone_in_final_bias(self):
        # with the h path frozen, p_hat is affine in s, and s is monotone in
        # the p-MLP output bias; sweep it on a positive-area record
        model, dataset = make_model()
        record = dataset.records[0]
        batch = batch_for(model, dataset, records=[record])
        bias = model.p_mlp[-1][1]
        values = []
        for offset in np.linspace(-2.0, 2.0, 9):
            bias.data = np.array([offset])
            _, h_hat, p_hat = model.predict(batch)
            area = scalar_shoelace(
                batch.series[0, 1] * batch.profile_scale[0], h_hat[0]
            )
            values.append((p_hat[0], area))
        areas = {round(a, 9) for _, a in values}
        assert len(areas) == 1  # h path unaffected by the sweep
        p_values = [p for p, _ in values]
        area = values[0][1]
        assert area != 0.0
        deltas = np.diff(p_values) * np.sign(area)
        assert np.all(deltas > 0)

    def test_batch_with_wrong_channel_count_rejected(self):
        model, dataset = make_model()
        batch = batch_for(model, dataset)
        batch.series = batch.series[:, :4, :]
        with pytest.raises(ModelError, match="series channels"):
            model.forward(batch)


class TestSerialization:
    def test_round_trip_is_bit_identical(self, tmp_path):
        model, dataset = make_model(seed=11)
        path = tmp_path / f"{dataset.material_id}.hardcore.json"
        save_model(model, path)
        reloaded = load_model(path)

        assert reloaded.material_id == model.material_id
        assert reloaded.config == model.config
        for (name_a, t_a), (name_b, t_b) in zip(
            model.parameters(), reloaded.parameters()
        ):
            assert name_a == name_b
            assert np.array_equal(t_a.data, t_b.data)

        batch = batch_for(model, dataset)
        _, _, p_original = model.predict(batch)
        _, _, p_reloaded = reloaded.predict(batch)
        assert np.array_equal(p_original, p_reloaded)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.hardcore.json"
        path.write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(ModelError, match="format marker"):
            load_model(path)

    def test_truncated_file_rejected(self, tmp_path):
        model, _ = make_model()
        path = tmp_path / "trunc.hardcore.json"
        save_model(model, path)
        raw = path.read_text()
        path.write_text(raw[: len(raw) // 2])
        with pytest.raises(ModelError, match="not a valid model file"):
            load_model(path)

    def test_version_mismatch_rejected(self, tmp_path):
        model, _ = make_model()
        path = tmp_path / "v999.hardcore.json"
        save_model(model, path)
        payload = json.loads(path.read_text())
        payload["format_version"] = 999
        path.write_text(json.dumps(payload))
        with pytest.raises(ModelError, match="version"):
            load_model(path)

    def test_missing_parameter_block_rejected(self, tmp_path):
        model, _ = make_model()
        path = tmp_path / "missing.hardcore.json"
        save_model(model, path)
        payload = json.loads(path.read_text())
        del payload["parameters"]["conv1.g"]
        path.write_text(json.dumps(payload))
        with pytest.raises(ModelError, match="conv1.g"):
            load_model(path)

    def test_default_model_file_under_64kb(self, tmp_path):
        model, _ = make_model()
        path = tmp_path / "size.hardcore.json"
        save_model(model, path)
        assert path.stat().st_size < 64 * 1024
