import math

import numpy as np
import pytest

from v2xest import channel, classical, phy
from v2xest.estimators import (NAMES, REGIMES, default_config, deinterleave, interleave,
                               make_estimator, mlp_refine, scale_epochs)
from v2xest.estimators.networks import build_network

# (name, regime) -> expected hyperparameters, written out by attribute
EXPECTED = {
    ("cnn-transformer", "mixed-snr"): dict(lr=0.001, n_layers=2, heads=2, hidden_dim=128, dropout=0.1,
                                           epochs=110, cnn_layers=2, kernel_size=3),
    ("cnn-transformer", "high-snr-40db"): dict(lr=0.001, n_layers=4, heads=4, hidden_dim=128, dropout=0.25,
                                               epochs=200, cnn_layers=4, kernel_size=3),
    ("tcn-dpa", "mixed-snr"): dict(lr=0.0006, n_layers=4, kernel_size=2, dropout=0.17, step_size=21,
                                   gamma=0.9, epochs=156),
    ("tcn-dpa", "high-snr-40db"): dict(lr=0.003, n_layers=4, kernel_size=2, dropout=0.01, step_size=17,
                                       gamma=0.8, epochs=100),
    ("sta-mlp", "mixed-snr"): dict(lr=0.001, hidden_sizes=(29, 27), epochs=133),
    ("sta-mlp", "high-snr-40db"): dict(lr=0.001, hidden_sizes=(15, 15, 15), epochs=300),
    ("trfi-mlp", "mixed-snr"): dict(lr=0.0004, hidden_sizes=(23, 29, 21), epochs=130),
    ("trfi-mlp", "high-snr-40db"): dict(lr=0.001, hidden_sizes=(15, 15, 15), epochs=160),
    ("lstm-dpa-ta", "mixed-snr"): dict(lr=0.004, hidden_dim=128, step_size=35, gamma=0.7, epochs=160),
    ("lstm-dpa-ta", "high-snr-40db"): dict(lr=0.01, hidden_dim=128, step_size=10, gamma=0.8, epochs=500),
}

OPT_FIELDS = {"lr": "learning_rate", "epochs": "max_epochs", "step_size": "step_size", "gamma": "gamma"}


def config_value(cfg, key):
    if key in OPT_FIELDS:
        return getattr(cfg.optimizer, OPT_FIELDS[key])
    return getattr(cfg, key)


@pytest.mark.parametrize("name,regime", sorted(EXPECTED))
def test_defaults_match_tuned_table(name, regime):
    cfg = default_config(name, regime)
    for key, want in EXPECTED[(name, regime)].items():
        assert config_value(cfg, key) == want, (name, regime, key)


@pytest.mark.parametrize("name", NAMES)
def test_optimizer_and_batch(name):
    cfg = default_config(name)
    if name == "cnn-transformer":
        assert cfg.optimizer.kind == "adamw" and cfg.optimizer.batch_size == 16
    else:
        assert cfg.optimizer.kind == "adam" and cfg.optimizer.batch_size == 128


def test_unknown_names_rejected():
    with pytest.raises(ValueError):
        default_config("gru")
    with pytest.raises(ValueError):
        default_config("sta-mlp", "low-snr")


def test_scale_epochs():
    cfg = scale_epochs(default_config("tcn-dpa"), 0.1)
    assert cfg.epochs == 16 and cfg.optimizer.step_size == 3
    assert scale_epochs(default_config("sta-mlp"), 1.0) == default_config("sta-mlp")


def test_config_dict_round_trip_and_hash():
    for name in NAMES:
        for regime in REGIMES:
            cfg = default_config(name, regime)
            back = type(cfg).from_dict(cfg.to_dict())
            assert back == cfg and back.config_hash() == cfg.config_hash()
    assert default_config("sta-mlp").config_hash() != default_config("sta-mlp", "high-snr-40db").config_hash()


def test_interleave_layout(rng):
    frame = rng.standard_normal((52, 50)) + 1j * rng.standard_normal((52, 50))
    mat = interleave(frame)
    assert mat.shape == (52, 100)
    np.testing.assert_array_equal(mat[:, 0::2], frame.real)
    np.testing.assert_array_equal(mat[:, 1::2], frame.imag)
    np.testing.assert_array_equal(deinterleave(mat), frame)
    np.testing.assert_array_equal(interleave(frame.real + 0j)[:, 1::2], 0.0)


def frames(n, snr_db, seed, doppler=550.0):
    rng = np.random.default_rng(seed)
    prof = channel.ChannelProfile(doppler_hz=doppler)
    tx = phy.build_frame(rng.integers(0, 2, size=(n, phy.BITS_PER_FRAME), dtype=np.uint8))
    h = np.stack([channel.generate_channel(prof, phy.N_SYM, rng) for _ in range(n)])
    return phy.apply_channel_and_noise(tx, h, phy.NoiseSpec(snr_db), rng), h


@pytest.mark.parametrize("name,method", [("sta-mlp", "STA"), ("trfi-mlp", "TRFI")])
def test_identity_mlp_reduces_to_backbone(name, method):
    rx, _ = frames(3, 15.0, 0)
    est = make_estimator(default_config(name))
    out = mlp_refine(name, rx, est).h_hat
    np.testing.assert_allclose(out, classical.run_classical(rx, method).h_hat, rtol=0, atol=1e-15)


def test_mlp_refine_name_mismatch():
    est = make_estimator(default_config("sta-mlp"))
    with pytest.raises(ValueError):
        mlp_refine("trfi-mlp", np.zeros((1, 52, 52), complex), est)


def test_untrained_estimate_rejected():
    rx, _ = frames(1, 20.0, 0)
    for name in NAMES:
        with pytest.raises(RuntimeError):
            make_estimator(default_config(name)).estimate(rx)


def test_tcn_receptive_field():
    net = build_network(default_config("tcn-dpa"), 0)
    assert net.receptive_field == 1 + sum((2 - 1) * d for d in (1, 2, 4, 8))
    assert net.receptive_field >= 16


def test_tcn_identity_is_dpa_fixed_point():
    rx, h = frames(2, math.inf, 1, doppler=0.0)
    est = make_estimator(default_config("tcn-dpa"))
    out = est.estimate(rx, allow_untrained=True).h_hat
    assert classical.nmse(out, h[..., 2:]) < 1e-24


def test_lstm_ta_identity_when_alpha_one():
    rx, _ = frames(2, 20.0, 2)
    rng = np.random.default_rng(0)
    est = make_estimator(default_config("lstm-dpa-ta").with_overrides(ta_alpha=1.0))
    for p in est.net.parameters():
        p.data = 0.01 * rng.standard_normal(p.shape)
    np.testing.assert_array_equal(est.estimate(rx, allow_untrained=True).h_hat, est.pre_ta(rx))


def test_lstm_state_carries_over():
    rx, h = frames(1, 25.0, 3)
    rng = np.random.default_rng(0)
    est = make_estimator(default_config("lstm-dpa-ta"))
    for p in est.net.parameters():
        p.data = 0.05 * rng.standard_normal(p.shape)
    base = est.net(est.training_pairs(rx, h)[0]).data
    x = est.training_pairs(rx, h)[0].copy()
    x[:, 0] += 0.5
    moved = est.net(x).data
    assert np.abs(moved[:, 49] - base[:, 49]).max() > 0


def test_cnn_transformer_shapes_and_short_frame():
    rx, h = frames(2, 20.0, 4)
    est = make_estimator(default_config("cnn-transformer"))
    x, y = est.training_pairs(rx, h)
    assert x.shape == (2, 52, 102) and y.shape == (2, 52, 100)
    out = est.estimate(rx, allow_untrained=True).h_hat
    np.testing.assert_array_equal(out, np.repeat(classical.preamble_estimate(rx)[..., None], 50, -1))
    with pytest.raises(ValueError):
        est.estimate(rx[..., :40], allow_untrained=True)


@pytest.mark.parametrize("name", NAMES)
def test_training_pair_shapes(name):
    rx, h = frames(2, 20.0, 5)
    x, y = make_estimator(default_config(name)).training_pairs(rx, h)
    assert len(x) == len(y) and np.all(np.isfinite(x)) and np.all(np.isfinite(y))


@pytest.mark.parametrize("name", ["sta-mlp", "trfi-mlp", "tcn-dpa", "lstm-dpa-ta"])
def test_estimates_are_causal_per_symbol(name):
    rx, _ = frames(1, 15.0, 6)
    rng = np.random.default_rng(1)
    est = make_estimator(default_config(name))
    for p in est.net.parameters():
        p.data = p.data + 0.01 * rng.standard_normal(p.shape)
    base = est.estimate(rx, allow_untrained=True).h_hat
    poked = rx.copy()
    poked[..., 30] += 2.0
    moved = est.estimate(poked, allow_untrained=True).h_hat
    np.testing.assert_array_equal(moved[..., :28], base[..., :28])


def test_checkpoint_round_trip(tmp_path):
    rx, h = frames(4, 30.0, 7)
    cfg = scale_epochs(default_config("sta-mlp"), 0.02)
    est = make_estimator(cfg, seed=3)
    est.fit((rx[:3], h[:3]), (rx[3:], h[3:]))
    est.save(tmp_path / "m.ckpt", {"note": "x"})
    back = type(est).load(tmp_path / "m.ckpt")
    assert back.config == cfg and back.trained
    np.testing.assert_array_equal(back.estimate(rx).h_hat, est.estimate(rx).h_hat)
    with pytest.raises(ValueError):
        type(est).load(tmp_path / "m.ckpt", config=default_config("sta-mlp"))


def test_training_reduces_nmse():
    rx, h = frames(6, 30.0, 8)
    est = make_estimator(scale_epochs(default_config("sta-mlp"), 0.05))
    before = est.training_nmse(rx, h)
    est.fit((rx[:5], h[:5]), (rx[5:], h[5:]))
    assert est.training_nmse(rx, h) < before


def test_transformer_only_is_permutation_equivariant():
    cfg = default_config("cnn-transformer").with_overrides(cnn_layers=0, positional=False, batch_norm=False)
    net = build_network(cfg, 0)
    rng = np.random.default_rng(0)
    for p in net.parameters():
        p.data = 0.1 * rng.standard_normal(p.shape)
    net.eval()
    x = rng.standard_normal((2, 52, 102))
    perm = rng.permutation(52)
    np.testing.assert_allclose(net(x[:, perm]).data, net(x).data[:, perm], atol=1e-12)
