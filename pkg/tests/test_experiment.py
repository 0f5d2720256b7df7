import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2xest import dataset as D
from v2xest import experiment as E
from v2xest import phy
from v2xest.estimators import default_config, make_estimator, scale_epochs


def curve(name="x", regime="mixed-snr", snr=(0.0, 10.0), errors=(10, 1), bits=(1000, 1000)):
    return E.BerCurve(name, regime, tuple(snr), tuple(errors), tuple(bits), 3, "abc")


def test_compute_ber_cases(rng):
    bits = rng.integers(0, 2, 1000)
    assert E.compute_ber(bits, bits) == 0.0
    assert E.compute_ber(bits, 1 - bits) == 1.0
    with pytest.raises(ValueError):
        E.compute_ber(bits, bits[:-1])
    with pytest.raises(ValueError):
        E.compute_ber([], [])


def test_compute_ber_binomial(rng):
    n, p = 10 ** 6, 0.03
    tx = rng.integers(0, 2, n)
    rx = tx ^ (rng.random(n) < p)
    assert abs(E.compute_ber(tx, rx) - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_closed_form_high_snr_limit():
    # at high SNR only nearest-neighbour errors matter: ~ (3/4) Q(a)
    ber = E.qam16_awgn_ber(30.0)
    a = math.sqrt(2 * 1000 / 10)
    assert abs(ber / (0.75 * 0.5 * math.erfc(a / math.sqrt(2))) - 1) < 1e-6
    assert abs(E.qam16_awgn_ber(-100.0) - 0.5) < 1e-3


def test_awgn_curve_matches_closed_form_quick():
    c = E.awgn_ideal_curve((0.0, 6.0, 12.0), seed=1, min_errors=300)
    for s, b in zip(c.snr_db, c.ber):
        assert abs(b / E.qam16_awgn_ber(s) - 1) < 0.2


def test_equalize_and_demap_identity(rng):
    bits = phy.random_bits(rng)
    tx = phy.build_frame(bits)
    h = rng.standard_normal(tx.shape) + 1j * rng.standard_normal(tx.shape)
    np.testing.assert_array_equal(phy.equalize_and_demap(h * tx, h[:, 2:]), bits)


def test_equalize_phase_flip_rotates(rng):
    bits = phy.random_bits(rng)
    tx = phy.build_frame(bits)
    est = np.ones((52, 50), complex)
    k = phy.DATA_INDICES[7]
    est[k] = -1.0
    out = phy.equalize_and_demap(tx, est).reshape(50, 48, 4)
    pts = phy.map_bits(out.reshape(-1)).reshape(50, 48)
    np.testing.assert_allclose(pts[:, 7], -tx[k, 2:])
    np.testing.assert_array_equal(np.delete(out, 7, axis=1), np.delete(bits.reshape(50, 48, 4), 7, axis=1))


def test_equalize_matches_scalar_loop(rng):
    rx = rng.standard_normal((52, 52)) + 1j * rng.standard_normal((52, 52))
    est = rng.standard_normal((52, 50)) + 1j * rng.standard_normal((52, 50))
    ref = []
    for i in range(50):
        for k in phy.DATA_INDICES:
            y = rx[k, 2 + i] / est[k, i]
            lab = int(np.argmin(np.abs(y - phy.QAM16.points)))
            ref += [(lab >> 3) & 1, (lab >> 2) & 1, (lab >> 1) & 1, lab & 1]
    np.testing.assert_array_equal(phy.equalize_and_demap(rx, est), ref)


def test_equalize_shape_mismatch():
    with pytest.raises(ValueError):
        phy.equalize_and_demap(np.ones((52, 52)), np.ones((52, 49)))


def test_record_and_curve_validation():
    with pytest.raises(ValueError):
        E.ExperimentRecord("x", "r", 0.0, 0.1, 0, 0, "-")
    with pytest.raises(ValueError):
        E.ExperimentRecord("x", "r", 0.0, 1.5, 10, 0, "-")
    with pytest.raises(ValueError):
        curve(snr=(10.0, 0.0))
    with pytest.raises(ValueError):
        curve(bits=(0, 10))
    c = curve()
    assert c.ber == (0.01, 0.001) and c.at(10.0) == 0.001
    assert all(r.ber == r_err / r.bits for r, r_err in zip(c.records(), c.errors))


def test_delta_ber():
    m = curve(errors=(100, 20))
    assert E.delta_ber(m, m) == (0.0, 0.0)
    h = curve(errors=(110, 30))
    np.testing.assert_allclose(E.delta_ber(m, h), (0.01, 0.01))
    with pytest.raises(ValueError):
        E.delta_ber(m, curve(snr=(0.0, 5.0)))


def test_csv_round_trip():
    curves = [curve(), curve("y", "high-snr-40db", errors=(0, 0))]
    text = E.curves_to_csv(curves)
    assert text.splitlines()[0] == "estimator,regime,snr_db,ber,bits,seed,config_hash"
    assert len(text.splitlines()) == 5
    assert E.curves_from_csv(text) == curves
    assert E.curves_to_csv(E.curves_from_csv(text)) == text


@given(st.lists(st.integers(0, 10 ** 6), min_size=1, max_size=6), st.integers(1, 10 ** 7))
def test_csv_round_trip_property(errors, n):
    bits = tuple(max(n, e) for e in errors)
    c = E.BerCurve("m", "r", tuple(float(i) for i in range(len(errors))), tuple(errors), bits)
    assert E.curves_from_csv(E.curves_to_csv([c])) == [c]


def test_one_curve_two_points():
    assert len(E.curves_to_csv([curve()]).splitlines()) == 3


def test_csv_bad_header():
    with pytest.raises(ValueError):
        E.curves_from_csv("a,b\n1,2\n")


def test_delta_csv_header():
    text = E.delta_to_csv([(curve(), curve(errors=(5, 0)))])
    lines = text.splitlines()
    assert lines[0] == "# " + E.DELTA_CONVENTION
    assert lines[1] == "estimator,snr_db,ber_mixed,ber_high,delta_ber"
    assert len(lines) == 4
    with pytest.raises(ValueError):
        E.delta_to_csv([(curve(), curve(name="other"))])


def test_svg_zero_ber_floor():
    assert E.ber_floor(1000) == 0.0005
    svg = E.render_ber_svg([curve(errors=(3, 0))])
    assert svg.startswith("<svg") and 'fill="white" stroke' in svg
    assert E.render_ber_svg([curve()]) == E.render_ber_svg([curve()])
    assert E.render_delta_svg([(curve(), curve(errors=(5, 0)))]).startswith("<svg")


def test_emit_is_byte_stable(tmp_path):
    a = E.emit([curve()], tmp_path / "a")
    b = E.emit([curve()], tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


@pytest.fixture(scope="module")
def test_corpus():
    return D.generate_test_set((10.0, 30.0), 4, seed=21)


def test_ideal_baseline(test_corpus):
    ideal = E.ideal_baseline(test_corpus)
    assert ideal.snr_db == (10.0, 30.0)
    assert ideal.bits == (4 * phy.BITS_PER_FRAME,) * 2
    for method in ("LS-held", "DPA", "STA", "TRFI"):
        c, _ = E.score_estimator(method, test_corpus)
        for b_ideal, b, n in zip(ideal.ber, c.ber, c.bits):
            assert b_ideal <= b + 3 * math.sqrt(max(b, 1 / n) / n)


def test_ideal_noiseless_is_zero():
    corpus = D.generate_test_set((math.inf,), 2, seed=3)
    assert E.ideal_baseline(corpus).errors == (0,)


def test_evaluate_classical_includes_ls(test_corpus):
    ev = E.evaluate("DPA", test_corpus)
    assert [c.estimator for c in ev.curves] == ["LS-held", "DPA"]
    assert all(len(v) == len(test_corpus) for v in ev.frame_nmse.values())
    with pytest.raises(ValueError):
        E.evaluate("MMSE", test_corpus)


def test_evaluate_checkpoint(tmp_path, test_corpus):
    train = D.generate_frames(D.CorpusManifest(snr_levels_db=(30.0,), frames_per_level=(4,), seed=1))
    cfg = scale_epochs(default_config("sta-mlp"), 0.01)
    est = make_estimator(cfg)
    est.fit((train.rx[:3], train.channel[:3]), (train.rx[3:], train.channel[3:]))
    est.save(tmp_path / "m.ckpt")
    fresh = make_estimator(cfg)
    a = E.evaluate(fresh, test_corpus, checkpoint=tmp_path / "m.ckpt")
    b = E.evaluate(fresh, test_corpus, checkpoint=tmp_path / "m.ckpt")
    assert a.curves == b.curves
    assert a.curves[1].config_hash == cfg.config_hash()
    other = make_estimator(default_config("sta-mlp", "high-snr-40db"))
    with pytest.raises(ValueError):
        E.evaluate(other, test_corpus, checkpoint=tmp_path / "m.ckpt")


def test_score_is_chunk_independent(test_corpus, monkeypatch):
    full, _ = E.score_estimator("STA", test_corpus)
    monkeypatch.setattr(E, "EVAL_CHUNK", 3)
    chunked, _ = E.score_estimator("STA", test_corpus)
    assert full == chunked
