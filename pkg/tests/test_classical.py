import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2xest import channel, classical, phy
from v2xest.classical import ReliabilitySets, StaParams


def not_a_knot_spline(x, y, xq):
    """Cubic spline from its second derivatives m, with third-derivative
    continuity at the second and second-to-last knots."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = len(x)
    h = np.diff(x)
    A = np.zeros((n, n))
    r = np.zeros(n)
    for i in range(1, n - 1):
        A[i, i - 1] = h[i - 1]
        A[i, i] = 2 * (h[i - 1] + h[i])
        A[i, i + 1] = h[i]
        r[i] = 6 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1])
    A[0, :3] = [h[1], -(h[0] + h[1]), h[0]]
    A[-1, -3:] = [h[-1], -(h[-2] + h[-1]), h[-2]]
    m = np.linalg.solve(A, r)
    out = []
    for q in xq:
        i = min(max(np.searchsorted(x, q) - 1, 0), n - 2)
        a, b = x[i], x[i + 1]
        t1, t2 = b - q, q - a
        hi = b - a
        out.append(m[i] * t1 ** 3 / (6 * hi) + m[i + 1] * t2 ** 3 / (6 * hi)
                   + (y[i] / hi - m[i] * hi / 6) * t1 + (y[i + 1] / hi - m[i + 1] * hi / 6) * t2)
    return np.array(out)


def static_frame(rng, snr_db=math.inf, flat=False):
    tx = phy.build_frame(phy.random_bits(rng))
    prof = channel.ChannelProfile(doppler_hz=0.0)
    if flat:
        prof = channel.ChannelProfile(tap_delays=(0.0,), tap_powers_db=(0.0,), doppler_hz=0.0)
    h_col = channel.generate_channel(prof, 1, rng)[:, 0]
    h = np.repeat(h_col[:, None], phy.N_SYM, axis=1)
    return phy.apply_channel_and_noise(tx, h, phy.NoiseSpec(snr_db), rng), h


def test_ls_arithmetic():
    assert classical.ls_initial(2 + 0j, 4 + 0j, 1.0) == 3 + 0j


def test_ls_rejects_zero_pilot():
    with pytest.raises(ValueError):
        classical.ls_initial(np.ones(2), np.ones(2), np.array([1.0, 0.0]))


def test_ls_matches_formula(rng):
    y1, y2, p = (rng.standard_normal(52) + 1j * rng.standard_normal(52) for _ in range(3))
    ref = np.array([(y1[k] + y2[k]) / (2 * p[k]) for k in range(52)])
    np.testing.assert_allclose(classical.ls_initial(y1, y2, p), ref, rtol=1e-14)


def test_ls_noiseless_is_exact(rng):
    rx, h = static_frame(rng)
    np.testing.assert_allclose(classical.preamble_estimate(rx), h[:, 0], rtol=1e-13)


def test_dpa_fixed_point(rng):
    h = rng.standard_normal(52) + 1j * rng.standard_normal(52)
    x = phy.map_bits(phy.random_bits(rng, 208))
    h_dpa, d = classical.dpa_step(h * x, h)
    np.testing.assert_array_equal(d, x)
    np.testing.assert_allclose(h_dpa, h, rtol=1e-13)


def test_dpa_reconstruction(rng):
    y = rng.standard_normal(5000) + 1j * rng.standard_normal(5000)
    hp = rng.standard_normal(5000) + 1j * rng.standard_normal(5000)
    h_dpa, d = classical.dpa_step(y, hp)
    np.testing.assert_allclose(h_dpa * d, y, rtol=1e-14, atol=0)


def test_dpa_single_subcarrier_brute_force(rng):
    for _ in range(200):
        y = complex(*rng.standard_normal(2))
        hp = complex(*rng.standard_normal(2))
        dists = [abs(y / hp - pt) for pt in phy.QAM16.points]
        best = phy.QAM16.points[int(np.argmin(dists))]
        h_dpa, d = classical.dpa_step(np.array([y]), np.array([hp]))
        assert d[0] == best
        assert abs(h_dpa[0] - y / best) < 1e-14


def test_dpa_zero_previous_estimate_is_finite():
    h_dpa, d = classical.dpa_step(np.array([1 + 1j]), np.array([0j]))
    assert np.all(np.isfinite(h_dpa)) and np.all(d != 0)


def test_sta_params_validation():
    with pytest.raises(ValueError):
        StaParams(alpha=0.5)
    with pytest.raises(ValueError):
        StaParams(beta=-1)
    w = StaParams(beta=2).weights
    np.testing.assert_allclose(w, 0.2)
    assert abs(w.sum() - 1) < 1e-15


def test_frequency_average_constant_and_ramp():
    c = np.full(52, 0.3 - 2j)
    np.testing.assert_allclose(classical.sta_frequency_average(c), c)
    ramp = np.arange(52) * (1 + 0.5j)
    out = classical.sta_frequency_average(ramp)
    np.testing.assert_allclose(out[2:-2], ramp[2:-2], atol=1e-12)


def test_frequency_average_oracle(rng):
    h = rng.standard_normal((3, 52)) + 1j * rng.standard_normal((3, 52))
    for beta in (0, 1, 2, 4):
        out = classical.sta_frequency_average(h, StaParams(beta=beta))
        for k in range(52):
            lo, hi = max(0, k - beta), min(52, k + beta + 1)
            np.testing.assert_allclose(out[:, k], h[:, lo:hi].mean(axis=1), rtol=1e-12)


def test_temporal_update_cases(rng):
    fd = rng.standard_normal(52) + 1j * rng.standard_normal(52)
    prev = rng.standard_normal(52) + 1j * rng.standard_normal(52)
    np.testing.assert_allclose(classical.sta_temporal_update(fd, prev, StaParams(alpha=1)), fd)
    np.testing.assert_allclose(classical.sta_temporal_update(prev, prev), prev)
    c, est = 1 + 1j, 0j
    for step in range(1, 6):
        est = classical.sta_temporal_update(c, est)
        assert abs(abs(c - est) - abs(c) / 2 ** step) < 1e-14


@given(st.floats(1.0, 10.0), st.complex_numbers(max_magnitude=10, allow_nan=False),
       st.complex_numbers(max_magnitude=10, allow_nan=False))
def test_temporal_update_is_convex(alpha, fd, prev):
    out = complex(classical.sta_temporal_update(fd, prev, StaParams(alpha=alpha)))
    assert abs(out - prev) + abs(fd - out) <= abs(fd - prev) + 1e-9


def test_reliability_identical_estimates(rng):
    y = rng.standard_normal(52) + 1j * rng.standard_normal(52)
    h = rng.standard_normal(52) + 1j * rng.standard_normal(52)
    sets = classical.trfi_reliability(y, h, h)
    assert sets.mask.all() and sets.unreliable.size == 0


def test_reliability_boundary_crossing():
    s = 1 / math.sqrt(10)
    y = np.full(52, (1 + 1j) * s, dtype=complex)
    h_prev = np.ones(52, dtype=complex)
    h_cur = h_prev.copy()
    # y / h_cur moves the real part across the zero threshold on subcarrier 7
    h_cur[7] = -1.0
    sets = classical.trfi_reliability(y, h_cur, h_prev)
    assert sets.unreliable.tolist() == [7]
    assert sets.reliable.size == 51


def test_interpolate_identity_when_all_reliable(rng):
    h = rng.standard_normal(52) + 1j * rng.standard_normal(52)
    out, flagged = classical.trfi_interpolate(h, ReliabilitySets(np.ones(52, bool)))
    np.testing.assert_array_equal(out, h)
    assert not flagged


def test_interpolate_recovers_cubic():
    k = np.arange(52.0)
    h = 1e-4 * (k - 20) ** 3 - 0.01 * k ** 2 + 0.3 * k + 1 + 1j * (2e-5 * k ** 3 - 0.5)
    mask = np.ones(52, bool)
    mask[[10, 11, 12, 30, 31, 32]] = False
    noisy = h.copy()
    noisy[~mask] = 99.0
    out, _ = classical.trfi_interpolate(noisy, ReliabilitySets(mask))
    np.testing.assert_array_equal(out[mask], noisy[mask])
    np.testing.assert_allclose(out, h, atol=1e-9, rtol=0)


def test_interpolate_matches_independent_spline(rng):
    for _ in range(20):
        h = rng.standard_normal(52) + 1j * rng.standard_normal(52)
        mask = rng.random(52) < 0.7
        mask[[3, 40]] = True
        out, flagged = classical.trfi_interpolate(h, ReliabilitySets(mask))
        x = np.flatnonzero(mask)
        tq = np.clip(np.flatnonzero(~mask), x[0], x[-1])
        ref = not_a_knot_spline(x, h.real[x], tq) + 1j * not_a_knot_spline(x, h.imag[x], tq)
        np.testing.assert_allclose(out[~mask], ref, atol=1e-9)
        np.testing.assert_array_equal(out[mask], h[mask])
        assert not flagged


def test_interpolate_flat_extrapolation():
    h = np.arange(52.0) + 0j
    mask = np.zeros(52, bool)
    mask[10:20] = True
    out, _ = classical.trfi_interpolate(h, ReliabilitySets(mask))
    np.testing.assert_allclose(out[:10], 10.0)
    np.testing.assert_allclose(out[20:], 19.0)


def test_interpolate_too_few_anchors_flags():
    h = np.arange(52.0) + 0j
    mask = np.zeros(52, bool)
    mask[4] = True
    out, flagged = classical.trfi_interpolate(h, ReliabilitySets(mask))
    np.testing.assert_array_equal(out, h)
    assert flagged


def test_temporal_average(rng):
    seq = rng.standard_normal((52, 20)) + 1j * rng.standard_normal((52, 20))
    np.testing.assert_allclose(classical.temporal_average(seq, 1.0), seq)
    c = np.full((52, 7), 2 - 1j)
    np.testing.assert_allclose(classical.temporal_average(c, 2.0, c[:, 0]), c)
    h0 = rng.standard_normal(52) + 0j
    prev, ref = h0, []
    for i in range(20):
        prev = 0.5 * prev + 0.5 * seq[:, i]
        ref.append(prev)
    np.testing.assert_allclose(classical.temporal_average(seq, 2.0, h0), np.stack(ref, 1), rtol=1e-13)
    with pytest.raises(ValueError):
        classical.temporal_average(seq, 0.5)


@pytest.mark.parametrize("method", classical.METHODS)
def test_static_flat_noiseless_is_exact(rng, method):
    rx, h = static_frame(rng, flat=True)
    est = classical.run_classical(rx, method)
    assert est.h_hat.shape == (52, 50)
    assert classical.nmse(est.h_hat, h[:, 2:]) < 1e-12


@pytest.mark.parametrize("method", ["LS-held", "DPA", "TRFI"])
def test_static_selective_noiseless_is_exact(rng, method):
    rx, h = static_frame(rng)
    assert classical.nmse(classical.run_classical(rx, method).h_hat, h[:, 2:]) < 1e-12


def test_sta_smooths_a_selective_channel(rng):
    # the frequency window biases estimates of a selective channel
    rx, h = static_frame(rng)
    assert classical.nmse(classical.run_classical(rx, "STA").h_hat, h[:, 2:]) > 1e-8


def test_unknown_method_rejected(rng):
    rx, _ = static_frame(rng)
    with pytest.raises(ValueError):
        classical.run_classical(rx, "MMSE")


def test_ls_held_repeats_preamble(rng):
    rx, _ = static_frame(rng, 10.0)
    est = classical.run_classical(rx, "LS-held").h_hat
    np.testing.assert_array_equal(est, np.repeat(classical.preamble_estimate(rx)[:, None], 50, 1))


def test_dpa_tracks_better_than_ls_at_frame_end():
    prof = channel.ChannelProfile()
    rng = np.random.default_rng(5)
    worse = 0
    for _ in range(10):
        tx = phy.build_frame(phy.random_bits(rng))
        h = channel.generate_channel(prof, phy.N_SYM, rng)
        rx = phy.apply_channel_and_noise(tx, h, phy.NoiseSpec(math.inf), rng)
        dpa = classical.run_classical(rx, "DPA").h_hat[:, -1]
        ls = classical.run_classical(rx, "LS-held").h_hat[:, -1]
        worse += np.sum(np.abs(dpa - h[:, -1]) ** 2) > np.sum(np.abs(ls - h[:, -1]) ** 2)
    assert worse == 0


def test_sta_equals_manual_composition(rng):
    rx, _ = static_frame(rng, 15.0)
    est = classical.run_classical(rx, "STA").h_hat
    carried = classical.preamble_estimate(rx)
    for i in range(50):
        h_dpa, _ = classical.dpa_step(rx[:, 2 + i], carried)
        fd = classical.sta_frequency_average(h_dpa, StaParams(2, 2))
        carried = classical.sta_temporal_update(fd, carried, StaParams(2, 2))
        np.testing.assert_allclose(est[:, i], carried, rtol=1e-13)


def test_batched_run_matches_per_frame(rng):
    frames = np.stack([static_frame(rng, 12.0)[0] for _ in range(3)])
    for method in classical.METHODS:
        batch = classical.run_classical(frames, method).h_hat
        for f in range(3):
            np.testing.assert_allclose(batch[f], classical.run_classical(frames[f], method).h_hat)


@pytest.mark.parametrize("method", classical.METHODS)
def test_causality(rng, method):
    rx, _ = static_frame(rng, 10.0)
    base = classical.run_classical(rx, method).h_hat
    j = 20
    poked = rx.copy()
    poked[:, 2 + j] += 3.0 * (rng.standard_normal(52) + 1j * rng.standard_normal(52))
    moved = classical.run_classical(poked, method).h_hat
    np.testing.assert_array_equal(moved[:, :j], base[:, :j])


def test_trfi_pass_through_on_reliable(rng):
    rx, _ = static_frame(rng, 12.0)
    data = rx[:, 2:]
    carried = classical.preamble_estimate(rx)
    h_dpa_prev = carried
    for i in range(50):
        y_prev = data[:, i - 1] if i else None
        out, h_dpa, _ = classical.trfi_symbol(data[:, i], y_prev, carried, h_dpa_prev)
        if i:
            mask = classical.trfi_reliability(y_prev, h_dpa, h_dpa_prev).mask
            np.testing.assert_array_equal(out[mask], h_dpa[mask])
        carried, h_dpa_prev = out, h_dpa


def test_nmse():
    h = np.ones((2, 52, 50), dtype=complex)
    assert classical.nmse(h, h) == 0.0
    assert abs(classical.nmse(2 * h, h) - 1.0) < 1e-15
