import numpy as np
import pytest

from csifb import linksim as ls
from csifb.channel import ChannelProfile, default_subcarriers, frequency_response, generate_channel
from csifb.errors import ConfigurationError
from csifb.givens import LegacyCodec, PerfectCodec
from csifb.steering import compute_steering


def test_conv_encode_known_sequence():
    # impulse response of (133, 171): generator taps read MSB first
    out = ls.conv_encode(np.array([1, 0, 0, 0, 0, 0, 0]))
    g0 = [int(c) for c in format(0o133, "07b")]
    g1 = [int(c) for c in format(0o171, "07b")]
    assert out[0:14:2].tolist() == g0
    assert out[1:14:2].tolist() == g1
    assert out.size == 2 * (7 + 6)


def test_conv_encode_is_linear(rng):
    a = rng.integers(0, 2, 50, dtype=np.uint8)
    b = rng.integers(0, 2, 50, dtype=np.uint8)
    assert np.array_equal(ls.conv_encode(a ^ b), ls.conv_encode(a) ^ ls.conv_encode(b))


def test_viterbi_noiseless_and_with_errors(rng):
    bits = rng.integers(0, 2, (5, 200), dtype=np.uint8)
    llr = 1.0 - 2.0 * ls.conv_encode(bits)
    assert np.array_equal(ls.viterbi_decode(llr, 200), bits)
    # a few flipped hard decisions are corrected (free distance 10)
    hit = llr.copy()
    hit[:, [10, 100, 250]] *= -1
    assert np.array_equal(ls.viterbi_decode(hit, 200), bits)


def test_qam16_unit_energy_and_llr_signs(rng):
    bits = rng.integers(0, 2, (4000,), dtype=np.uint8)
    s = ls.qam16_map(bits)
    assert np.mean(np.abs(s) ** 2) == pytest.approx(1.0, rel=0.05)
    levels = np.unique(np.round(s.real / ls.QAM_SCALE))
    assert levels.tolist() == [-3, -1, 1, 3]
    llr = ls.qam16_llr(s, 0.01)
    assert np.array_equal(llr < 0, bits.astype(bool))


def test_qam16_gray_neighbours():
    pts = []
    for v in range(16):
        b = np.array([(v >> k) & 1 for k in (3, 2, 1, 0)], np.uint8)
        pts.append((ls.qam16_map(b)[0], b))
    step = 2 * ls.QAM_SCALE
    for p, b in pts:
        for q, c in pts:
            if abs(abs(p - q) - step) < 1e-9:
                assert int(np.sum(b != c)) == 1


def test_packet_layout():
    lay = ls.packet_layout(1000, 64, 2)
    assert lay.n_coded == 2012
    assert lay.n_ofdm == 4
    assert sorted(lay.perm.tolist()) == list(range(4 * 64 * 2 * 4))


def one_channel(seed=3):
    prof = ChannelProfile()
    return frequency_response(generate_channel(prof, seed), 256, default_subcarriers())


def test_high_and_low_snr_limits():
    fc = one_channel()
    q = compute_steering(fc.h, 2)
    assert all(ls.simulate_packet(fc, q, 40.0, 1000, s) for s in range(5))
    assert not any(ls.simulate_packet(fc, q, -15.0, 1000, s) for s in range(5))


def test_packet_is_deterministic():
    fc = one_channel()
    q = compute_steering(fc.h, 2)
    a = [ls.simulate_packet(fc, q, 2.0, 1000, s) for s in range(20)]
    b = [ls.simulate_packet(fc, q, 2.0, 1000, s) for s in range(20)]
    assert a == b


def test_bad_shapes():
    fc = one_channel()
    with pytest.raises(ConfigurationError):
        ls.simulate_packet(fc, np.zeros((64, 8, 3)), 10.0, 1000, 0)
    with pytest.raises(ConfigurationError):
        ls.SimConfig(n_c=3)


def test_per_monotone_in_snr_and_codec():
    cfg = ls.SimConfig(trials_per_point=150, snr_grid_db=(0.0, 3.0, 8.0))
    perfect = [p.per for p in ls.per_curve(cfg, PerfectCodec())]
    coarse = [p.per for p in ls.per_curve(cfg, LegacyCodec(2))]
    assert perfect[0] >= perfect[1] >= perfect[2]
    assert perfect[2] < 0.05 and perfect[0] > 0.5
    # common random numbers: coarser feedback never helps on average
    assert sum(coarse) >= sum(perfect)


def test_per_point_reproducible_and_threads_agree():
    cfg = ls.SimConfig(trials_per_point=40, batch=10)
    a = ls.per_point(cfg, LegacyCodec(4), 0, 3.0)
    b = ls.per_point(ls.SimConfig(trials_per_point=40, batch=10, threads=2), LegacyCodec(4), 0, 3.0)
    assert (a.trials, a.errors) == (b.trials, b.errors) == (40, a.errors)


def test_trial_seeds_distinct():
    seeds = {ls.trial_seeds(0, i, t) for i in range(3) for t in range(100)}
    assert len(seeds) == 300


def test_statistics():
    lo, hi = ls.wilson_interval(10, 100)
    assert lo < 0.1 < hi
    assert ls.wilson_interval(0, 0) == (0.0, 1.0)
    a, b = ls.PerPoint(0, 1000, 300), ls.PerPoint(0, 1000, 200)
    assert ls.significantly_greater(a, b)
    assert not ls.significantly_greater(ls.PerPoint(0, 1000, 205), b)
    assert not ls.significantly_greater(ls.PerPoint(0, 10, 0), ls.PerPoint(0, 10, 0))
    assert ls.not_less(b, b) and not ls.not_less(b, a)


def test_per_csv():
    text = ls.per_csv([("legacy", "", "n_b=4", ls.PerPoint(2.0, 10, 3))])
    assert text.splitlines() == ["scheme,variant,params,snr_db,trials,errors,per",
                                 "legacy,,n_b=4,2,10,3,0.300000"]


def test_paired_sign_test():
    fa = np.zeros(100, bool)
    fb = np.zeros(100, bool)
    fa[:10] = True  # a fails alone on 10 trials, b never fails alone
    a, b = ls.PerPoint(0, 100, 10, fa), ls.PerPoint(0, 100, 0, fb)
    sig, p = ls.paired_greater(a, b)
    assert sig and p == pytest.approx(2.0 ** -10)
    assert ls.paired_greater(b, a) == (False, 1.0)
    # 6 vs 4 discordant: P(X >= 6 | n=10) = 386/1024
    fa = np.zeros(100, bool)
    fb = np.zeros(100, bool)
    fa[:6] = True
    fb[10:14] = True
    sig, p = ls.paired_greater(ls.PerPoint(0, 100, 0, fa), ls.PerPoint(0, 100, 0, fb))
    assert not sig and p == pytest.approx(386 / 1024)
    with pytest.raises(ConfigurationError):
        ls.paired_greater(ls.PerPoint(0, 10, 1), b)


def test_per_point_keeps_outcomes():
    cfg = ls.SimConfig(trials_per_point=30, batch=7)
    p = ls.per_point(cfg, LegacyCodec(4), 0, 2.0)
    assert p.failures.shape == (30,) and int(p.failures.sum()) == p.errors
