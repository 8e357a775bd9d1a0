import csv
import io
from math import gamma

import numpy as np
import pytest

from csifb import kpi
from csifb.autoenc import AeCodec, AeScheme, init_fnn
from csifb.counting import MulCounter
from csifb.errors import ConfigurationError
from csifb.givens import legacy_encode_cbr
from csifb.kmeans import Codebook, kmeans_encode_cbr

from conftest import random_steering


def kilo(n):
    return int(np.floor(n / 1000 + 0.5))


def test_legacy_row():
    r = kpi.report({"scheme": "legacy", "n_b": 4})
    assert (r.feedback_bits_per_cbr, r.model_sharing_bits) == (8320, 0)
    assert r.multiplications_per_cbr == kpi.C_GIVENS


@pytest.mark.parametrize("n_bf,fb1,fb2,share1,share2,mul12,mul3", [
    (13, 832, 1664, 1065, 639, 13857, 15729),
    (14, 896, 1792, 2130, 1278, 27488, 31457),
    (15, 960, 1920, 4260, 2556, 54751, 62914),
    (16, 1024, 2048, 8520, 5112, 109277, 125829),
])
def test_kmeans_rows(n_bf, fb1, fb2, share1, share2, mul12, mul3):
    r1, r2, r3 = (kpi.report({"scheme": "kmeans", "variant": v, "n_bf": n_bf, "n_b": 4})
                  for v in ("joint", "split", "steering"))
    assert (r1.feedback_bits_per_cbr, r2.feedback_bits_per_cbr, r3.feedback_bits_per_cbr) == (fb1, fb2, fb1)
    assert kilo(r1.model_sharing_bits) == share1
    assert kilo(r2.model_sharing_bits) == share2
    assert r3.model_sharing_bits == r1.model_sharing_bits
    assert kilo(r1.multiplications_per_cbr) == mul12
    assert kilo(r2.multiplications_per_cbr) == mul12
    assert abs(kilo(r3.multiplications_per_cbr) - mul3) <= 0.005 * mul3


@pytest.mark.parametrize("n_l,fb,share,mul", [
    (6, 2880, 91, 84), (8, 3840, 94, 86), (12, 5760, 99, 91), (16, 7680, 104, 96)])
def test_qseries_rows(n_l, fb, share, mul):
    r = kpi.report({"scheme": "ae", "variant": "qseries", "n_l": n_l, "n_q": 16})
    assert r.feedback_bits_per_cbr == fb
    assert kilo(r.model_sharing_bits) == share
    assert kilo(r.multiplications_per_cbr) == mul


def test_angle_feedback():
    r = kpi.report({"scheme": "ae", "variant": "angle", "n_l_phi": 32, "n_l_psi": 16, "n_b": 4})
    assert r.feedback_bits_per_cbr == 3328


def test_ptq_model_bits():
    assert kpi.model_bits({"scheme": "ae", "variant": "qseries", "n_l": 6, "n_q": 16,
                           "ptq_bits": 8}) == 23_872


def test_bad_params():
    with pytest.raises(ConfigurationError):
        kpi.report({"scheme": "nope"})


def test_sweep_has_18_rows_and_csv_parses():
    rows = kpi.overhead_sweep()
    assert len(rows) == 18
    parsed = list(csv.DictReader(io.StringIO(kpi.to_csv(rows))))
    assert len(parsed) == 18
    assert parsed[0]["feedback_bits"] == "8320"
    md = kpi.to_markdown(rows)
    assert md.count("\n") >= 19 and "8320" in md


def test_k_round():
    assert kpi.k_round(8320) == "8320"
    assert kpi.k_round(225_512) == "226K"
    assert kpi.k_round(1_064_960) == "1065K"


def test_nmse_identity_and_floor(rng):
    q = random_steering(rng, 10, 8, 2)
    assert kpi.reconstruction_nmse(q, q) == kpi.NMSE_FLOOR_DB


def test_nmse_ignores_column_phase(rng):
    q = random_steering(rng, 10, 8, 2)
    rot = np.exp(1j * rng.uniform(0, 2 * np.pi, (10, 1, 2)))
    assert kpi.reconstruction_nmse(q, q * rot) == kpi.NMSE_FLOOR_DB


def test_nmse_random_pairs_match_closed_form(rng):
    # for independent uniform unit vectors in C^8, |<a,b>|^2 ~ Beta(1, 7), so the
    # phase-aligned squared error of a column is 2 - 2 E|<a,b>|
    e_abs = gamma(1.5) * gamma(8) / gamma(8.5)
    expected_db = 10 * np.log10(2 - 2 * e_abs)
    a = random_steering(rng, 20_000, 8, 2)
    b = random_steering(rng, 20_000, 8, 2)
    assert kpi.reconstruction_nmse(a, b) == pytest.approx(expected_db, abs=0.05)


def test_nmse_shape_mismatch(rng):
    with pytest.raises(ConfigurationError):
        kpi.reconstruction_nmse(np.zeros((2, 8, 2)), np.zeros((3, 8, 2)))


@pytest.mark.parametrize("variant,m", [("joint", 26), ("split", 13), ("steering", 30)])
def test_kmeans_counter_equals_formula(rng, variant, m):
    q = random_steering(rng, 64, 8, 2)
    cb = Codebook(rng.standard_normal((256, m)), variant, 8, 2, 8)
    ctr = MulCounter()
    kmeans_encode_cbr(q, cb, ctr)
    assert ctr.by_tag["search"] == kpi.kmeans_search_multiplications(variant, 8, 2, 64, 8)
    if variant != "steering":
        g = MulCounter()
        legacy_encode_cbr(q, 4, g)
        assert ctr.total - ctr.by_tag["search"] == g.total - g.by_tag.get("quantize", 0)


@pytest.mark.parametrize("variant", ["qseries", "angle"])
def test_ae_counter_equals_formula(rng, variant):
    q = random_steering(rng, 64, 8, 2)
    if variant == "qseries":
        params = {"scheme": "ae", "variant": "qseries", "n_l": 16, "n_q": 16}
        codec = AeCodec(AeScheme("qseries"), init_fnn([64, 40, 16]), init_fnn([16, 40, 64]))
    else:
        params = {"scheme": "ae", "variant": "angle", "n_l_phi": 32, "n_l_psi": 16, "n_b": 4}
        codec = AeCodec(AeScheme("angle"),
                        (init_fnn([64, 150, 32], ["tanh", "tanh"]), init_fnn([64, 150, 16], ["tanh", "tanh"])),
                        (init_fnn([32, 150, 64]), init_fnn([16, 150, 64])))
    ctr = MulCounter()
    codec.encode(q, ctr)
    assert ctr.by_tag["fnn"] == kpi.ae_forward_multiplications(params)


def test_instrumented_givens_count_is_stable():
    c = kpi.instrumented_givens_multiplications()
    assert c.total == kpi.instrumented_givens_multiplications(seed=5).total > 0
